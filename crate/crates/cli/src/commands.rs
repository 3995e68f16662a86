use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use offset_core::complexity_bounds::{
    bigglm_rate, chaining_bound, class_offset_mc, glm_bound, packing_bound, BoundInputs,
    OffsetConfig, OffsetKind, RateRegime,
};
use offset_core::estimators::{
    class_inputs, star_fit, star_fit_ball, BallStarOptions, ClassVariant, FunctionClass, Sample,
};
use offset_core::experiments::{run_rate_experiment, ExperimentConfig, ExperimentSpec};
use offset_core::loss_models::{eval_loss, LossModel};
use offset_core::margins::{run_suite, Suite, SuiteOptions};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::io::{
    decode, emit, envelope, json_text, merge_settings, read_class, read_json, read_sample, require,
    to_value,
};
use crate::plot::rate_plot;
use crate::{
    usage, BoundArgs, BoundKind, Cli, CliError, Command, ExperimentArgs, FitArgs, LossName,
    OffsetArgs, OffsetKindName, SuiteName, VerifyArgs,
};

pub fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let config = cli.config.as_deref();
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Verify(args) => verify(args, cli.seed, config, out),
        Command::Fit(args) => fit(args, cli.seed, config, out),
        Command::Offset(args) => offset(args, cli.seed, config, out),
        Command::Bound(args) => bound(args, config, out),
        Command::Experiment(args) => experiment(args, cli.seed, config, out),
    }
}

/// Flag values as a JSON object, with the global seed folded in.
fn flag_map<T: Serialize>(args: &T, seed: Option<u64>) -> Result<Value, CliError> {
    let mut v = to_value(args)?;
    if let (Some(seed), Value::Object(map)) = (seed, &mut v) {
        map.insert("seed".into(), Value::from(seed));
    }
    Ok(v)
}

#[derive(Debug, Serialize, Deserialize)]
struct VerifySettings {
    #[serde(default = "default_suite")]
    suite: SuiteName,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default = "default_grid")]
    grid: usize,
    #[serde(default = "default_star_instances")]
    star_instances: usize,
    #[serde(default)]
    tol: Option<f64>,
    #[serde(default)]
    seed: u64,
}

fn default_suite() -> SuiteName {
    SuiteName::All
}
fn default_trials() -> usize {
    SuiteOptions::default().trials
}
fn default_grid() -> usize {
    SuiteOptions::default().grid_size
}
fn default_star_instances() -> usize {
    SuiteOptions::default().star_instances
}

fn verify(
    args: &VerifyArgs,
    seed: Option<u64>,
    config: Option<&Path>,
    out: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let map = merge_settings(
        config,
        flag_map(args, seed)?,
        &["suite", "trials", "grid", "star_instances", "tol", "seed"],
    )?;
    let s: VerifySettings = decode(map)?;
    if let Some(tol) = s.tol {
        if !(tol >= 0.0) {
            return Err(usage(format!("tolerance must be nonnegative, got {tol}")));
        }
    }
    let suite = match s.suite {
        SuiteName::Margins => Suite::Margins,
        SuiteName::Losses => Suite::Losses,
        SuiteName::All => Suite::All,
    };
    let options = SuiteOptions {
        trials: s.trials,
        grid_size: s.grid,
        star_instances: s.star_instances,
        seed: s.seed,
        tolerance: s.tol,
    };
    let reports = run_suite(suite, &options)?;
    let violations: u64 = reports.iter().map(|r| r.violations).sum();
    for r in reports.iter().filter(|r| !r.passed()) {
        log::warn!(
            "{:?} on {}: {} of {} trials violated (worst slack {:e})",
            r.inequality_id,
            r.subject,
            r.violations,
            r.trials,
            r.worst_slack
        );
    }
    let result = json!({
        "reports": to_value(&reports)?,
        "total_violations": violations,
        "passed": violations == 0,
    });
    emit(
        out,
        &json_text(&envelope("verify", s.seed, to_value(&s)?, result))?,
    )?;
    Ok(if violations == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LossSettings {
    loss: Option<LossName>,
    p: Option<f64>,
    bound: Option<f64>,
    floor: Option<f64>,
    k: Option<usize>,
}

const LOSS_KEYS: [&str; 5] = ["loss", "p", "bound", "floor", "k"];

/// Loss model for a class; the likelihood floor defaults to the class
/// regularization level.
fn build_model(s: &LossSettings, class: &FunctionClass) -> Result<LossModel, CliError> {
    let loss = s.loss.ok_or_else(|| usage("missing parameter: loss"))?;
    let model = match loss {
        LossName::Square => LossModel::square(s.bound.unwrap_or(1.0))?,
        LossName::Ploss => {
            let p = s.p.ok_or_else(|| usage("missing parameter: p"))?;
            LossModel::p_loss(p, s.bound.unwrap_or(1.0))?
        }
        LossName::Log => {
            let floor = s
                .floor
                .or(class.delta)
                .ok_or_else(|| usage("missing parameter: floor"))?;
            LossModel::log(floor)?
        }
        LossName::Glm => {
            let k = match (&s.k, &class.variant) {
                (Some(k), _) => *k,
                (None, ClassVariant::LinearBall(ball)) => ball.k,
                (None, ClassVariant::Finite { .. }) => {
                    return Err(usage("missing parameter: k"));
                }
            };
            LossModel::glm(k, s.floor.or(class.delta).unwrap_or(0.0))?
        }
    };
    Ok(model)
}

#[derive(Debug, Serialize, Deserialize)]
struct FitSettings {
    data: Option<PathBuf>,
    class: Option<PathBuf>,
    #[serde(flatten)]
    loss: LossSettings,
    regularize: Option<f64>,
    #[serde(default = "default_candidates")]
    candidates: usize,
    #[serde(default)]
    seed: u64,
}

fn default_candidates() -> usize {
    BallStarOptions::default().candidates
}

struct Problem {
    sample: Sample,
    class: FunctionClass,
    model: LossModel,
}

fn load_problem(
    data: &Option<PathBuf>,
    class: &Option<PathBuf>,
    loss: &LossSettings,
    regularize: Option<f64>,
) -> Result<Problem, CliError> {
    let data = data
        .as_deref()
        .ok_or_else(|| usage("missing parameter: data"))?;
    let class_path = class
        .as_deref()
        .ok_or_else(|| usage("missing parameter: class"))?;
    let mut class = read_class(class_path)?;
    if let Some(delta) = regularize {
        class = class.with_delta(delta)?;
    }
    let model = build_model(loss, &class)?;
    let sample = read_sample(data)?;
    Ok(Problem {
        sample,
        class,
        model,
    })
}

fn member_risks(p: &Problem) -> Result<Vec<f64>, CliError> {
    let inputs = class_inputs(&p.model, &p.class, &p.sample)?;
    let n = p.sample.len() as f64;
    inputs
        .iter()
        .map(|row| {
            let total = row
                .iter()
                .zip(&p.sample.targets)
                .map(|(&v, &y)| eval_loss(&p.model, v, y))
                .sum::<Result<f64, _>>()?;
            Ok(total / n)
        })
        .collect()
}

fn fit(
    args: &FitArgs,
    seed: Option<u64>,
    config: Option<&Path>,
    out: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let mut known = vec!["data", "class", "regularize", "candidates", "seed"];
    known.extend(LOSS_KEYS);
    let s: FitSettings = decode(merge_settings(config, flag_map(args, seed)?, &known)?)?;
    let p = load_problem(&s.data, &s.class, &s.loss, s.regularize)?;
    let result = match &p.class.variant {
        ClassVariant::Finite { .. } => {
            let fit = star_fit(&p.model, &p.class, &p.sample)?;
            json!({
                "fit": to_value(&fit)?,
                "member_risks": to_value(&member_risks(&p)?)?,
            })
        }
        ClassVariant::LinearBall(ball) => {
            let options = BallStarOptions {
                candidates: s.candidates,
                seed: s.seed,
                ..BallStarOptions::default()
            };
            let fitted = star_fit_ball(&p.model, &p.class, &p.sample, &options)?;
            let mut r = Map::new();
            r.insert("fit".into(), to_value(&fitted.fit)?);
            r.insert(
                "candidate_count".into(),
                Value::from(fitted.candidates.members()?.len()),
            );
            if p.model.kind.is_likelihood() && ball.k >= 2 {
                // soft-max right inverse of the regularized star output per example
                let scores = p
                    .sample
                    .features
                    .iter()
                    .map(|x| fitted.scores(x))
                    .collect::<Result<Vec<_>, _>>()?;
                r.insert("scores".into(), to_value(&scores)?);
            }
            Value::Object(r)
        }
    };
    emit(
        out,
        &json_text(&envelope("fit", s.seed, to_value(&s)?, result))?,
    )?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize, Deserialize)]
struct OffsetSettings {
    data: Option<PathBuf>,
    class: Option<PathBuf>,
    #[serde(flatten)]
    loss: LossSettings,
    regularize: Option<f64>,
    #[serde(default = "default_draws")]
    draws: usize,
    #[serde(default = "default_kind")]
    kind: OffsetKindName,
    #[serde(default = "default_levels")]
    lambda_levels: usize,
    reference: Option<usize>,
    #[serde(default)]
    full: bool,
    #[serde(default)]
    seed: u64,
}

fn default_draws() -> usize {
    OffsetConfig::default().draws
}
fn default_kind() -> OffsetKindName {
    OffsetKindName::MuD
}
fn default_levels() -> usize {
    OffsetConfig::default().lambda_levels
}

fn offset(
    args: &OffsetArgs,
    seed: Option<u64>,
    config: Option<&Path>,
    out: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let mut known = vec![
        "data",
        "class",
        "regularize",
        "draws",
        "kind",
        "lambda_levels",
        "reference",
        "full",
        "seed",
    ];
    known.extend(LOSS_KEYS);
    let s: OffsetSettings = decode(merge_settings(config, flag_map(args, seed)?, &known)?)?;
    if s.draws == 0 {
        return Err(usage("draws must be at least 1"));
    }
    let p = load_problem(&s.data, &s.class, &s.loss, s.regularize)?;
    let kind = match s.kind {
        OffsetKindName::MuD => OffsetKind::MuD,
        OffsetKindName::ExpConcave => OffsetKind::ExpConcave,
        OffsetKindName::UniformConvex => OffsetKind::UniformConvex,
    };
    let oc = OffsetConfig {
        kind,
        draws: s.draws,
        lambda_levels: s.lambda_levels,
        seed: s.seed,
    };
    let estimate = class_offset_mc(&p.model, &p.class, &p.sample, s.reference, &oc)?;
    let mut result = to_value(&estimate)?;
    if !s.full {
        if let Value::Object(map) = &mut result {
            map.remove("per_draw_sup");
        }
    }
    emit(
        out,
        &json_text(&envelope("offset", s.seed, to_value(&s)?, result))?,
    )?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize, Deserialize)]
struct GlmParams {
    n: f64,
    rho: f64,
    #[serde(default = "one")]
    c: f64,
    k: f64,
    d: f64,
    a: f64,
    b: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RateParams {
    q: f64,
    regime: RateRegime,
    a: f64,
    n: f64,
}

fn one() -> f64 {
    1.0
}

/// `key=value` with `value` parsed as JSON, or taken as a string.
fn parse_param(s: &str) -> Result<(String, Value), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| usage(format!("--param expects KEY=VALUE, got {s:?}")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::from(v));
    Ok((k.trim().to_string(), value))
}

/// A finite-class entropy may be given by its prediction vectors.
fn expand_entropy(map: &mut Map<String, Value>) -> Result<(), CliError> {
    let Some(Value::Object(entropy)) = map.get_mut("entropy") else {
        return Ok(());
    };
    if let Some(vectors) = entropy.remove("vectors") {
        let vectors: Vec<Vec<f64>> =
            serde_json::from_value(vectors).map_err(|e| usage(format!("entropy vectors: {e}")))?;
        let cover = offset_core::complexity_bounds::GreedyCover::new(&vectors)?;
        entropy.insert("cover".into(), to_value(&cover)?);
    }
    Ok(())
}

fn bound(
    args: &BoundArgs,
    config: Option<&Path>,
    out: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let mut map = Map::new();
    for path in [config, args.params.as_deref()].into_iter().flatten() {
        match read_json(path)? {
            Value::Object(m) => map.extend(m),
            _ => {
                return Err(usage(format!(
                    "{}: parameters must be a JSON object",
                    path.display()
                )))
            }
        }
    }
    for p in &args.param {
        let (k, v) = parse_param(p)?;
        map.insert(k, v);
    }
    let (inputs, result) = match args.kind {
        BoundKind::Packing | BoundKind::Chaining => {
            require(&map, &["m", "eta", "n", "rho", "eps", "entropy"])?;
            if args.kind == BoundKind::Chaining {
                require(&map, &["gamma"])?;
            }
            expand_entropy(&mut map)?;
            let inputs: BoundInputs = decode(map)?;
            let result = if args.kind == BoundKind::Packing {
                json!({ "value": packing_bound(&inputs)? })
            } else {
                let v = chaining_bound(&inputs)?;
                json!({ "value": v.value, "alpha": v.alpha })
            };
            (to_value(&inputs)?, result)
        }
        BoundKind::Glm => {
            require(&map, &["n", "rho", "k", "d", "a", "b"])?;
            let g: GlmParams = decode(map)?;
            let value = glm_bound(g.n, g.rho, g.c, g.k, g.d, g.a, g.b)?;
            (to_value(&g)?, json!({ "value": value }))
        }
        BoundKind::Bigglm => {
            require(&map, &["q", "regime", "a", "n"])?;
            let r: RateParams = decode(map)?;
            let value = bigglm_rate(r.q, r.regime, r.a, r.n)?;
            (to_value(&r)?, json!({ "value": value }))
        }
    };
    let mut result = result;
    if let Value::Object(m) = &mut result {
        m.insert("kind".into(), to_value(&args.kind)?);
    }
    emit(out, &json_text(&envelope("bound", 0, inputs, result))?)?;
    Ok(ExitCode::SUCCESS)
}

fn experiment(
    args: &ExperimentArgs,
    seed: Option<u64>,
    config: Option<&Path>,
    out: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let known = [
        "name",
        "n_grid",
        "replications",
        "seed",
        "oracle_size",
        "p",
        "bound",
        "d",
        "k",
        "delta",
        "noise",
        "c",
        "members",
        "member_radius",
        "misspecification",
        "w_true",
        "candidates",
        "rho",
    ];
    let map = merge_settings(config, flag_map(args, seed)?, &known)?;
    let spec: ExperimentSpec = decode(map)?;
    let resolved =
        ExperimentConfig::resolve(&spec).map_err(|e| usage(format!("experiment config: {e}")))?;
    let dir = out.ok_or_else(|| usage("missing parameter: out (output directory)"))?;
    std::fs::create_dir_all(dir)?;
    let outcome = run_rate_experiment(&resolved)?;

    let mut writer = csv::Writer::from_path(dir.join("results.csv"))?;
    for record in &outcome.records {
        writer.serialize(record)?;
    }
    writer.flush()?;

    let result = json!({
        "experiment": resolved.name.as_str(),
        "reports": to_value(&outcome.reports)?,
        "bound_rows": to_value(&outcome.bound_rows)?,
    });
    let summary = envelope("experiment", resolved.seed, to_value(&resolved)?, result);
    let text = json_text(&summary)?;
    std::fs::write(dir.join("summary.json"), &text)?;
    std::fs::write(
        dir.join("plot.svg"),
        rate_plot(resolved.name.as_str(), &outcome.reports),
    )
    .map_err(|e| anyhow!("cannot write plot: {e}"))?;
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}
