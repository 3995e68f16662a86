use rayon::prelude::*;
use serde::Serialize;

use super::generators::{gen_logistic_data, gen_logistic_features, gen_twopoint_data, PLossDesign};
use super::{fit_rate, ExperimentConfig, ExperimentName, RateReport, RateRow};
use crate::complexity_bounds::{
    entropy_eval, packing_bound, quantile, BoundInputs, EntropyProfile, EntropySource,
};
use crate::error::{Error, Result};
use crate::estimators::{
    dot, regularized_star_glm, star_select, validate_inputs, BallStarOptions, LinearBall, LinkSpec,
    Predictor,
};
use crate::loss_models::{link_softmax, psi, LossKind, LossModel};
use crate::seed::derive_seed;

/// Seed path component reserved for oracle samples.
const ORACLE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcessRecord {
    pub experiment: ExperimentName,
    pub estimator: String,
    pub n: usize,
    pub replication: usize,
    pub excess_risk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundRow {
    pub n: usize,
    pub empirical_q95: f64,
    pub packing_bound: f64,
    /// Entropy value fed to the bound.
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub reports: Vec<RateReport>,
    pub records: Vec<ExcessRecord>,
    pub bound_rows: Vec<BoundRow>,
}

impl ExperimentOutcome {
    pub fn report(&self, estimator: &str) -> Option<&RateReport> {
        self.reports.iter().find(|r| r.estimator == estimator)
    }
}

/// Runs every `(n, replication)` task in parallel; results are folded in
/// grid order, so the outcome does not depend on scheduling.
fn replicate<F>(
    config: &ExperimentConfig,
    estimators: &[&str],
    task: F,
) -> Result<ExperimentOutcome>
where
    F: Fn(usize, usize, u64) -> Result<Vec<f64>> + Sync,
{
    let tasks: Vec<(usize, usize)> = config
        .n_grid
        .iter()
        .flat_map(|&n| (0..config.replications).map(move |r| (n, r)))
        .collect();
    let results: Vec<Result<Vec<f64>>> = tasks
        .par_iter()
        .map(|&(n, r)| task(n, r, derive_seed(config.seed, &[n as u64, r as u64])))
        .collect();
    let mut records = Vec::with_capacity(tasks.len() * estimators.len());
    for (&(n, r), result) in tasks.iter().zip(results) {
        let values = result?;
        for (name, &excess_risk) in estimators.iter().zip(&values) {
            records.push(ExcessRecord {
                experiment: config.name,
                estimator: name.to_string(),
                n,
                replication: r,
                excess_risk,
            });
        }
    }
    let reports = estimators
        .iter()
        .map(|name| rate_report(config, name, &records))
        .collect();
    Ok(ExperimentOutcome {
        config: config.clone(),
        reports,
        records,
        bound_rows: Vec::new(),
    })
}

fn rate_report(config: &ExperimentConfig, estimator: &str, records: &[ExcessRecord]) -> RateReport {
    let rows: Vec<RateRow> = config
        .n_grid
        .iter()
        .map(|&n| {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.n == n && r.estimator == estimator)
                .map(|r| r.excess_risk)
                .collect();
            let k = values.len() as f64;
            let mean = values.iter().sum::<f64>() / k;
            let var = if values.len() > 1 {
                values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            RateRow {
                n,
                mean_excess_risk: mean,
                standard_error: (var / k).sqrt(),
                q95: quantile(&values, 0.95),
            }
        })
        .collect();
    let points: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.n as f64, r.mean_excess_risk))
        .collect();
    let (slope, intercept, r_squared) = match fit_rate(&points) {
        Ok(fit) => fit,
        Err(e) => {
            log::warn!("no rate fit for {estimator}: {e}");
            (f64::NAN, f64::NAN, f64::NAN)
        }
    };
    RateReport {
        experiment: config.name,
        estimator: estimator.to_string(),
        rows,
        slope,
        intercept,
        r_squared,
    }
}

pub fn run_rate_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    match config.name {
        ExperimentName::LogisticRate => logistic_rate(config),
        ExperimentName::PlossRate => ploss_rate(config),
        ExperimentName::NonconvexGap => nonconvex_gap(config),
        ExperimentName::BoundVsEmpirical => bound_vs_empirical(config),
    }
}

/// Excess log-risk of predicted label distributions against the true
/// model, `E_x KL(p_true(x) || q(x))` over a fixed oracle feature sample.
struct LogisticOracle {
    features: Vec<Vec<f64>>,
    truth: Vec<Vec<f64>>,
}

impl LogisticOracle {
    fn new(config: &ExperimentConfig) -> Self {
        let features = gen_logistic_features(
            config.oracle_size,
            config.d,
            derive_seed(config.seed, &[ORACLE_STREAM]),
        );
        let truth = features
            .iter()
            .map(|x| link_softmax(&scores(&config.w_true, x)))
            .collect();
        Self { features, truth }
    }

    fn excess<F: Fn(&[f64]) -> Vec<f64>>(&self, q: F) -> f64 {
        let total: f64 = self
            .features
            .iter()
            .zip(&self.truth)
            .map(|(x, p)| {
                q(x).iter()
                    .zip(p)
                    .map(|(qj, pj)| {
                        if *pj > 0.0 {
                            pj * (pj.ln() - qj.ln())
                        } else {
                            0.0
                        }
                    })
                    .sum::<f64>()
            })
            .sum();
        total / self.features.len() as f64
    }
}

fn scores(w: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    w.iter().map(|row| dot(row, x)).collect()
}

fn linear_weights(p: &Predictor) -> Result<&[Vec<f64>]> {
    match p {
        Predictor::Linear(lin) => Ok(&lin.weights),
        _ => Err(Error::invalid("expected a linear predictor")),
    }
}

fn logistic_rate(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let oracle = LogisticOracle::new(config);
    let ball = LinearBall {
        d: config.d,
        k: config.k,
        bound: config.bound,
        link: LinkSpec::Softmax,
    };
    let kf = config.k as f64;
    replicate(config, &["star", "erm"], |n, _, seed| {
        let sample = gen_logistic_data(n, config.d, config.k, config.bound, &config.w_true, seed)?;
        let delta = config.delta.unwrap_or(1.0 / n as f64).min(0.5);
        let model = LossModel::glm(config.k, delta)?;
        let options = BallStarOptions {
            candidates: config.candidates,
            seed: derive_seed(seed, &[1]),
            ..BallStarOptions::default()
        };
        let fit = regularized_star_glm(&model, &ball, &sample, delta, &options)?;
        let we = linear_weights(&fit.fit.erm)?;
        let wp = linear_weights(&fit.fit.partner)?;
        let lambda = fit.fit.lambda;
        let star = oracle.excess(|x| {
            let a = link_softmax(&scores(we, x));
            let b = link_softmax(&scores(wp, x));
            a.iter()
                .zip(&b)
                .map(|(u, v)| (1.0 - delta) * (lambda * u + (1.0 - lambda) * v) + delta / kf)
                .collect()
        });
        let mle = linear_weights(&fit.candidates.members()?[0])?;
        let erm = oracle.excess(|x| link_softmax(&scores(mle, x)));
        Ok(vec![star, erm])
    })
}

fn ploss_design(config: &ExperimentConfig) -> Result<(PLossDesign, LossModel)> {
    let design = PLossDesign {
        members: config.members,
        radius: config.member_radius,
        misspecification: config.misspecification,
        noise: config.noise,
    };
    if design.members < 1 {
        return Err(Error::invalid("the p-loss class needs at least one member"));
    }
    let model = LossModel::p_loss(config.p, config.bound)?;
    if design.target_bound() > config.bound || design.radius * 2f64.sqrt() > config.bound {
        return Err(Error::invalid(format!(
            "p-loss design leaves [-B, B] = [-{b}, {b}]; reduce member_radius, \
             misspecification or noise",
            b = config.bound
        )));
    }
    Ok((design, model))
}

/// Risk differences against member 0 (the hull minimizer) on an
/// antithetic oracle sample, which keeps every estimate nonnegative.
struct PLossOracle {
    x1: Vec<f64>,
    x3: Vec<f64>,
    y: Vec<f64>,
    base: f64,
    kind: LossKind,
}

impl PLossOracle {
    fn new(config: &ExperimentConfig, design: &PLossDesign, model: &LossModel) -> Result<Self> {
        let oracle = design.sample(
            config.oracle_size,
            derive_seed(config.seed, &[ORACLE_STREAM]),
            true,
        )?;
        let mut o = Self {
            x1: oracle.features.iter().map(|x| x[0]).collect(),
            x3: oracle.features.iter().map(|x| x[2]).collect(),
            y: oracle.targets,
            base: 0.0,
            kind: model.kind,
        };
        o.base = o.risk(design.member_weights()[0]);
        Ok(o)
    }

    fn risk(&self, w: [f64; 2]) -> f64 {
        let total: f64 = (0..self.y.len())
            .map(|i| psi(&self.kind, w[0] * self.x1[i] + w[1] * self.x3[i], self.y[i]))
            .sum();
        total / self.y.len() as f64
    }

    fn excess(&self, w: [f64; 2]) -> f64 {
        self.risk(w) - self.base
    }
}

struct PLossRun {
    outcome: ExperimentOutcome,
    design: PLossDesign,
    model: LossModel,
}

fn ploss_run(config: &ExperimentConfig) -> Result<PLossRun> {
    let (design, model) = ploss_design(config)?;
    let oracle = PLossOracle::new(config, &design, &model)?;
    let weights = design.member_weights();
    let outcome = replicate(config, &["star", "erm"], |n, _, seed| {
        let sample = design.sample(n, seed, false)?;
        let inputs: Vec<Vec<f64>> = weights
            .iter()
            .map(|w| {
                sample
                    .features
                    .iter()
                    .map(|x| w[0] * x[0] + w[1] * x[2])
                    .collect()
            })
            .collect();
        for row in &inputs {
            validate_inputs(&model, row, &sample.targets)?;
        }
        let sel = star_select(&model, &inputs, &sample.targets);
        let (we, ws) = (weights[sel.erm], weights[sel.partner]);
        let l = sel.lambda;
        let star = [l * we[0] + (1.0 - l) * ws[0], l * we[1] + (1.0 - l) * ws[1]];
        Ok(vec![oracle.excess(star), oracle.excess(we)])
    })?;
    Ok(PLossRun {
        outcome,
        design,
        model,
    })
}

fn ploss_rate(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    Ok(ploss_run(config)?.outcome)
}

fn nonconvex_gap(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let (c, sigma) = (config.c, config.noise);
    let model = LossModel::square(c + 12.0 * sigma)?;
    replicate(config, &["star", "erm"], |n, _, seed| {
        let b = sigma / (4.0 * (n as f64).sqrt());
        let (sample, _) = gen_twopoint_data(n, c, b, sigma, seed)?;
        let inputs = vec![vec![c; n], vec![-c; n]];
        validate_inputs(&model, &inputs[0], &sample.targets)?;
        let sel = star_select(&model, &inputs, &sample.targets);
        let members = [c, -c];
        let star = sel.lambda * members[sel.erm] + (1.0 - sel.lambda) * members[sel.partner];
        // the risk minimizer over the hull is the constant b
        Ok(vec![(star - b).powi(2), (members[sel.erm] - b).powi(2)])
    })
}

/// The p-loss experiment together with, per `n`, the empirical 95th
/// percentile of the star excess risk and the packing bound at
/// `rho`, `eps = 1/n`, with entropy `H_2(eps / lip, F) + ln(2 / eps)` where
/// the first term comes from a greedy cover of the class on the first
/// replication's sample.
pub fn bound_vs_empirical(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let run = ploss_run(config)?;
    let mut outcome = run.outcome;
    let weights = run.design.member_weights();
    let star = outcome
        .report("star")
        .ok_or_else(|| Error::invalid("missing star report"))?
        .clone();
    for row in &star.rows {
        let n = row.n;
        let sample = run
            .design
            .sample(n, derive_seed(config.seed, &[n as u64, 0]), false)?;
        let vectors: Vec<Vec<f64>> = weights
            .iter()
            .map(|w| {
                sample
                    .features
                    .iter()
                    .map(|x| w[0] * x[0] + w[1] * x[2])
                    .collect()
            })
            .collect();
        let eps = 1.0 / n as f64;
        let cover = EntropyProfile::finite_empirical(&vectors)?;
        let h = entropy_eval(&cover, eps / run.model.lip)? + (2.0 / eps).ln();
        let inputs = BoundInputs {
            m: run.model.m,
            eta: run.model.eta,
            n: n as f64,
            rho: config.rho,
            eps,
            alpha: None,
            gamma: None,
            c: 1.0,
            entropy: EntropyProfile::new(EntropySource::Fixed { h }),
        };
        outcome.bound_rows.push(BoundRow {
            n,
            empirical_q95: row.q95,
            packing_bound: packing_bound(&inputs)?,
            entropy: h,
        });
    }
    outcome.config = config.clone();
    Ok(outcome)
}
