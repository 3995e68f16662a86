//! Bregman gaps and numerical certification of the margin inequalities that
//! drive localization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{
    class_inputs, materialize_segment, materialize_simplex, risk_of, validate_inputs,
    FunctionClass, Sample, StarFit,
};
use crate::loss_models::{
    canonical_modulus, dpsi, eval_loss, grad_loss, hess_loss, link_right_inverse, link_softmax,
    omega, psi, regularization_lower_threshold, regularization_upper_gap, regularize_simplex,
    DistanceKind, LossKind, LossModel, ModulusDescriptor, MuKind, TargetSpace,
};
use crate::seed::rng_from;

/// Absolute tolerance for inequality checks.
pub const INEQUALITY_TOL: f64 = 1e-8;
/// Absolute tolerance for identities.
pub const IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InequalityId {
    /// Bregman gap dominates `mu(d(x, y))`.
    MuDConvexity,
    BregmanNonnegative,
    /// Square-loss gap equals `(x - y)^2`.
    SquareGapIdentity,
    /// Log-loss gap equals `e^(-z) - 1 + z` with `z = ln(y / x)`.
    LogGapIdentity,
    ErmMargin,
    StarMargin,
    ExpConcaveMargin,
    SelfConcordantGap,
    /// For `-ln` and `x >= y` the self-concordant bound is an equality.
    SelfConcordantSaturation,
    LogMarginScalar,
    Contraction,
    GradientFiniteDifference,
    RangeBound,
    ExpConcavityMidpoint,
    LipschitzBound,
    RegularizationSandwich,
    LinkRoundTrip,
}

/// Outcome of one batch of checks. `slack` is `LHS - RHS` for inequalities
/// and `-|LHS - RHS|` for identities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginCheckReport {
    pub inequality_id: InequalityId,
    pub subject: String,
    pub trials: u64,
    pub violations: u64,
    /// Minimum slack over all trials; `+inf` before any trial.
    pub worst_slack: f64,
    pub tolerance: f64,
    #[serde(skip)]
    slacks: Vec<f64>,
}

impl MarginCheckReport {
    pub fn new(inequality_id: InequalityId, subject: impl Into<String>, tolerance: f64) -> Self {
        Self {
            inequality_id,
            subject: subject.into(),
            trials: 0,
            violations: 0,
            worst_slack: f64::INFINITY,
            tolerance,
            slacks: Vec::new(),
        }
    }

    /// Records one trial; NaN counts as a violation.
    pub fn record(&mut self, slack: f64) {
        self.trials += 1;
        self.slacks.push(slack);
        if !(slack >= -self.tolerance) {
            self.violations += 1;
        }
        if slack.is_nan() {
            self.worst_slack = f64::NAN;
        } else if !self.worst_slack.is_nan() {
            self.worst_slack = self.worst_slack.min(slack);
        }
    }

    pub fn record_identity(&mut self, lhs: f64, rhs: f64) {
        self.record(-(lhs - rhs).abs());
    }

    /// Associative merge of reports on the same inequality.
    pub fn merge(mut self, other: &MarginCheckReport) -> Self {
        self.trials += other.trials;
        self.violations += other.violations;
        self.slacks.extend_from_slice(&other.slacks);
        self.worst_slack = if self.worst_slack.is_nan() || other.worst_slack.is_nan() {
            f64::NAN
        } else {
            self.worst_slack.min(other.worst_slack)
        };
        self
    }

    /// Recounts violations against a new tolerance.
    pub fn set_tolerance(&mut self, tolerance: f64) {
        self.tolerance = tolerance;
        self.violations = self.slacks.iter().filter(|&&s| !(s >= -tolerance)).count() as u64;
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// `psi(x) - psi(y) - psi'(y) (x - y)`.
pub fn bregman_gap(model: &LossModel, x: f64, y: f64, target: f64) -> Result<f64> {
    Ok(eval_loss(model, x, target)?
        - eval_loss(model, y, target)?
        - grad_loss(model, y, target)? * (x - y))
}

fn gap_unchecked(kind: &LossKind, x: f64, y: f64, t: f64) -> f64 {
    psi(kind, x, t) - psi(kind, y, t) - dpsi(kind, y, t) * (x - y)
}

/// A target inside the model's target space.
fn draw_target(model: &LossModel, rng: &mut ChaCha8Rng) -> f64 {
    match model.target_space {
        TargetSpace::Interval { lo, hi } => rng.random_range(lo..=hi),
        TargetSpace::Labels { k } => rng.random_range(1..=k) as f64,
        TargetSpace::Any => 0.0,
    }
}

/// Seeded `(x, y, target)` triples uniform over the domain box; 1% of pairs
/// are degenerate (`x = y`).
pub fn random_pairs(model: &LossModel, trials: usize, seed: u64) -> Vec<(f64, f64, f64)> {
    let mut rng = rng_from(seed, &[0x7061_6972]);
    let (lo, hi) = model.domain;
    (0..trials)
        .map(|_| {
            let x = rng.random_range(lo..=hi);
            let y = if rng.random::<f64>() < 0.01 {
                x
            } else {
                rng.random_range(lo..=hi)
            };
            (x, y, draw_target(model, &mut rng))
        })
        .collect()
}

fn grid(lo: f64, hi: f64, size: usize) -> Vec<f64> {
    (0..size)
        .map(|i| lo + (hi - lo) * i as f64 / (size - 1) as f64)
        .collect()
}

fn target_grid(model: &LossModel, size: usize) -> Vec<f64> {
    match model.target_space {
        TargetSpace::Interval { lo, hi } => grid(lo, hi, size.clamp(2, 21)),
        TargetSpace::Labels { .. } => vec![1.0],
        TargetSpace::Any => vec![0.0],
    }
}

/// Checks the Bregman gap against the model's canonical modulus on all grid
/// pairs plus 10^4 seeded random pairs.
pub fn certify_mu_d_convexity(
    model: &LossModel,
    grid_size: usize,
    seed: u64,
) -> Result<MarginCheckReport> {
    certify_with(model, &model.modulus, grid_size, 10_000, seed)
}

/// [`certify_mu_d_convexity`] for an arbitrary descriptor.
pub fn certify_with(
    model: &LossModel,
    descriptor: &ModulusDescriptor,
    grid_size: usize,
    random_trials: usize,
    seed: u64,
) -> Result<MarginCheckReport> {
    if grid_size < 2 {
        return Err(Error::invalid("grid_size must be at least 2"));
    }
    let mut report = MarginCheckReport::new(
        InequalityId::MuDConvexity,
        format!("{} / {}", model_name(model), descriptor_name(descriptor)),
        INEQUALITY_TOL,
    );
    let points = grid(model.domain.0, model.domain.1, grid_size);
    let mut check = |x: f64, y: f64, t: f64| -> Result<()> {
        let gap = gap_unchecked(&model.kind, x, y, t);
        report.record(gap - descriptor.modulus(model, x, y, t)?);
        Ok(())
    };
    for &t in &target_grid(model, grid_size) {
        for &x in &points {
            for &y in &points {
                check(x, y, t)?;
            }
        }
    }
    for (x, y, t) in random_pairs(model, random_trials, seed) {
        check(x, y, t)?;
    }
    Ok(report)
}

pub(crate) fn model_name(model: &LossModel) -> String {
    match model.kind {
        LossKind::Square => format!("square B={}", model.bound.unwrap_or(f64::NAN)),
        LossKind::PLoss { p } => format!("p-loss p={p} B={}", model.bound.unwrap_or(f64::NAN)),
        LossKind::Log => format!("log floor={}", model.floor()),
        LossKind::Glm { k, .. } => format!("glm k={k} floor={}", model.floor()),
    }
}

fn descriptor_name(d: &ModulusDescriptor) -> String {
    let mu = match d.mu {
        MuKind::Quadratic { coef } => format!("{coef:.6} z^2"),
        MuKind::Power { p, alpha } => format!("{alpha:.6} z^{p}"),
        MuKind::Omega => "omega".to_string(),
    };
    let dist = match d.d {
        DistanceKind::Absolute => "|x-y|",
        DistanceKind::LogMetric => "|ln x - ln y|",
        DistanceKind::LossIncrement => "|psi(x)-psi(y)|",
        DistanceKind::LocalNorm => "local norm",
    };
    format!("{mu} of {dist}")
}

/// `mu^{-1}((1/n) sum mu(d(f_i, g_i)))` for the canonical descriptor.
pub fn empirical_metric(
    model: &LossModel,
    preds_f: &[f64],
    preds_g: &[f64],
    targets: &[f64],
) -> Result<f64> {
    validate_inputs(model, preds_f, targets)?;
    validate_inputs(model, preds_g, targets)?;
    let mut total = 0.0;
    for ((&f, &g), &t) in preds_f.iter().zip(preds_g).zip(targets) {
        total += canonical_modulus(model, f, g, t)?;
    }
    Ok(model.modulus.mu_inverse(total / targets.len() as f64))
}

/// `(1/n) sum mu(d(f_i, g_i) / scale)`.
fn mean_modulus(
    model: &LossModel,
    f: &[f64],
    g: &[f64],
    targets: &[f64],
    scale: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for ((&a, &b), &t) in f.iter().zip(g).zip(targets) {
        let d = model.modulus.distance(model, a, b, t)?;
        total += model.modulus.mu(d / scale);
    }
    Ok(total / targets.len() as f64)
}

/// A convex class given by its extreme prediction vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexHull {
    Segment([Vec<f64>; 2]),
    Simplex([Vec<f64>; 3]),
}

impl ConvexHull {
    pub fn materialize(&self, resolution: f64) -> Result<Vec<Vec<f64>>> {
        match self {
            ConvexHull::Segment([a, b]) => materialize_segment(a, b, resolution),
            ConvexHull::Simplex(v) => materialize_simplex(v, resolution),
        }
    }
}

/// Margin of the exact risk minimizer `erm_preds` over a convex hull: every
/// member `g` of the materialized grid must satisfy
/// `E_n psi(g) - E_n psi(f_hat) >= E_n mu(d(g, f_hat))`.
pub fn erm_margin_check(
    model: &LossModel,
    hull: &ConvexHull,
    targets: &[f64],
    erm_preds: &[f64],
    resolution: f64,
) -> Result<MarginCheckReport> {
    validate_inputs(model, erm_preds, targets)?;
    let members = hull.materialize(resolution)?;
    let base = risk_of(model, erm_preds, targets);
    let mut report =
        MarginCheckReport::new(InequalityId::ErmMargin, model_name(model), INEQUALITY_TOL);
    for g in &members {
        validate_inputs(model, g, targets)?;
        let lhs = risk_of(model, g, targets) - base;
        report.record(lhs - mean_modulus(model, g, erm_preds, targets, 1.0)?);
    }
    Ok(report)
}

/// Star margin on loss-input vectors: every member `g` must satisfy
/// `E_n psi(g) - E_n psi(f_star) >= E_n mu(d(g, f_star) / 3)`.
pub fn star_margin_check_inputs(
    model: &LossModel,
    member_inputs: &[Vec<f64>],
    star_inputs: &[f64],
    targets: &[f64],
) -> Result<MarginCheckReport> {
    validate_inputs(model, star_inputs, targets)?;
    let base = risk_of(model, star_inputs, targets);
    let mut report =
        MarginCheckReport::new(InequalityId::StarMargin, model_name(model), INEQUALITY_TOL);
    for g in member_inputs {
        validate_inputs(model, g, targets)?;
        let lhs = risk_of(model, g, targets) - base;
        report.record(lhs - mean_modulus(model, g, star_inputs, targets, 3.0)?);
    }
    Ok(report)
}

/// Star margin of a fit against every member of the (finite) class it was fitted on.
pub fn star_margin_check(
    model: &LossModel,
    class: &FunctionClass,
    sample: &Sample,
    fit: &StarFit,
) -> Result<MarginCheckReport> {
    let members = class_inputs(model, class, sample)?;
    let star = class.loss_inputs(model, &fit.combined, sample)?;
    star_margin_check_inputs(model, &members, &star, &sample.targets)
}

/// `gap >= |psi(x) - psi(y)|^2 / (2m v 4/eta)` on random pairs.
pub fn exp_concave_margin_check(model: &LossModel, trials: usize, seed: u64) -> MarginCheckReport {
    let denom = (2.0 * model.m).max(4.0 / model.eta);
    let mut report = MarginCheckReport::new(
        InequalityId::ExpConcaveMargin,
        model_name(model),
        INEQUALITY_TOL,
    );
    for (x, y, t) in random_pairs(model, trials, seed) {
        let inc = psi(&model.kind, x, t) - psi(&model.kind, y, t);
        report.record(gap_unchecked(&model.kind, x, y, t) - inc * inc / denom);
    }
    report
}

fn require_likelihood(model: &LossModel) -> Result<()> {
    if model.kind.is_likelihood() {
        Ok(())
    } else {
        Err(Error::invalid(
            "self-concordance checks apply to log and GLM losses",
        ))
    }
}

/// `gap(x, y) >= omega(|x - y| sqrt(psi''(y)))` on random pairs.
pub fn self_concordant_gap_check(
    model: &LossModel,
    trials: usize,
    seed: u64,
) -> Result<MarginCheckReport> {
    require_likelihood(model)?;
    let mut report = MarginCheckReport::new(
        InequalityId::SelfConcordantGap,
        model_name(model),
        INEQUALITY_TOL,
    );
    for (x, y, t) in random_pairs(model, trials, seed) {
        let norm = (x - y).abs() * hess_loss(model, y, t)?.sqrt();
        report.record(gap_unchecked(&model.kind, x, y, t) - omega(norm));
    }
    Ok(report)
}

/// For `-ln` and `x >= y` the gap equals `omega` of the local norm.
pub fn self_concordant_saturation_check(
    model: &LossModel,
    trials: usize,
    seed: u64,
) -> Result<MarginCheckReport> {
    require_likelihood(model)?;
    let mut report = MarginCheckReport::new(
        InequalityId::SelfConcordantSaturation,
        model_name(model),
        IDENTITY_TOL,
    );
    for (x, y, t) in random_pairs(model, trials, seed) {
        let (x, y) = if x >= y { (x, y) } else { (y, x) };
        let norm = (x - y) * hess_loss(model, y, t)?.sqrt();
        report.record_identity(gap_unchecked(&model.kind, x, y, t), omega(norm));
    }
    Ok(report)
}

/// `e^(-z) + z - 1 >= z^2 / (2c v 4)` on a grid of `points` over `[-c, c]`.
pub fn log_margin_scalar_check(c: f64, points: usize) -> Result<MarginCheckReport> {
    if !(c > 0.0) || points < 2 {
        return Err(Error::invalid("need c > 0 and at least two points"));
    }
    let denom = (2.0 * c).max(4.0);
    let mut report = MarginCheckReport::new(
        InequalityId::LogMarginScalar,
        format!("c={c}"),
        INEQUALITY_TOL,
    );
    for z in grid(-c, c, points) {
        report.record((-z).exp_m1() + z - z * z / denom);
    }
    Ok(report)
}

/// Two-sided contraction bound
/// `|psi(x) - psi(y) - mu(d(x, y) / 3) / 2| <= 2 |psi(y) - psi(x)|` on random pairs.
pub fn contraction_check(model: &LossModel, trials: usize, seed: u64) -> Result<MarginCheckReport> {
    let mut report =
        MarginCheckReport::new(InequalityId::Contraction, model_name(model), INEQUALITY_TOL);
    for (x, y, t) in random_pairs(model, trials, seed) {
        let inc = psi(&model.kind, x, t) - psi(&model.kind, y, t);
        let d = model.modulus.distance(model, x, y, t)?;
        let lhs = (inc - 0.5 * model.modulus.mu(d / 3.0)).abs();
        report.record(2.0 * inc.abs() - lhs);
    }
    Ok(report)
}

/// Every gap is nonnegative (tolerance `1e-10`).
pub fn bregman_nonnegative_check(model: &LossModel, trials: usize, seed: u64) -> MarginCheckReport {
    let mut report =
        MarginCheckReport::new(InequalityId::BregmanNonnegative, model_name(model), 1e-10);
    for (x, y, t) in random_pairs(model, trials, seed) {
        report.record(gap_unchecked(&model.kind, x, y, t));
    }
    report
}

/// Closed-form gap identities: `(x - y)^2` for the square loss and
/// `e^(-z) - 1 + z` with `z = ln(y / x)` for log losses.
pub fn gap_identity_check(
    model: &LossModel,
    trials: usize,
    seed: u64,
) -> Result<MarginCheckReport> {
    let id = match model.kind {
        LossKind::Square => InequalityId::SquareGapIdentity,
        LossKind::Log | LossKind::Glm { .. } => InequalityId::LogGapIdentity,
        LossKind::PLoss { .. } => {
            return Err(Error::invalid("no closed-form gap identity for p-losses"))
        }
    };
    let mut report = MarginCheckReport::new(id, model_name(model), IDENTITY_TOL);
    for (x, y, t) in random_pairs(model, trials, seed) {
        let gap = gap_unchecked(&model.kind, x, y, t);
        let closed = match model.kind {
            LossKind::Square => (x - y) * (x - y),
            _ => {
                let z = (y / x).ln();
                (-z).exp_m1() + z
            }
        };
        report.record_identity(gap, closed);
    }
    Ok(report)
}

/// Analytic gradient against central differences, relative error
/// `|fd - g| / max(|g|, 1) < 1e-6`.
pub fn gradient_check(model: &LossModel, trials: usize, seed: u64) -> MarginCheckReport {
    let mut report = MarginCheckReport::new(
        InequalityId::GradientFiniteDifference,
        model_name(model),
        1e-6,
    );
    let (lo, hi) = model.domain;
    let mut rng = rng_from(seed, &[0x6772_6164]);
    for _ in 0..trials {
        let t = draw_target(model, &mut rng);
        let x = rng.random_range(lo..=hi);
        let h = if model.kind.is_likelihood() {
            1e-5 * x
        } else {
            1e-6 * x.abs().max(1.0)
        };
        let fd = (psi(&model.kind, x + h, t) - psi(&model.kind, x - h, t)) / (2.0 * h);
        let g = dpsi(&model.kind, x, t);
        report.record(-(fd - g).abs() / g.abs().max(1.0));
    }
    report
}

/// `0 <= psi <= m`, `|psi(x) - psi(y)| <= lip |x - y|` and midpoint concavity
/// of `exp(-eta psi)` on random pairs.
pub fn loss_constant_checks(model: &LossModel, trials: usize, seed: u64) -> Vec<MarginCheckReport> {
    let name = model_name(model);
    let mut range = MarginCheckReport::new(InequalityId::RangeBound, name.clone(), INEQUALITY_TOL);
    let mut lip =
        MarginCheckReport::new(InequalityId::LipschitzBound, name.clone(), INEQUALITY_TOL);
    let mut concave =
        MarginCheckReport::new(InequalityId::ExpConcavityMidpoint, name, INEQUALITY_TOL);
    let kind = model.kind;
    for (x, y, t) in random_pairs(model, trials, seed) {
        let (px, py) = (psi(&kind, x, t), psi(&kind, y, t));
        range.record(px.min(model.m - px));
        lip.record(model.lip * (x - y).abs() - (px - py).abs());
        let mid = (-model.eta * psi(&kind, 0.5 * (x + y), t)).exp();
        concave.record(mid - 0.5 * ((-model.eta * px).exp() + (-model.eta * py).exp()));
    }
    vec![range, lip, concave]
}

/// Pointwise regularization sandwich for the simplex regularizer
/// `h = (1 - delta) f + delta / k` on a `side x side` grid of `(f, delta)`:
/// `-ln h <= -ln f + ln(k / (k - k delta + delta)) v 0` for all `f`, the gap
/// is at most `2 delta`, and `-ln f - 2 delta <= -ln h` once `f` clears
/// [`regularization_lower_threshold`].
pub fn regularization_sandwich_check(k: usize, side: usize) -> Result<MarginCheckReport> {
    if k == 0 || side < 2 {
        return Err(Error::invalid("need k >= 1 and side >= 2"));
    }
    let mut report = MarginCheckReport::new(
        InequalityId::RegularizationSandwich,
        format!("simplex k={k}"),
        INEQUALITY_TOL,
    );
    let kf = k as f64;
    for i in 0..side {
        let delta = 0.5 * (i + 1) as f64 / side as f64;
        let gap = regularization_upper_gap(delta, k);
        report.record(2.0 * delta - gap);
        let floor = regularization_lower_threshold(delta, k);
        for j in 0..side {
            let frac = j as f64 / (side - 1) as f64;
            // upper side over (0, 1], log-spaced down to 1e-12
            let f_all = 10f64.powf(-12.0 * (1.0 - frac));
            let h = (1.0 - delta) * f_all + delta / kf;
            report.record((-f_all.ln() + gap) - (-h.ln()));
            // lower side over [floor, 1]
            let f = floor + (1.0 - floor) * frac;
            let h = (1.0 - delta) * f + delta / kf;
            report.record(-h.ln() - (-f.ln() - 2.0 * delta));
        }
    }
    Ok(report)
}

/// `softmax(right_inverse(p)) = p` on random interior simplex points.
pub fn link_round_trip_check(k: usize, trials: usize, seed: u64) -> Result<MarginCheckReport> {
    let mut report = MarginCheckReport::new(
        InequalityId::LinkRoundTrip,
        format!("softmax k={k}"),
        IDENTITY_TOL,
    );
    let mut rng = rng_from(seed, &[0x6c69_6e6b]);
    for _ in 0..trials {
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(1e-6..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let back = link_softmax(&link_right_inverse(&p)?);
        let err = p
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        report.record(-err);
        let reg = regularize_simplex(&p, 0.25)?;
        report.record_identity(reg.iter().sum::<f64>(), 1.0);
    }
    Ok(report)
}

/// Which checks a suite run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Margins,
    Losses,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuiteOptions {
    pub trials: usize,
    pub grid_size: usize,
    /// Random finite classes for the star-margin check.
    pub star_instances: usize,
    pub seed: u64,
    /// Replaces the tolerance of every inequality check (identities keep theirs).
    pub tolerance: Option<f64>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            trials: 10_000,
            grid_size: 100,
            star_instances: 500,
            seed: 0,
            tolerance: None,
        }
    }
}

/// Models covered by the suites.
pub fn suite_models() -> Result<Vec<LossModel>> {
    Ok(vec![
        LossModel::square(1.0)?,
        LossModel::p_loss(3.0, 1.0)?,
        LossModel::log(0.01)?,
        LossModel::log(0.5)?,
        LossModel::glm(3, 0.1)?,
    ])
}

pub fn run_suite(suite: Suite, options: &SuiteOptions) -> Result<Vec<MarginCheckReport>> {
    let mut reports = Vec::new();
    if matches!(suite, Suite::Margins | Suite::All) {
        reports.extend(margin_suite(options)?);
    }
    if matches!(suite, Suite::Losses | Suite::All) {
        reports.extend(loss_suite(options)?);
    }
    if let Some(tol) = options.tolerance {
        reports
            .iter_mut()
            .filter(|r| r.tolerance == INEQUALITY_TOL)
            .for_each(|r| r.set_tolerance(tol));
    }
    Ok(reports)
}

fn margin_suite(o: &SuiteOptions) -> Result<Vec<MarginCheckReport>> {
    let mut out = Vec::new();
    let models = suite_models()?;
    for (i, model) in models.iter().enumerate() {
        let seed = crate::seed::derive_seed(o.seed, &[1, i as u64]);
        out.push(certify_with(
            model,
            &model.modulus,
            o.grid_size,
            o.trials,
            seed,
        )?);
        if let Ok(uniform) = model.uniform_convexity_modulus() {
            out.push(certify_with(model, &uniform, o.grid_size, o.trials, seed)?);
        }
        out.push(exp_concave_margin_check(model, o.trials, seed));
        out.push(contraction_check(model, o.trials, seed)?);
        if model.kind.is_likelihood() {
            out.push(self_concordant_gap_check(model, o.trials, seed)?);
            out.push(self_concordant_saturation_check(model, o.trials, seed)?);
        }
    }
    for c in [0.5, 1.0, 2.0, 4.0, 8.0] {
        out.push(log_margin_scalar_check(c, o.trials)?);
    }
    out.extend(random_star_margins(o.star_instances, o.seed)?);
    Ok(out)
}

fn loss_suite(o: &SuiteOptions) -> Result<Vec<MarginCheckReport>> {
    let mut out = Vec::new();
    for (i, model) in suite_models()?.iter().enumerate() {
        let seed = crate::seed::derive_seed(o.seed, &[2, i as u64]);
        out.push(bregman_nonnegative_check(model, o.trials, seed));
        if !matches!(model.kind, LossKind::PLoss { .. }) {
            out.push(gap_identity_check(model, o.trials, seed)?);
        }
        out.push(gradient_check(model, o.trials, seed));
        out.extend(loss_constant_checks(model, o.trials, seed));
    }
    let side = (o.trials as f64).sqrt().ceil() as usize;
    for k in [1, 2, 3, 10] {
        out.push(regularization_sandwich_check(k, side.max(2))?);
    }
    out.push(link_round_trip_check(3, o.trials, o.seed)?);
    Ok(out)
}

/// Star fits on random finite classes of constant-per-example predictors
/// under the square loss and the regularized log loss.
pub fn random_star_margins(instances: usize, seed: u64) -> Result<Vec<MarginCheckReport>> {
    use crate::estimators::{star_select, ClassVariant, Predictor};
    let square = LossModel::square(1.0)?;
    let mut sq_report = MarginCheckReport::new(
        InequalityId::StarMargin,
        model_name(&square),
        INEQUALITY_TOL,
    );
    let mut log_report: Option<MarginCheckReport> = None;
    for inst in 0..instances {
        let mut rng = rng_from(seed, &[3, inst as u64]);
        let members = rng.random_range(2..=32usize);
        let n = rng.random_range(1..=128usize);
        if inst % 2 == 0 {
            let targets: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let inputs: Vec<Vec<f64>> = (0..members)
                .map(|_| (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect())
                .collect();
            let sel = star_select(&square, &inputs, &targets);
            let star = mix(&inputs[sel.erm], &inputs[sel.partner], sel.lambda);
            sq_report = sq_report.merge(&star_margin_check_inputs(
                &square, &inputs, &star, &targets,
            )?);
        } else {
            let delta = rng.random_range(0.01..=0.5);
            let model = LossModel::log(delta)?;
            let values: Vec<Predictor> = (0..members)
                .map(|_| Predictor::Tabular {
                    values: (0..n).map(|_| vec![rng.random::<f64>()]).collect(),
                })
                .collect();
            let class = FunctionClass::new(ClassVariant::Finite { members: values }, Some(delta))?;
            let sample = Sample::targets_only(vec![0.0; n])?;
            let inputs = class_inputs(&model, &class, &sample)?;
            let sel = star_select(&model, &inputs, &sample.targets);
            let star = mix(&inputs[sel.erm], &inputs[sel.partner], sel.lambda);
            let r = star_margin_check_inputs(&model, &inputs, &star, &sample.targets)?;
            let mut r = MarginCheckReport {
                subject: "regularized log".into(),
                ..r
            };
            if let Some(prev) = log_report.take() {
                r = prev.merge(&r);
            }
            log_report = Some(r);
        }
    }
    Ok(std::iter::once(sq_report).chain(log_report).collect())
}

pub(crate) fn mix(a: &[f64], b: &[f64], lambda: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(u, v)| lambda * u + (1.0 - lambda) * v)
        .collect()
}
