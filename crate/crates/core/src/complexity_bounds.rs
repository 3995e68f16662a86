//! Offset Rademacher suprema by Monte Carlo and closed-form risk bounds.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{class_inputs, erm_of_inputs, validate_inputs, FunctionClass, Sample};
use crate::loss_models::{psi, LossModel, MuKind};
use crate::search::golden_section;
use crate::seed::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetKind {
    /// `4 eps (psi(f) - psi(f*)) - mu(d(f, f*) / 3)`, sup over members.
    MuD,
    /// `4 eps (psi(f) - psi(g)) - eta (psi(f) - psi(g))^2 / (18 m eta v 36)`, sup over pairs.
    ExpConcave,
    /// `4 lip (f - g) eps - alpha |f - g|^p / 3^p`, sup over pairs.
    UniformConvex,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffsetEstimate {
    pub offset_kind: OffsetKind,
    pub draws: usize,
    pub per_draw_sup: Vec<f64>,
    pub mean: f64,
    pub q95: f64,
    /// Leading constant of the offset term.
    pub coefficient: f64,
}

/// All mixes `lambda f + (1 - lambda) g` of member pairs with `lambda` on
/// `{0, 1/L, ..., 1}`. Mixes of `(f, g)` and `(g, f)` coincide, so each
/// unordered pair contributes its interior levels once; the members
/// themselves come first, in order.
pub fn discretize_fprime(members: &[Vec<f64>], lambda_levels: usize) -> Result<Vec<Vec<f64>>> {
    if members.is_empty() {
        return Err(Error::invalid("class must be nonempty"));
    }
    if lambda_levels < 1 {
        return Err(Error::invalid("lambda_levels must be at least 1"));
    }
    let mut out: Vec<Vec<f64>> = Vec::new();
    for m in members {
        if !out.contains(m) {
            out.push(m.clone());
        }
    }
    let distinct = out.clone();
    for (a, f) in distinct.iter().enumerate() {
        for g in &distinct[a + 1..] {
            for j in 1..lambda_levels {
                let l = j as f64 / lambda_levels as f64;
                out.push(
                    f.iter()
                        .zip(g)
                        .map(|(u, v)| l * u + (1.0 - l) * v)
                        .collect(),
                );
            }
        }
    }
    Ok(out)
}

fn coefficient(model: &LossModel, kind: OffsetKind) -> Result<f64> {
    Ok(match kind {
        OffsetKind::MuD => match model.modulus.mu {
            MuKind::Quadratic { coef } => coef,
            MuKind::Power { alpha, .. } => alpha,
            MuKind::Omega => 1.0,
        },
        OffsetKind::ExpConcave => model.eta / (18.0 * model.m * model.eta).max(36.0),
        OffsetKind::UniformConvex => {
            let uc = model.uniform_convexity_modulus()?;
            match uc.mu {
                MuKind::Power { p, alpha } => alpha / 3f64.powf(p),
                _ => unreachable!("uniform convexity modulus is a power"),
            }
        }
    })
}

/// Precomputed per-member quantities for repeated sign draws.
struct OffsetProblem {
    kind: OffsetKind,
    n: usize,
    /// Loss values (or raw predictions for the uniform-convex kind).
    values: Vec<Vec<f64>>,
    /// Per-member offset against the reference (mu-d kind only).
    reference_offset: Vec<f64>,
    reference_values: Vec<f64>,
    coefficient: f64,
    lip: f64,
    p: f64,
    /// Pair penalties in `(a, b > a)` order, when small enough to keep.
    pair_penalty: Option<Vec<f64>>,
}

/// Largest number of member pairs whose penalties are cached.
const PAIR_CACHE_LIMIT: usize = 1 << 23;

impl OffsetProblem {
    fn new(
        model: &LossModel,
        fprime: &[Vec<f64>],
        reference: &[f64],
        targets: &[f64],
        kind: OffsetKind,
    ) -> Result<Self> {
        if fprime.is_empty() {
            return Err(Error::invalid("class must be nonempty"));
        }
        validate_inputs(model, reference, targets)?;
        for f in fprime {
            validate_inputs(model, f, targets)?;
        }
        let n = targets.len();
        let loss = |f: &[f64]| -> Vec<f64> {
            f.iter()
                .zip(targets)
                .map(|(&v, &y)| psi(&model.kind, v, y))
                .collect()
        };
        let coefficient = coefficient(model, kind)?;
        let (values, reference_values) = match kind {
            OffsetKind::UniformConvex => (fprime.to_vec(), reference.to_vec()),
            _ => (fprime.iter().map(|f| loss(f)).collect(), loss(reference)),
        };
        let reference_offset = if kind == OffsetKind::MuD {
            fprime
                .iter()
                .map(|f| {
                    let mut total = 0.0;
                    for i in 0..n {
                        let d = model
                            .modulus
                            .distance(model, f[i], reference[i], targets[i])?;
                        total += model.modulus.mu(d / 3.0);
                    }
                    Ok(total / n as f64)
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let p = match kind {
            OffsetKind::UniformConvex => model.kind.exponent().unwrap_or(2.0),
            _ => 2.0,
        };
        let mut problem = Self {
            kind,
            n,
            values,
            reference_offset,
            reference_values,
            coefficient,
            lip: model.lip,
            p,
            pair_penalty: None,
        };
        let m = problem.values.len();
        let pairs = m * m.saturating_sub(1) / 2;
        if kind != OffsetKind::MuD && pairs <= PAIR_CACHE_LIMIT {
            let mut pen = Vec::with_capacity(pairs);
            for a in 0..m {
                for b in a + 1..m {
                    pen.push(problem.penalty(a, b));
                }
            }
            problem.pair_penalty = Some(pen);
        }
        Ok(problem)
    }

    /// Offset penalty of a pair before the coefficient.
    fn penalty(&self, a: usize, b: usize) -> f64 {
        let (f, g) = (&self.values[a], &self.values[b]);
        f.iter()
            .zip(g)
            .map(|(u, v)| {
                let diff = u - v;
                if self.kind == OffsetKind::ExpConcave {
                    diff * diff
                } else {
                    diff.abs().powf(self.p)
                }
            })
            .sum()
    }

    fn sup(&self, signs: &[f64]) -> f64 {
        let n = self.n as f64;
        match self.kind {
            OffsetKind::MuD => self
                .values
                .iter()
                .zip(&self.reference_offset)
                .map(|(v, off)| {
                    let lin: f64 = v
                        .iter()
                        .zip(&self.reference_values)
                        .zip(signs)
                        .map(|((a, b), s)| 4.0 * s * (a - b))
                        .sum();
                    lin / n - off
                })
                .fold(f64::NEG_INFINITY, f64::max),
            OffsetKind::ExpConcave | OffsetKind::UniformConvex => {
                let scale = if self.kind == OffsetKind::UniformConvex {
                    4.0 * self.lip
                } else {
                    4.0
                };
                // (f, g) and (g, f) differ only in the sign of the linear term
                let lin: Vec<f64> = self
                    .values
                    .iter()
                    .map(|f| f.iter().zip(signs).map(|(v, s)| v * s).sum())
                    .collect();
                let mut best = 0.0f64;
                let mut k = 0;
                for a in 0..self.values.len() {
                    for b in a + 1..self.values.len() {
                        let pen = match &self.pair_penalty {
                            Some(pen) => pen[k],
                            None => self.penalty(a, b),
                        };
                        k += 1;
                        best = best
                            .max((scale * (lin[a] - lin[b]).abs() - self.coefficient * pen) / n);
                    }
                }
                best
            }
        }
    }
}

/// Supremum of the offset process for one sign vector, by enumeration over
/// the (already discretized) class `fprime` of loss inputs.
pub fn offset_sup_one_draw(
    model: &LossModel,
    fprime: &[Vec<f64>],
    reference: &[f64],
    targets: &[f64],
    signs: &[f64],
    kind: OffsetKind,
) -> Result<f64> {
    if signs.len() != targets.len() || signs.iter().any(|&s| s != 1.0 && s != -1.0) {
        return Err(Error::invalid("signs must be an n-vector of +-1"));
    }
    Ok(OffsetProblem::new(model, fprime, reference, targets, kind)?.sup(signs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetConfig {
    pub kind: OffsetKind,
    pub draws: usize,
    pub lambda_levels: usize,
    pub seed: u64,
}

impl Default for OffsetConfig {
    fn default() -> Self {
        Self {
            kind: OffsetKind::MuD,
            draws: 200,
            lambda_levels: 20,
            seed: 0,
        }
    }
}

/// Nearest-rank empirical quantile.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Monte Carlo estimate of the offset supremum conditional on the sample:
/// `draws` Rademacher vectors (draw `j` seeded by `(seed, j)`), each
/// maximized over the discretized mixes of `members`.
pub fn offset_complexity_mc(
    model: &LossModel,
    members: &[Vec<f64>],
    reference: &[f64],
    targets: &[f64],
    config: &OffsetConfig,
) -> Result<OffsetEstimate> {
    if config.draws == 0 {
        return Err(Error::invalid("draws must be at least 1"));
    }
    let fprime = discretize_fprime(members, config.lambda_levels)?;
    let problem = OffsetProblem::new(model, &fprime, reference, targets, config.kind)?;
    let n = targets.len();
    let per_draw_sup: Vec<f64> = (0..config.draws)
        .into_par_iter()
        .map(|j| {
            let mut rng = rng_from(config.seed, &[j as u64]);
            let signs: Vec<f64> = (0..n)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            problem.sup(&signs)
        })
        .collect();
    let mean = per_draw_sup.iter().sum::<f64>() / per_draw_sup.len() as f64;
    Ok(OffsetEstimate {
        offset_kind: config.kind,
        draws: config.draws,
        mean,
        q95: quantile(&per_draw_sup, 0.95),
        per_draw_sup,
        coefficient: problem.coefficient,
    })
}

/// [`offset_complexity_mc`] for a finite class on a sample; the reference
/// defaults to the empirical risk minimizer.
pub fn class_offset_mc(
    model: &LossModel,
    class: &FunctionClass,
    sample: &Sample,
    reference: Option<usize>,
    config: &OffsetConfig,
) -> Result<OffsetEstimate> {
    let inputs = class_inputs(model, class, sample)?;
    let r = match reference {
        Some(r) if r < inputs.len() => r,
        Some(r) => {
            return Err(Error::invalid(format!(
                "reference index {r} outside class of size {}",
                inputs.len()
            )))
        }
        None => erm_of_inputs(model, &inputs, &sample.targets).0,
    };
    offset_complexity_mc(model, &inputs, &inputs[r].clone(), &sample.targets, config)
}

/// Farthest-point traversal of a finite set of vectors under the `L2(P_n)`
/// distance, seeded at member 0. `radii[k]` is the covering radius of the
/// first `k + 1` centers, so the greedy cover at scale `eps` has
/// `min {k + 1 : radii[k] <= eps}` centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyCover {
    pub radii: Vec<f64>,
}

impl GreedyCover {
    pub fn new(vectors: &[Vec<f64>]) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::invalid("cannot cover an empty class"));
        }
        let n = vectors[0].len().max(1) as f64;
        let dist = |a: &[f64], b: &[f64]| {
            (a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() / n).sqrt()
        };
        let mut nearest: Vec<f64> = vectors.iter().map(|v| dist(v, &vectors[0])).collect();
        let mut radii = Vec::with_capacity(vectors.len());
        loop {
            let (far, &r) = nearest
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .expect("nonempty");
            radii.push(r);
            if r == 0.0 {
                break;
            }
            let center = vectors[far].clone();
            for (d, v) in nearest.iter_mut().zip(vectors) {
                *d = d.min(dist(v, &center));
            }
        }
        Ok(Self { radii })
    }

    pub fn size_at(&self, eps: f64) -> usize {
        self.radii.partition_point(|&r| r > eps) + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum EntropySource {
    /// Greedy cover of a finite class's prediction vectors.
    FiniteEmpirical { cover: GreedyCover },
    /// `k d ln(A B / eps)`, clamped at 0.
    Parametric { k: f64, d: f64, a: f64, b: f64 },
    /// `(A / eps)^q`.
    PowerLaw { a: f64, q: f64 },
    /// Constant `h` at every scale.
    Fixed { h: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    #[serde(flatten)]
    pub source: EntropySource,
    /// Adds `ln(1 / eps)` for `eps < 1` (entropy of a star hull).
    #[serde(default)]
    pub star_hull_correction: bool,
}

impl EntropyProfile {
    pub fn new(source: EntropySource) -> Self {
        Self {
            source,
            star_hull_correction: false,
        }
    }

    pub fn finite_empirical(vectors: &[Vec<f64>]) -> Result<Self> {
        Ok(Self::new(EntropySource::FiniteEmpirical {
            cover: GreedyCover::new(vectors)?,
        }))
    }

    pub fn with_star_hull_correction(mut self) -> Self {
        self.star_hull_correction = true;
        self
    }

    /// Scales where the profile jumps.
    fn breakpoints(&self) -> Vec<f64> {
        match &self.source {
            EntropySource::FiniteEmpirical { cover } => cover.radii.clone(),
            _ => Vec::new(),
        }
    }

    /// Whether the entropy integral converges at 0.
    fn integrable_at_zero(&self) -> bool {
        match self.source {
            EntropySource::PowerLaw { q, .. } => q < 2.0,
            _ => true,
        }
    }
}

/// `H_2(eps)` of the profile.
pub fn entropy_eval(profile: &EntropyProfile, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("scale must be positive, got {eps}")));
    }
    let base = match &profile.source {
        EntropySource::FiniteEmpirical { cover } => (cover.size_at(eps) as f64).ln(),
        EntropySource::Parametric { k, d, a, b } => (k * d * (a * b / eps).ln()).max(0.0),
        EntropySource::PowerLaw { a, q } => (a / eps).powf(*q),
        EntropySource::Fixed { h } => *h,
    };
    let correction = if profile.star_hull_correction && eps < 1.0 {
        -eps.ln()
    } else {
        0.0
    };
    Ok(base + correction)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub m: f64,
    pub eta: f64,
    pub n: f64,
    pub rho: f64,
    pub eps: f64,
    /// Lower chaining limit; unset means minimize over it.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Upper chaining limit.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Unspecified absolute constant, default 1.
    #[serde(default = "one")]
    pub c: f64,
    pub entropy: EntropyProfile,
}

fn one() -> f64 {
    1.0
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.n >= 1.0) {
            return Err(Error::invalid(format!(
                "n must be at least 1, got {}",
                self.n
            )));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::invalid(format!(
                "rho must lie in (0, 1], got {}",
                self.rho
            )));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if !(self.m > 0.0 && self.eta > 0.0) {
            return Err(Error::invalid("m and eta must be positive"));
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        (36.0 * self.m).max(72.0 / self.eta)
    }
}

/// `eps + (36 m v 72/eta) (H_2(eps) + ln(1/rho)) / n`.
pub fn packing_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let h = entropy_eval(&inputs.entropy, inputs.eps)?;
    Ok(inputs.eps + inputs.scale() * (h + (1.0 / inputs.rho).ln()) / inputs.n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainingValue {
    pub value: f64,
    pub alpha: f64,
}

/// Adaptive Simpson on `[a, b]` to relative accuracy `tol`.
fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    if b <= a {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let scale = whole.abs().max(f64::MIN_POSITIVE);
    step(f, a, b, fa, fm, fb, whole, tol * scale, 40)
}

/// `int_lo^hi sqrt(H_2(s)) ds` for `0 < lo`, integrating in `t = ln s`
/// piecewise between the profile's jumps.
fn entropy_integral(profile: &EntropyProfile, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let g = |t: f64| {
        let s = t.exp();
        s * entropy_eval(profile, s).unwrap_or(f64::NAN).sqrt()
    };
    let mut cuts: Vec<f64> = profile
        .breakpoints()
        .into_iter()
        .filter(|&r| r > lo && r < hi)
        .chain([1.0].into_iter().filter(|&r| r > lo && r < hi))
        .map(f64::ln)
        .collect();
    cuts.push(lo.ln());
    cuts.push(hi.ln());
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.windows(2)
        .map(|w| {
            // nudge inside each piece so jumps at the ends are excluded
            let width = w[1] - w[0];
            let eps = width * 1e-12;
            adaptive_simpson(&g, w[0] + eps, w[1] - eps, 1e-12)
        })
        .sum()
}

/// `int_0^a sqrt(H_2(s)) ds` for tiny `a`: exact for a pure power law,
/// otherwise `a sqrt(H_2(a))`, whose relative error is `O(1 / ln(1/a))` of a
/// term of size `a`.
fn entropy_tail(profile: &EntropyProfile, a: f64) -> f64 {
    match profile.source {
        EntropySource::PowerLaw { a: scale, q } if !profile.star_hull_correction => {
            scale.powf(q / 2.0) * a.powf(1.0 - q / 2.0) / (1.0 - q / 2.0)
        }
        _ => a * entropy_eval(profile, a).unwrap_or(f64::NAN).sqrt(),
    }
}

/// Value of the chaining bound at lower limit `alpha`.
pub fn chaining_value(inputs: &BoundInputs, alpha: f64) -> Result<f64> {
    inputs.validate()?;
    let gamma = inputs
        .gamma
        .ok_or_else(|| Error::invalid("chaining bound needs gamma"))?;
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if !(0.0..=gamma).contains(&alpha) {
        return Err(Error::invalid(format!(
            "alpha must lie in [0, gamma = {gamma}], got {alpha}"
        )));
    }
    let profile = &inputs.entropy;
    let integral = if alpha > 0.0 {
        entropy_integral(profile, alpha, gamma)
    } else if profile.integrable_at_zero() {
        let cut = gamma * 1e-14;
        entropy_tail(profile, cut) + entropy_integral(profile, cut, gamma)
    } else {
        f64::INFINITY
    };
    let n = inputs.n;
    Ok(4.0 * alpha
        + 12.0 / n.sqrt() * integral
        + inputs.scale() * entropy_eval(profile, gamma)? / n
        + inputs.rho / (gamma * gamma + n * n).sqrt())
}

/// Chaining bound. With `alpha` set, its value there; otherwise the
/// infimum over `alpha in [0, gamma]`, found on a 100-point log grid over
/// `[1e-8 gamma, gamma]` plus `alpha = 0`, refined by golden-section search
/// (the expression is convex in `alpha` for a nonincreasing entropy).
pub fn chaining_bound(inputs: &BoundInputs) -> Result<ChainingValue> {
    if let Some(alpha) = inputs.alpha {
        return Ok(ChainingValue {
            value: chaining_value(inputs, alpha)?,
            alpha,
        });
    }
    let gamma = inputs
        .gamma
        .ok_or_else(|| Error::invalid("chaining bound needs gamma"))?;
    let mut grid: Vec<f64> = (0..100)
        .map(|i| gamma * 10f64.powf(-8.0 + 8.0 * i as f64 / 99.0))
        .collect();
    grid.insert(0, 0.0);
    let mut values = Vec::with_capacity(grid.len());
    for &a in &grid {
        values.push(chaining_value(inputs, a)?);
    }
    let best = (0..grid.len())
        .min_by(|&i, &j| values[i].total_cmp(&values[j]))
        .expect("grid nonempty");
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (alpha, value) = golden_section(
        |a| chaining_value(inputs, a).unwrap_or(f64::INFINITY),
        lo,
        hi,
        1e-12 * gamma,
    );
    Ok(if value < values[best] {
        ChainingValue { value, alpha }
    } else {
        ChainingValue {
            value: values[best],
            alpha: grid[best],
        }
    })
}

/// `C k d ln(A B n)^2 ln(1/rho) / n`.
pub fn glm_bound(n: f64, rho: f64, c: f64, k: f64, d: f64, a: f64, b: f64) -> Result<f64> {
    if !(a * b * n > 1.0) {
        return Err(Error::invalid("glm bound needs A B n > 1"));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid(format!("rho must lie in (0, 1), got {rho}")));
    }
    Ok(c * k * d * (a * b * n).ln().powi(2) * (1.0 / rho).ln() / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateRegime {
    /// Lipschitz GLM link with base-class entropy exponent `q`.
    LipschitzGlm,
    /// Arbitrary likelihood class under the log loss.
    ArbitraryLog,
}

/// Order-of-magnitude excess-risk rate (constant 1) for entropy `(A/eps)^q`.
pub fn bigglm_rate(q: f64, regime: RateRegime, a: f64, n: f64) -> Result<f64> {
    if !(q > 0.0) || !(n > 1.0) {
        return Err(Error::invalid("rate table needs q > 0 and n > 1"));
    }
    let ln_n = n.ln();
    Ok(match regime {
        RateRegime::LipschitzGlm => {
            let aq = a.powf(q);
            if q < 2.0 {
                aq * n.powf(-2.0 / (2.0 + q)) * ln_n
            } else if q == 2.0 {
                aq * n.powf(-0.5) * ln_n
            } else {
                aq * n.powf(-1.0 / q)
            }
        }
        RateRegime::ArbitraryLog => {
            if q < 2.0 {
                n.powf(-1.0 / (1.0 + 1.5 * q))
            } else if q == 2.0 {
                n.powf(-0.25) * ln_n
            } else {
                n.powf(-1.0 / (2.0 * q))
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(h: f64) -> EntropyProfile {
        EntropyProfile::new(EntropySource::Fixed { h })
    }

    fn inputs(entropy: EntropyProfile) -> BoundInputs {
        BoundInputs {
            m: 1.0,
            eta: 1.0,
            n: 1000.0,
            rho: 0.05,
            eps: 0.01,
            alpha: None,
            gamma: None,
            c: 1.0,
            entropy,
        }
    }

    #[test]
    fn fprime_examples() {
        assert_eq!(discretize_fprime(&[vec![0.3, 0.1]], 20).unwrap().len(), 1);
        let two = vec![vec![0.0], vec![1.0]];
        assert_eq!(discretize_fprime(&two, 1).unwrap(), two);
        let mixes = discretize_fprime(&two, 2).unwrap();
        assert!(mixes.contains(&vec![0.5]));
        let m = 5;
        let members: Vec<Vec<f64>> = (0..m).map(|i| vec![i as f64]).collect();
        assert!(discretize_fprime(&members, 20).unwrap().len() <= m * m * 21);
    }

    #[test]
    fn offset_two_term_oracle() {
        let sq = LossModel::square(2.0).unwrap();
        let class = vec![vec![0.0], vec![1.0]];
        let v = offset_sup_one_draw(&sq, &class, &[0.0], &[0.0], &[1.0], OffsetKind::MuD).unwrap();
        let oracle = 0f64.max(4.0 * (1.0 - 0.0) - 1.0 / 9.0);
        assert!((v - oracle).abs() < 1e-15);
    }

    #[test]
    fn exp_concave_singleton_and_symmetry() {
        let log = LossModel::log(0.1).unwrap();
        let t = [0.0, 0.0, 0.0];
        let single = vec![vec![0.3, 0.5, 0.9]];
        let v = offset_sup_one_draw(
            &log,
            &single,
            &single[0],
            &t,
            &[1.0, -1.0, 1.0],
            OffsetKind::ExpConcave,
        )
        .unwrap();
        assert_eq!(v, 0.0);
        let class = vec![
            vec![0.3, 0.5, 0.9],
            vec![0.8, 0.2, 0.4],
            vec![0.6, 0.6, 0.6],
        ];
        let s = [1.0, -1.0, 1.0];
        let neg = [-1.0, 1.0, -1.0];
        let a =
            offset_sup_one_draw(&log, &class, &class[0], &t, &s, OffsetKind::ExpConcave).unwrap();
        let b =
            offset_sup_one_draw(&log, &class, &class[0], &t, &neg, OffsetKind::ExpConcave).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!(a >= 0.0);
    }

    #[test]
    fn mc_singleton_and_determinism() {
        let sq = LossModel::square(1.0).unwrap();
        let t = vec![0.1, -0.3, 0.5];
        let single = vec![vec![0.2, 0.2, 0.2]];
        for kind in [
            OffsetKind::MuD,
            OffsetKind::ExpConcave,
            OffsetKind::UniformConvex,
        ] {
            let cfg = OffsetConfig {
                kind,
                draws: 50,
                lambda_levels: 20,
                seed: 3,
            };
            let est = offset_complexity_mc(&sq, &single, &single[0], &t, &cfg).unwrap();
            assert_eq!(est.mean, 0.0);
            assert_eq!(est.q95, 0.0);
        }
        let class = vec![vec![0.2, 0.2, 0.2], vec![-0.5, 0.9, 0.0]];
        let cfg = OffsetConfig {
            draws: 30,
            seed: 9,
            ..OffsetConfig::default()
        };
        let a = offset_complexity_mc(&sq, &class, &class[0], &t, &cfg).unwrap();
        let b = offset_complexity_mc(&sq, &class, &class[0], &t, &cfg).unwrap();
        assert_eq!(a.per_draw_sup, b.per_draw_sup);
    }

    #[test]
    fn coefficients() {
        let p3 = LossModel::p_loss(3.0, 1.0).unwrap();
        let e = coefficient(&p3, OffsetKind::ExpConcave).unwrap();
        assert!((e - p3.eta / (18.0 * p3.m * p3.eta).max(36.0)).abs() < 1e-18);
        let u = coefficient(&p3, OffsetKind::UniformConvex).unwrap();
        assert!((u - 0.25 / 27.0).abs() < 1e-15);
    }

    #[test]
    fn entropy_examples() {
        let single = EntropyProfile::finite_empirical(&[vec![0.1, 0.2]]).unwrap();
        for eps in [1e-6, 0.1, 10.0] {
            assert_eq!(entropy_eval(&single, eps).unwrap(), 0.0);
        }
        let param = EntropyProfile::new(EntropySource::Parametric {
            k: 2.0,
            d: 2.0,
            a: 1.0,
            b: 3.0,
        });
        assert!((entropy_eval(&param, 0.01).unwrap() - 22.8152).abs() < 1e-4);
        let cls =
            EntropyProfile::finite_empirical(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![0.5, 0.2]])
                .unwrap();
        assert_eq!(entropy_eval(&cls, 1.0).unwrap(), 0.0);
        assert!(entropy_eval(&cls, 0.1).unwrap() > 0.0);
        let corrected = fixed(0.0).with_star_hull_correction();
        assert!((entropy_eval(&corrected, 0.5).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(entropy_eval(&corrected, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn packing_examples() {
        let v = packing_bound(&inputs(fixed(10.0))).unwrap();
        assert!((v - 0.945693).abs() < 5e-7, "{v}");
        let mut near = inputs(fixed(0.0));
        near.rho = 1.0;
        assert!((packing_bound(&near).unwrap() - near.eps).abs() < 1e-12);
        let base = inputs(fixed(3.0));
        let mut doubled = base.clone();
        doubled.n *= 2.0;
        let t1 = packing_bound(&base).unwrap() - base.eps;
        let t2 = packing_bound(&doubled).unwrap() - base.eps;
        assert!((t1 - 2.0 * t2).abs() < 1e-15);
    }

    #[test]
    fn chaining_examples() {
        let mut zero = inputs(fixed(0.0));
        zero.gamma = Some(1.0);
        zero.rho = 0.5;
        let c = chaining_bound(&zero).unwrap();
        assert!((c.value - 0.5 / (1.0f64 + 1e6).sqrt()).abs() < 1e-15);
        assert_eq!(c.alpha, 0.0);

        let mut pl = inputs(EntropyProfile::new(EntropySource::PowerLaw {
            a: 1.0,
            q: 1.0,
        }));
        pl.n = 1e4;
        pl.gamma = Some(1.0);
        pl.rho = 1.0;
        let v = chaining_value(&pl, 0.0).unwrap();
        let oracle = 0.24 + 72.0 / 1e4 + pl.rho / (1.0f64 + 1e8).sqrt();
        assert!((v - oracle).abs() < 1e-9, "{v} vs {oracle}");

        let mut big = pl.clone();
        big.n = 2e4;
        assert!(chaining_value(&big, 0.01).unwrap() <= chaining_value(&pl, 0.01).unwrap());
        pl.alpha = Some(2.0);
        assert!(chaining_bound(&pl).is_err());
    }

    #[test]
    fn glm_examples() {
        let v = glm_bound(1000.0, 0.05, 1.0, 2.0, 2.0, 1.0, 3.0).unwrap();
        assert!((v - 0.768).abs() < 5e-4, "{v}");
        assert!(glm_bound(1000.0, 1.0 - 1e-15, 1.0, 2.0, 2.0, 1.0, 3.0).unwrap() < 1e-12);
        let w = glm_bound(1000.0, 0.05, 2.0, 2.0, 2.0, 1.0, 3.0).unwrap();
        assert_eq!(w, 2.0 * v);
    }

    #[test]
    fn rate_table_examples() {
        let e = std::f64::consts::E;
        let v = bigglm_rate(1.0, RateRegime::LipschitzGlm, 1.0, e).unwrap();
        assert!((v - (-2.0f64 / 3.0).exp()).abs() < 1e-15);
        let v = bigglm_rate(2.0, RateRegime::LipschitzGlm, 2.0, 100.0).unwrap();
        assert!((v - 4.0 * 0.1 * 100f64.ln()).abs() < 1e-12);
        let v = bigglm_rate(4.0, RateRegime::ArbitraryLog, 1.0, 256.0).unwrap();
        assert!((v - 256f64.powf(-0.125)).abs() < 1e-15);
    }
}
