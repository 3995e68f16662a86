//! Scalar losses with certified constants.
//!
//! Four families are supported: the square loss, the p-loss `|x - a|^p`,
//! the log loss `-ln x` on likelihood values, and the GLM log-likelihood
//! with a soft-max link (represented on likelihood values as well). Each
//! [`LossModel`] carries its range bound `m`, exp-concavity modulus `eta`,
//! Lipschitz bound and canonical `(mu, d)` modulus descriptor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest likelihood accepted by unregularized log-loss models.
pub const DELTA_MIN: f64 = 1e-12;

const DOMAIN_SLACK: f64 = 1e-12;

/// Link function descriptor for generalized linear models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LossKind {
    Square,
    PLoss { p: f64 },
    Log,
    Glm { k: usize, link: Link },
}

impl LossKind {
    /// Exponent used by the p-loss constant formulas (2 for the square loss).
    pub fn exponent(&self) -> Option<f64> {
        match self {
            LossKind::Square => Some(2.0),
            LossKind::PLoss { p } => Some(*p),
            _ => None,
        }
    }

    pub fn is_likelihood(&self) -> bool {
        matches!(self, LossKind::Log | LossKind::Glm { .. })
    }
}

/// Where targets live: a real interval or class labels `1..=k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "space", rename_all = "snake_case")]
pub enum TargetSpace {
    Interval {
        lo: f64,
        hi: f64,
    },
    Labels {
        k: usize,
    },
    /// The loss ignores the target (scalar likelihood values).
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mu", rename_all = "snake_case")]
pub enum MuKind {
    /// `z -> coef * z^2`
    Quadratic { coef: f64 },
    /// `z -> alpha * z^p`
    Power { p: f64, alpha: f64 },
    /// `z -> z - ln(1 + z)`
    Omega,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    /// `|x - y|`
    Absolute,
    /// `|ln x - ln y|`
    LogMetric,
    /// `|psi(x) - psi(y)|`
    LossIncrement,
    /// `|x - y| * sqrt(psi''(y))`; not symmetric.
    LocalNorm,
}

/// A modulus `mu` paired with a (pseudo)metric `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusDescriptor {
    pub mu: MuKind,
    pub d: DistanceKind,
}

impl ModulusDescriptor {
    pub fn mu(&self, z: f64) -> f64 {
        match self.mu {
            MuKind::Quadratic { coef } => coef * z * z,
            MuKind::Power { p, alpha } => alpha * z.abs().powf(p),
            MuKind::Omega => omega(z),
        }
    }

    /// Inverse of `mu` on `[0, inf)`.
    pub fn mu_inverse(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        match self.mu {
            MuKind::Quadratic { coef } => (v / coef).sqrt(),
            MuKind::Power { p, alpha } => (v / alpha).powf(1.0 / p),
            MuKind::Omega => omega_inverse(v),
        }
    }

    pub fn distance(&self, model: &LossModel, x: f64, y: f64, target: f64) -> Result<f64> {
        Ok(match self.d {
            DistanceKind::Absolute => (x - y).abs(),
            DistanceKind::LogMetric => {
                model.check_pred(x)?;
                model.check_pred(y)?;
                (x.ln() - y.ln()).abs()
            }
            DistanceKind::LossIncrement => {
                (eval_loss(model, x, target)? - eval_loss(model, y, target)?).abs()
            }
            DistanceKind::LocalNorm => (x - y).abs() * hess_loss(model, y, target)?.sqrt(),
        })
    }

    /// `mu(d(x, y))`.
    pub fn modulus(&self, model: &LossModel, x: f64, y: f64, target: f64) -> Result<f64> {
        Ok(self.mu(self.distance(model, x, y, target)?))
    }
}

/// `omega(z) = z - ln(1 + z)`, the self-concordance modulus.
pub fn omega(z: f64) -> f64 {
    z - z.ln_1p()
}

fn omega_inverse(v: f64) -> f64 {
    // omega is increasing on [0, inf): bracket, then bisect.
    let mut hi = 1.0;
    while omega(hi) < v {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if omega(mid) < v {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// A loss together with the constants certified for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    pub kind: LossKind,
    /// Closed interval of admissible predictions (or likelihood values).
    pub domain: (f64, f64),
    pub target_space: TargetSpace,
    /// Range bound: `0 <= psi <= m` on the domain.
    pub m: f64,
    /// Exp-concavity modulus.
    pub eta: f64,
    /// Lipschitz bound on the domain.
    pub lip: f64,
    pub modulus: ModulusDescriptor,
    /// Bound `B` on predictions and targets (p-loss families only).
    pub bound: Option<f64>,
    /// Likelihood floor (log-loss families only).
    pub delta: Option<f64>,
}

impl LossModel {
    /// Square loss `(x - a)^2` on `[-b, b]`, certified as the p-loss with `p = 2`.
    pub fn square(b: f64) -> Result<Self> {
        let mut model = Self::p_loss(2.0, b)?;
        model.kind = LossKind::Square;
        model.modulus = ModulusDescriptor {
            mu: MuKind::Quadratic { coef: 1.0 },
            d: DistanceKind::Absolute,
        };
        Ok(model)
    }

    /// p-loss `|x - a|^p` with predictions and targets in `[-b, b]`.
    pub fn p_loss(p: f64, b: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::invalid(format!("p-loss requires p > 1, got {p}")));
        }
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::invalid(format!("bound B must be positive, got {b}")));
        }
        let kind = LossKind::PLoss { p };
        let m = range_bound(&kind, b, 0.0)?;
        let eta = exp_concavity_eta(&kind, b)?;
        let lip = lipschitz_bound(&kind, b, 0.0)?;
        Ok(Self {
            kind,
            domain: (-b, b),
            target_space: TargetSpace::Interval { lo: -b, hi: b },
            m,
            eta,
            lip,
            modulus: ModulusDescriptor {
                mu: MuKind::Quadratic {
                    coef: 1.0 / (2.0 * m).max(4.0 / eta),
                },
                d: DistanceKind::LossIncrement,
            },
            bound: Some(b),
            delta: None,
        })
    }

    /// Log loss `-ln x` on likelihoods in `[delta, 1]`.
    pub fn log(delta: f64) -> Result<Self> {
        check_delta_floor(delta)?;
        let kind = LossKind::Log;
        Ok(Self {
            kind,
            domain: (delta, 1.0),
            target_space: TargetSpace::Any,
            m: range_bound(&kind, 0.0, delta)?,
            eta: 1.0,
            lip: lipschitz_bound(&kind, 0.0, delta)?,
            modulus: log_modulus(delta),
            bound: None,
            delta: Some(delta),
        })
    }

    /// Log loss on likelihood vectors over `k` labels; predictions are the
    /// likelihood assigned to the observed label.
    pub fn log_labels(k: usize, delta: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid("label space needs k >= 2"));
        }
        let mut model = Self::log(delta)?;
        model.target_space = TargetSpace::Labels { k };
        Ok(model)
    }

    /// GLM negative log-likelihood with a soft-max link over `k` classes.
    ///
    /// `delta` is the simplex regularization level; likelihoods of the
    /// regularized class lie in `[delta / k, 1]`. With `delta = 0` the
    /// floor is [`DELTA_MIN`].
    pub fn glm(k: usize, delta: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid("GLM needs k >= 2 classes"));
        }
        if !(0.0..=0.5).contains(&delta) {
            return Err(Error::invalid(format!(
                "regularization delta must lie in [0, 1/2], got {delta}"
            )));
        }
        let floor = if delta > 0.0 {
            (delta / k as f64).max(DELTA_MIN)
        } else {
            DELTA_MIN
        };
        let mut model = Self::log(floor)?;
        model.kind = LossKind::Glm {
            k,
            link: Link::Softmax,
        };
        model.target_space = TargetSpace::Labels { k };
        model.delta = Some(delta);
        Ok(model)
    }

    /// Likelihood floor of the domain (log families).
    pub fn floor(&self) -> f64 {
        self.domain.0
    }

    /// p-uniform convexity descriptor `alpha |x - y|^p` with `alpha = 2^(1-p)`.
    pub fn uniform_convexity_modulus(&self) -> Result<ModulusDescriptor> {
        match self.kind.exponent() {
            Some(p) if p >= 2.0 => Ok(ModulusDescriptor {
                mu: MuKind::Power {
                    p,
                    alpha: 2f64.powf(1.0 - p),
                },
                d: DistanceKind::Absolute,
            }),
            _ => Err(Error::invalid(
                "p-uniform convexity modulus defined for p-losses with p >= 2",
            )),
        }
    }

    /// Self-concordance descriptor `omega(|x - y| sqrt(psi''(y)))`.
    pub fn self_concordance_modulus(&self) -> Result<ModulusDescriptor> {
        if !self.kind.is_likelihood() {
            return Err(Error::invalid(
                "self-concordance modulus is certified for log and GLM losses only",
            ));
        }
        Ok(ModulusDescriptor {
            mu: MuKind::Omega,
            d: DistanceKind::LocalNorm,
        })
    }

    pub(crate) fn check_pred(&self, pred: f64) -> Result<()> {
        let (lo, hi) = self.domain;
        let slack = DOMAIN_SLACK * lo.abs().max(hi.abs()).max(1.0);
        let inside = pred.is_finite() && pred >= lo - slack && pred <= hi + slack;
        if inside && (!self.kind.is_likelihood() || pred > 0.0) {
            Ok(())
        } else {
            Err(Error::Domain {
                what: "prediction",
                value: pred,
                lo,
                hi,
            })
        }
    }

    pub(crate) fn check_target(&self, target: f64) -> Result<()> {
        match self.target_space {
            TargetSpace::Any => Ok(()),
            TargetSpace::Interval { lo, hi } => {
                let slack = DOMAIN_SLACK * lo.abs().max(hi.abs()).max(1.0);
                if target.is_finite() && target >= lo - slack && target <= hi + slack {
                    Ok(())
                } else {
                    Err(Error::Domain {
                        what: "target",
                        value: target,
                        lo,
                        hi,
                    })
                }
            }
            TargetSpace::Labels { k } => {
                if target.fract() == 0.0 && target >= 1.0 && target <= k as f64 {
                    Ok(())
                } else {
                    Err(Error::Domain {
                        what: "label",
                        value: target,
                        lo: 1.0,
                        hi: k as f64,
                    })
                }
            }
        }
    }

    /// Maps a predictor output (scalar or per-label vector) to the loss input.
    pub fn loss_input(&self, output: &[f64], target: f64) -> Result<f64> {
        match output {
            [] => Err(Error::invalid("empty predictor output")),
            [single] => Ok(*single),
            many if self.kind.is_likelihood() => {
                self.check_target(target)?;
                let label = target as usize;
                many.get(label - 1).copied().ok_or_else(|| {
                    Error::invalid(format!(
                        "label {label} out of range for {}-vector output",
                        many.len()
                    ))
                })
            }
            many => Err(Error::invalid(format!(
                "scalar loss received a {}-vector output",
                many.len()
            ))),
        }
    }
}

fn log_modulus(delta: f64) -> ModulusDescriptor {
    ModulusDescriptor {
        mu: MuKind::Quadratic {
            coef: 1.0 / (2.0 * (1.0 / delta).ln()).max(4.0),
        },
        d: DistanceKind::LogMetric,
    }
}

fn check_delta_floor(delta: f64) -> Result<()> {
    if !(DELTA_MIN..1.0).contains(&delta) {
        return Err(Error::invalid(format!(
            "likelihood floor must lie in [{DELTA_MIN}, 1), got {delta}"
        )));
    }
    Ok(())
}

/// `psi(pred, target)` without domain checks; callers validate inputs once.
#[inline]
pub(crate) fn psi(kind: &LossKind, pred: f64, target: f64) -> f64 {
    match *kind {
        LossKind::Square => (pred - target) * (pred - target),
        LossKind::PLoss { p } => {
            let z = (pred - target).abs();
            if p == 3.0 {
                z * z * z
            } else {
                z.powf(p)
            }
        }
        LossKind::Log | LossKind::Glm { .. } => -pred.ln(),
    }
}

/// Derivative of [`psi`] in the prediction, without domain checks.
#[inline]
pub(crate) fn dpsi(kind: &LossKind, pred: f64, target: f64) -> f64 {
    match *kind {
        LossKind::Square => 2.0 * (pred - target),
        LossKind::PLoss { p } => {
            let z = pred - target;
            if z == 0.0 {
                0.0
            } else {
                p * z.abs().powf(p - 1.0) * z.signum()
            }
        }
        LossKind::Log | LossKind::Glm { .. } => -1.0 / pred,
    }
}

/// `psi(pred, target)`.
pub fn eval_loss(model: &LossModel, pred: f64, target: f64) -> Result<f64> {
    model.check_pred(pred)?;
    model.check_target(target)?;
    Ok(psi(&model.kind, pred, target))
}

/// A subgradient of `psi(., target)` at `pred`; zero at the minimizer of
/// the p-loss.
pub fn grad_loss(model: &LossModel, pred: f64, target: f64) -> Result<f64> {
    model.check_pred(pred)?;
    model.check_target(target)?;
    Ok(dpsi(&model.kind, pred, target))
}

/// Second derivative; `+inf` at the kink of the p-loss with `p < 2`.
pub fn hess_loss(model: &LossModel, pred: f64, target: f64) -> Result<f64> {
    model.check_pred(pred)?;
    model.check_target(target)?;
    Ok(match model.kind {
        LossKind::Square => 2.0,
        LossKind::PLoss { p } => {
            let z = (pred - target).abs();
            if z == 0.0 && p < 2.0 {
                f64::INFINITY
            } else if p == 2.0 {
                2.0
            } else {
                p * (p - 1.0) * z.powf(p - 2.0)
            }
        }
        LossKind::Log | LossKind::Glm { .. } => 1.0 / (pred * pred),
    })
}

/// Exp-concavity modulus: `(p - 1) / (p 2^p B^p)` for p-losses (and the
/// square loss with `p = 2`), `1` for the log families.
pub fn exp_concavity_eta(kind: &LossKind, b: f64) -> Result<f64> {
    match kind.exponent() {
        Some(p) => {
            check_p_and_b(p, b)?;
            Ok((p - 1.0) / (p * 2f64.powf(p) * b.powf(p)))
        }
        None => Ok(1.0),
    }
}

/// Lipschitz bound: `p 2^p B^(p-1)` for p-losses, `1/delta` for the log
/// families on `[delta, 1]`.
pub fn lipschitz_bound(kind: &LossKind, b: f64, delta: f64) -> Result<f64> {
    match kind.exponent() {
        Some(p) => {
            check_p_and_b(p, b)?;
            Ok(p * 2f64.powf(p) * b.powf(p - 1.0))
        }
        None => {
            check_delta_range(delta)?;
            Ok(1.0 / delta)
        }
    }
}

/// Range bound: `2^p B^p` for p-losses, `ln(1/delta)` for the log families.
pub fn range_bound(kind: &LossKind, b: f64, delta: f64) -> Result<f64> {
    match kind.exponent() {
        Some(p) => {
            check_p_and_b(p, b)?;
            Ok(2f64.powf(p) * b.powf(p))
        }
        None => {
            check_delta_range(delta)?;
            Ok((1.0 / delta).ln())
        }
    }
}

fn check_p_and_b(p: f64, b: f64) -> Result<()> {
    if !(p > 1.0) {
        return Err(Error::invalid(format!("p must exceed 1, got {p}")));
    }
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::invalid(format!("B must be positive, got {b}")));
    }
    Ok(())
}

fn check_delta_range(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    Ok(())
}

/// `mu(d(x, y))` for the model's canonical descriptor.
pub fn canonical_modulus(model: &LossModel, x: f64, y: f64, target: f64) -> Result<f64> {
    model.check_pred(x)?;
    model.check_pred(y)?;
    model.modulus.modulus(model, x, y, target)
}

/// Scalar likelihood regularization `(1 - delta) f + delta`.
pub fn regularize_likelihood(f: f64, delta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::Domain {
            what: "likelihood",
            value: f,
            lo: 0.0,
            hi: 1.0,
        });
    }
    check_regularization_delta(delta)?;
    Ok((1.0 - delta) * f + delta)
}

/// Simplex regularization: mixes a probability vector with the uniform
/// distribution, `p -> (1 - delta) p + delta / k`.
pub fn regularize_simplex(probs: &[f64], delta: f64) -> Result<Vec<f64>> {
    check_regularization_delta(delta)?;
    let k = probs.len() as f64;
    Ok(probs
        .iter()
        .map(|&p| (1.0 - delta) * p + delta / k)
        .collect())
}

pub(crate) fn check_regularization_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::invalid(format!(
            "regularization delta must lie in (0, 1/2], got {delta}"
        )));
    }
    Ok(())
}

/// Largest loss increase caused by the simplex regularizer,
/// `max_f [-ln((1-delta) f + delta/k) + ln f] = ln(k / (k - k delta + delta)) v 0`.
/// For `k = 1` (the scalar regularizer) this is 0.
pub fn regularization_upper_gap(delta: f64, k: usize) -> f64 {
    let k = k as f64;
    (k / (k - k * delta + delta)).ln().max(0.0)
}

/// Smallest likelihood `f` for which `-ln f - 2 delta <= -ln((1-delta) f + delta/k)`.
pub fn regularization_lower_threshold(delta: f64, k: usize) -> f64 {
    delta / (k as f64 * ((2.0 * delta).exp_m1() + delta))
}

/// Numerically stable soft-max.
pub fn link_softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Right inverse of the soft-max on the open simplex: centered log-probabilities.
pub fn link_right_inverse(probs: &[f64]) -> Result<Vec<f64>> {
    if probs.is_empty() {
        return Err(Error::invalid("empty probability vector"));
    }
    if let Some(&bad) = probs.iter().find(|&&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::invalid(format!(
            "right inverse needs strictly positive probabilities, got {bad}"
        )));
    }
    let logs: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    Ok(logs.into_iter().map(|l| l - mean).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn eval_examples() {
        let sq = LossModel::square(5.0).unwrap();
        assert_eq!(eval_loss(&sq, 3.0, 0.0).unwrap(), 9.0);
        let lg = LossModel::log(DELTA_MIN).unwrap();
        assert_eq!(eval_loss(&lg, 1.0, 0.0).unwrap(), 0.0);
        let p3 = LossModel::p_loss(3.0, 1.0).unwrap();
        assert_eq!(eval_loss(&p3, 0.5, -0.5).unwrap(), 1.0);
    }

    #[test]
    fn grad_examples() {
        let sq = LossModel::square(2.0).unwrap();
        assert_eq!(grad_loss(&sq, 1.0, 0.0).unwrap(), 2.0);
        let lg = LossModel::log(0.1).unwrap();
        assert_eq!(grad_loss(&lg, 0.5, 0.0).unwrap(), -2.0);
        let p3 = LossModel::p_loss(3.0, 1.0).unwrap();
        assert_eq!(grad_loss(&p3, 0.2, 0.2).unwrap(), 0.0);
        let p15 = LossModel::p_loss(1.5, 1.0).unwrap();
        assert_eq!(grad_loss(&p15, 0.2, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn domain_violations_are_rejected() {
        let lg = LossModel::log(0.1).unwrap();
        assert!(matches!(
            eval_loss(&lg, 0.05, 0.0),
            Err(Error::Domain { .. })
        ));
        let p3 = LossModel::p_loss(3.0, 1.0).unwrap();
        assert!(eval_loss(&p3, 1.5, 0.0).is_err());
        assert!(eval_loss(&p3, 0.5, 2.0).is_err());
        let glm = LossModel::glm(3, 0.1).unwrap();
        assert!(eval_loss(&glm, 0.5, 4.0).is_err());
        assert!(eval_loss(&glm, 0.5, 1.5).is_err());
    }

    #[test]
    fn constant_formulas() {
        let p3 = LossKind::PLoss { p: 3.0 };
        assert!(close(
            exp_concavity_eta(&p3, 1.0).unwrap(),
            1.0 / 12.0,
            1e-15
        ));
        assert_eq!(exp_concavity_eta(&LossKind::Log, 1.0).unwrap(), 1.0);
        assert!(close(
            exp_concavity_eta(&LossKind::PLoss { p: 2.0 }, 1.0).unwrap(),
            0.125,
            1e-15
        ));
        assert_eq!(
            exp_concavity_eta(&LossKind::Square, 1.0).unwrap(),
            exp_concavity_eta(&LossKind::PLoss { p: 2.0 }, 1.0).unwrap()
        );
        assert!(exp_concavity_eta(&LossKind::PLoss { p: 1.0 }, 1.0).is_err());

        assert!(close(lipschitz_bound(&p3, 1.0, 0.0).unwrap(), 24.0, 1e-12));
        assert!(close(
            lipschitz_bound(&LossKind::Log, 0.0, 0.01).unwrap(),
            100.0,
            1e-9
        ));
        assert!(close(
            lipschitz_bound(&LossKind::PLoss { p: 2.0 }, 1.0, 0.0).unwrap(),
            8.0,
            1e-12
        ));

        assert!(close(
            range_bound(&LossKind::PLoss { p: 2.0 }, 1.0, 0.0).unwrap(),
            4.0,
            1e-12
        ));
        assert!(close(
            range_bound(&LossKind::Log, 0.0, (-3f64).exp()).unwrap(),
            3.0,
            1e-12
        ));
        assert!(close(range_bound(&p3, 2.0, 0.0).unwrap(), 64.0, 1e-12));
    }

    #[test]
    fn canonical_modulus_examples() {
        let sq = LossModel::square(5.0).unwrap();
        assert_eq!(canonical_modulus(&sq, 3.0, 1.0, 0.0).unwrap(), 4.0);
        let lg = LossModel::log(0.5).unwrap();
        let v = canonical_modulus(&lg, 0.5, 1.0, 0.0).unwrap();
        assert!(close(v, 2f64.ln().powi(2) / 4.0, 1e-15));
        assert!(close(v, 0.120113, 1e-6));
        let p3 = LossModel::p_loss(3.0, 1.0).unwrap();
        assert_eq!(canonical_modulus(&p3, 0.3, 0.3, -0.2).unwrap(), 0.0);
    }

    #[test]
    fn regularization_examples() {
        assert!(close(regularize_likelihood(0.0, 0.1).unwrap(), 0.1, 1e-15));
        assert!(close(regularize_likelihood(1.0, 0.1).unwrap(), 1.0, 1e-15));
        assert!(close(regularize_likelihood(0.5, 0.1).unwrap(), 0.55, 1e-15));
        assert!(regularize_likelihood(1.2, 0.1).is_err());
        assert!(regularize_likelihood(0.5, 0.6).is_err());
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(link_softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = link_softmax(&[3f64.ln(), 0.0]);
        assert!(close(p[0], 0.75, 1e-15) && close(p[1], 0.25, 1e-15));
        let s = link_right_inverse(&[0.5, 0.5]).unwrap();
        assert_eq!(link_softmax(&s), vec![0.5, 0.5]);
        assert!(link_right_inverse(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn glm_floor_follows_simplex_regularizer() {
        let glm = LossModel::glm(4, 0.2).unwrap();
        assert!(close(glm.floor(), 0.05, 1e-15));
        assert!(close(glm.m, (20f64).ln(), 1e-12));
        assert_eq!(LossModel::glm(2, 0.0).unwrap().floor(), DELTA_MIN);
    }

    #[test]
    fn loss_input_selects_observed_label() {
        let glm = LossModel::glm(3, 0.1).unwrap();
        assert_eq!(glm.loss_input(&[0.2, 0.5, 0.3], 2.0).unwrap(), 0.5);
        assert!(glm.loss_input(&[0.2, 0.5, 0.3], 4.0).is_err());
        let sq = LossModel::square(1.0).unwrap();
        assert!(sq.loss_input(&[0.2, 0.5], 0.0).is_err());
    }

    #[test]
    fn sandwich_thresholds_are_tight() {
        for &(delta, k) in &[(0.1, 1usize), (0.3, 2), (0.5, 5)] {
            let f = regularization_lower_threshold(delta, k);
            let h = (1.0 - delta) * f + delta / k as f64;
            assert!(close(-f.ln() - 2.0 * delta, -h.ln(), 1e-12));
            let top = -((1.0 - delta) + delta / k as f64).ln();
            assert!(close(top, regularization_upper_gap(delta, k), 1e-15));
        }
    }

    #[test]
    fn omega_inverse_round_trips() {
        let desc = ModulusDescriptor {
            mu: MuKind::Omega,
            d: DistanceKind::LocalNorm,
        };
        for &z in &[0.0, 1e-3, 0.5, 3.0, 40.0] {
            assert!(close(desc.mu_inverse(desc.mu(z)), z, 1e-9 * z.max(1.0)));
        }
    }

    #[test]
    fn sampled_constants_dominate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for model in [
            LossModel::square(1.5).unwrap(),
            LossModel::p_loss(3.0, 1.0).unwrap(),
            LossModel::p_loss(1.5, 2.0).unwrap(),
            LossModel::log(0.05).unwrap(),
        ] {
            for _ in 0..10_000 {
                let (lo, hi) = model.domain;
                let x = rng.random_range(lo..=hi);
                let t = match model.target_space {
                    TargetSpace::Interval { lo, hi } => rng.random_range(lo..=hi),
                    _ => 1.0,
                };
                let v = eval_loss(&model, x, t).unwrap();
                let g = grad_loss(&model, x, t).unwrap();
                let h = hess_loss(&model, x, t).unwrap();
                assert!(v >= 0.0 && v <= model.m + 1e-9);
                assert!(g.abs() <= model.lip + 1e-9);
                if g != 0.0 && h.is_finite() {
                    assert!(g * g / h <= 1.0 / model.eta + 1e-9);
                }
            }
        }
    }
}
