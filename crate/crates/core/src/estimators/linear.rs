use serde::Serialize;

use super::{dot, LinearBall, LinearPredictor, LinkSpec, Sample};
use crate::error::{Error, Result};
use crate::loss_models::{dpsi, psi, LossKind, LossModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErmLinearOptions {
    pub steps: usize,
    /// Initial step; defaults to the inverse of a curvature estimate.
    pub step_size: Option<f64>,
}

impl Default for ErmLinearOptions {
    fn default() -> Self {
        Self {
            steps: 500,
            step_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearFit {
    pub predictor: LinearPredictor,
    pub risk: f64,
    /// Objective after every accepted step, starting at `W = 0`.
    pub history: Vec<f64>,
}

/// Projects every row onto the Euclidean ball of radius `bound`.
pub(crate) fn project_rows(w: &mut [Vec<f64>], bound: f64) {
    for row in w.iter_mut() {
        let norm = dot(row, row).sqrt();
        if norm > bound {
            let s = bound / norm;
            row.iter_mut().for_each(|v| *v *= s);
        }
    }
}

enum Objective {
    /// `-ln softmax(W x)_y`.
    SoftmaxLikelihood,
    /// `psi(w . x, y)` for a scalar loss.
    Scalar(LossKind),
}

impl Objective {
    fn value(&self, w: &[Vec<f64>], sample: &Sample) -> f64 {
        let total: f64 = sample
            .features
            .iter()
            .zip(&sample.targets)
            .map(|(x, &y)| match self {
                Objective::SoftmaxLikelihood => {
                    let scores: Vec<f64> = w.iter().map(|row| dot(row, x)).collect();
                    log_sum_exp(&scores) - scores[y as usize - 1]
                }
                Objective::Scalar(kind) => psi(kind, dot(&w[0], x), y),
            })
            .sum();
        total / sample.len() as f64
    }

    fn gradient(&self, w: &[Vec<f64>], sample: &Sample) -> Vec<Vec<f64>> {
        let n = sample.len() as f64;
        let mut grad = vec![vec![0.0; w[0].len()]; w.len()];
        for (x, &y) in sample.features.iter().zip(&sample.targets) {
            match self {
                Objective::SoftmaxLikelihood => {
                    let scores: Vec<f64> = w.iter().map(|row| dot(row, x)).collect();
                    let lse = log_sum_exp(&scores);
                    let label = y as usize - 1;
                    for (j, row) in grad.iter_mut().enumerate() {
                        let p = (scores[j] - lse).exp();
                        let coef = (p - if j == label { 1.0 } else { 0.0 }) / n;
                        row.iter_mut().zip(x).for_each(|(g, &xv)| *g += coef * xv);
                    }
                }
                Objective::Scalar(kind) => {
                    let coef = dpsi(kind, dot(&w[0], x), y) / n;
                    grad[0]
                        .iter_mut()
                        .zip(x)
                        .for_each(|(g, &xv)| *g += coef * xv);
                }
            }
        }
        grad
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

/// Empirical risk minimization over a linear ball by projected gradient
/// descent from `W = 0`, halving the step on non-decrease.
///
/// Soft-max balls minimize the unregularized negative log-likelihood;
/// identity balls with `k = 1` minimize the scalar loss of `w . x`.
pub fn erm_linear(
    model: &LossModel,
    ball: &LinearBall,
    sample: &Sample,
    options: &ErmLinearOptions,
) -> Result<LinearFit> {
    if sample.dim() != ball.d {
        return Err(Error::invalid(format!(
            "sample dimension {} does not match ball dimension {}",
            sample.dim(),
            ball.d
        )));
    }
    for (i, &y) in sample.targets.iter().enumerate() {
        model.check_target(y).map_err(|e| Error::at(i, e))?;
    }
    let mean_sq = sample.features.iter().map(|x| dot(x, x)).sum::<f64>() / sample.len() as f64;
    let (objective, curvature) = match (ball.link, model.kind) {
        (LinkSpec::Softmax, kind) if kind.is_likelihood() => {
            (Objective::SoftmaxLikelihood, 0.5 * mean_sq)
        }
        (LinkSpec::Identity, kind) if ball.k == 1 && !kind.is_likelihood() => {
            let c = match kind {
                LossKind::PLoss { p } => {
                    let b = model.bound.unwrap_or(1.0);
                    p * (p - 1.0) * (2.0 * b).powf(p - 2.0)
                }
                _ => 2.0,
            };
            (Objective::Scalar(kind), c * mean_sq)
        }
        _ => {
            return Err(Error::invalid(
                "linear ERM supports soft-max balls with likelihood losses \
                 and scalar identity balls with p-losses",
            ))
        }
    };
    let mut step = options.step_size.unwrap_or(1.0 / curvature.max(1e-12));
    if !(step > 0.0) {
        return Err(Error::invalid(format!(
            "step size must be positive, got {step}"
        )));
    }

    let mut w = vec![vec![0.0; ball.d]; ball.k];
    let mut value = objective.value(&w, sample);
    let mut history = vec![value];
    for _ in 0..options.steps {
        let grad = objective.gradient(&w, sample);
        if grad.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of the linear ERM objective at risk {value}"
            )));
        }
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial: Vec<Vec<f64>> = w
                .iter()
                .zip(&grad)
                .map(|(row, g)| row.iter().zip(g).map(|(a, b)| a - step * b).collect())
                .collect();
            project_rows(&mut trial, ball.bound);
            let v = objective.value(&trial, sample);
            if v < value {
                w = trial;
                value = v;
                history.push(v);
                step *= 1.5;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(LinearFit {
        predictor: LinearPredictor::new(w, ball.bound, ball.link)?,
        risk: value,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{empirical_risk, Predictor};

    fn glm_ball(d: usize, k: usize, bound: f64) -> LinearBall {
        LinearBall {
            d,
            k,
            bound,
            link: LinkSpec::Softmax,
        }
    }

    #[test]
    fn separable_data_improves_on_zero() {
        let model = LossModel::glm(2, 0.0).unwrap();
        let features = vec![
            vec![1.0, 0.2],
            vec![0.8, -0.1],
            vec![-1.0, 0.3],
            vec![-0.7, -0.2],
        ];
        let sample = Sample::new(features, vec![1.0, 1.0, 2.0, 2.0]).unwrap();
        let fit = erm_linear(&model, &glm_ball(2, 2, 10.0), &sample, &Default::default()).unwrap();
        let risk =
            empirical_risk(&model, &Predictor::Linear(fit.predictor.clone()), &sample).unwrap();
        assert!(risk <= 2f64.ln());
        assert!((risk - fit.risk).abs() < 1e-12);
    }

    #[test]
    fn single_example_descent_is_monotone() {
        let model = LossModel::glm(2, 0.0).unwrap();
        let sample = Sample::new(vec![vec![1.0]], vec![1.0]).unwrap();
        let fit = erm_linear(&model, &glm_ball(1, 2, 3.0), &sample, &Default::default()).unwrap();
        assert!(fit.history.len() > 2);
        assert!(fit.history.windows(2).all(|w| w[1] < w[0]));
        assert!(fit
            .predictor
            .weights
            .iter()
            .all(|r| dot(r, r).sqrt() <= 3.0 + 1e-12));
    }

    #[test]
    fn least_squares_recovers_closed_form() {
        // y = 0.3 x1 - 0.2 x2 exactly; the minimizer lies inside the ball.
        let model = LossModel::square(5.0).unwrap();
        let features: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = i as f64 / 40.0;
                vec![(7.0 * t).sin(), (3.0 * t + 0.5).cos()]
            })
            .collect();
        let targets = features.iter().map(|x| 0.3 * x[0] - 0.2 * x[1]).collect();
        let sample = Sample::new(features, targets).unwrap();
        let ball = LinearBall {
            d: 2,
            k: 1,
            bound: 2.0,
            link: LinkSpec::Identity,
        };
        let fit = erm_linear(&model, &ball, &sample, &Default::default()).unwrap();
        let w = &fit.predictor.weights[0];
        assert!(
            (w[0] - 0.3).abs() < 1e-3 && (w[1] + 0.2).abs() < 1e-3,
            "{w:?}"
        );
    }

    #[test]
    fn rejects_unsupported_pairs() {
        let model = LossModel::square(1.0).unwrap();
        let sample = Sample::new(vec![vec![1.0]], vec![1.0]).unwrap();
        assert!(erm_linear(&model, &glm_ball(1, 2, 1.0), &sample, &Default::default()).is_err());
    }
}
