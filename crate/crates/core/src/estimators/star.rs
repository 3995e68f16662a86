use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::linear::{erm_linear, project_rows, ErmLinearOptions};
use super::{
    class_inputs, dot, erm_of_inputs, risk_of, validate_inputs, ClassVariant, FunctionClass,
    LinearBall, LinearPredictor, LinkSpec, Predictor, Sample,
};
use crate::error::{Error, Result};
use crate::loss_models::{dpsi, link_right_inverse, link_softmax, psi, LossModel};
use crate::search::golden_section;
use crate::seed::rng_from;

/// Interval width at which the mixing-weight search stops.
pub const LINE_SEARCH_TOL: f64 = 1e-10;

/// Minimizes `lambda -> E_n psi(lambda a + (1 - lambda) b)` over `[0, 1]`.
///
/// Returns `(lambda, risk)`; `lambda = 1` when `a == b` or on ties.
pub fn line_search_segment(
    model: &LossModel,
    preds_a: &[f64],
    preds_b: &[f64],
    targets: &[f64],
) -> Result<(f64, f64)> {
    validate_inputs(model, preds_a, targets)?;
    validate_inputs(model, preds_b, targets)?;
    Ok(line_search_unchecked(model, preds_a, preds_b, targets))
}

pub(crate) fn line_search_unchecked(
    model: &LossModel,
    a: &[f64],
    b: &[f64],
    targets: &[f64],
) -> (f64, f64) {
    if a == b {
        return (1.0, risk_of(model, a, targets));
    }
    let n = targets.len() as f64;
    let kind = model.kind;
    let mixed = |lambda: f64| {
        let total: f64 = a
            .iter()
            .zip(b)
            .zip(targets)
            .map(|((&u, &v), &y)| psi(&kind, lambda * u + (1.0 - lambda) * v, y))
            .sum();
        total / n
    };
    golden_section(mixed, 0.0, 1.0, LINE_SEARCH_TOL)
}

/// Indices and weights chosen by the two-stage procedure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StarSelection {
    pub erm: usize,
    pub partner: usize,
    pub lambda: f64,
    pub erm_risk: f64,
    pub star_risk: f64,
}

/// Two-stage star procedure on a loss-input matrix `[member][example]`
/// whose entries are already validated.
///
/// Stage 1 picks the empirical risk minimizer (lowest index on ties);
/// stage 2 line-searches the segment from it to every other member and keeps
/// the best, again lowest index on ties. Without a strict improvement the
/// partner is the minimizer itself with `lambda = 1`.
pub fn star_select(model: &LossModel, inputs: &[Vec<f64>], targets: &[f64]) -> StarSelection {
    let (erm, erm_risk) = erm_of_inputs(model, inputs, targets);
    let mut best = StarSelection {
        erm,
        partner: erm,
        lambda: 1.0,
        erm_risk,
        star_risk: erm_risk,
    };
    for (s, preds) in inputs.iter().enumerate() {
        if s == erm {
            continue;
        }
        let (lambda, risk) = line_search_unchecked(model, &inputs[erm], preds, targets);
        if risk < best.star_risk {
            best.partner = s;
            best.lambda = lambda;
            best.star_risk = risk;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StarFit {
    pub erm: Predictor,
    pub partner: Predictor,
    pub lambda: f64,
    /// `lambda * erm + (1 - lambda) * partner`.
    pub combined: Predictor,
    pub erm_risk: f64,
    pub star_risk: f64,
    /// Positions in the (materialized) candidate list.
    pub erm_index: usize,
    pub partner_index: usize,
}

impl StarFit {
    fn from_selection(members: &[Predictor], sel: &StarSelection) -> Result<Self> {
        let erm = members[sel.erm].clone();
        let partner = members[sel.partner].clone();
        Ok(Self {
            combined: Predictor::star_mix(sel.lambda, erm.clone(), partner.clone())?,
            erm,
            partner,
            lambda: sel.lambda,
            erm_risk: sel.erm_risk,
            star_risk: sel.star_risk,
            erm_index: sel.erm,
            partner_index: sel.partner,
        })
    }
}

/// Star estimator over a class. Linear balls use the candidate scheme of
/// [`star_fit_ball`] with default options.
pub fn star_fit(model: &LossModel, class: &FunctionClass, sample: &Sample) -> Result<StarFit> {
    match &class.variant {
        ClassVariant::Finite { members } => {
            let inputs = class_inputs(model, class, sample)?;
            let sel = star_select(model, &inputs, &sample.targets);
            StarFit::from_selection(members, &sel)
        }
        ClassVariant::LinearBall(_) => {
            Ok(star_fit_ball(model, class, sample, &BallStarOptions::default())?.fit)
        }
    }
}

/// Candidate scheme for the star estimator over a linear ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BallStarOptions {
    /// Uniform draws from the ball added to the ERM output.
    pub candidates: usize,
    /// Alternating partner/mixing-weight refinement rounds.
    pub refine_rounds: usize,
    /// Projected gradient steps on the partner per round.
    pub refine_steps: usize,
    pub seed: u64,
    pub erm: ErmLinearOptions,
}

impl Default for BallStarOptions {
    fn default() -> Self {
        Self {
            candidates: 64,
            refine_rounds: 3,
            refine_steps: 30,
            seed: 0,
            erm: ErmLinearOptions::default(),
        }
    }
}

/// Star fit over a linear ball together with the materialized candidates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallStarFit {
    pub fit: StarFit,
    /// Finite class of all candidates, carrying the ball's regularization.
    pub candidates: FunctionClass,
    pub link: LinkSpec,
}

impl BallStarFit {
    /// Regularized output of the star mix, e.g. a probability vector.
    pub fn output(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.candidates.regularize(self.fit.combined.output(x, 0)?)
    }

    /// Scores whose soft-max reproduces [`BallStarFit::output`].
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self.link {
            LinkSpec::Softmax => link_right_inverse(&self.output(x)?),
            LinkSpec::Identity => self.output(x),
        }
    }
}

/// Improper star estimator over a soft-max linear ball regularized at `delta`.
pub fn regularized_star_glm(
    model: &LossModel,
    ball: &LinearBall,
    sample: &Sample,
    delta: f64,
    options: &BallStarOptions,
) -> Result<BallStarFit> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::invalid(format!(
            "regularization delta must lie in (0, 1/2], got {delta}"
        )));
    }
    if ball.link != LinkSpec::Softmax || !model.kind.is_likelihood() {
        return Err(Error::invalid(
            "regularized GLM star needs a soft-max ball and a likelihood loss",
        ));
    }
    let class = FunctionClass::new(ClassVariant::LinearBall(*ball), Some(delta))?;
    star_fit_ball(model, &class, sample, options)
}

/// Star estimator over a linear ball: the ERM output plus seeded uniform
/// draws form the candidate set, then alternating refinement improves the
/// partner. The margin guarantee holds relative to the returned candidates.
pub fn star_fit_ball(
    model: &LossModel,
    class: &FunctionClass,
    sample: &Sample,
    options: &BallStarOptions,
) -> Result<BallStarFit> {
    let ball = match &class.variant {
        ClassVariant::LinearBall(ball) => *ball,
        ClassVariant::Finite { .. } => {
            return Err(Error::invalid("star_fit_ball needs a linear-ball class"))
        }
    };
    if sample.dim() != ball.d {
        return Err(Error::invalid(format!(
            "sample dimension {} does not match ball dimension {}",
            sample.dim(),
            ball.d
        )));
    }
    let erm = erm_linear(model, &ball, sample, &options.erm)?.predictor;
    let mut rng = rng_from(options.seed, &[]);
    let mut weights = vec![erm.weights];
    for _ in 0..options.candidates {
        weights.push(
            (0..ball.k)
                .map(|_| uniform_in_ball(&mut rng, ball.d, ball.bound))
                .collect(),
        );
    }
    let ctx = Partner {
        model,
        class,
        sample,
        ball,
    };
    let mut inputs = weights
        .iter()
        .map(|w| ctx.inputs(w))
        .collect::<Result<Vec<_>>>()?;
    let targets = &sample.targets;
    let mut sel = star_select(model, &inputs, targets);

    for _ in 0..options.refine_rounds {
        if sel.lambda >= 1.0 {
            break;
        }
        let refined = ctx.descend(
            &weights[sel.partner],
            &inputs[sel.erm],
            sel.lambda,
            options.refine_steps,
        )?;
        let refined_inputs = ctx.inputs(&refined)?;
        let own_risk = risk_of(model, &refined_inputs, targets);
        weights.push(refined);
        inputs.push(refined_inputs);
        if own_risk < sel.erm_risk {
            sel = star_select(model, &inputs, targets);
            continue;
        }
        let last = inputs.len() - 1;
        let (lambda, risk) = line_search_unchecked(model, &inputs[sel.erm], &inputs[last], targets);
        if risk < sel.star_risk {
            sel.partner = last;
            sel.lambda = lambda;
            sel.star_risk = risk;
        }
    }

    let members: Vec<Predictor> = weights
        .into_iter()
        .map(|w| {
            Predictor::Linear(LinearPredictor {
                weights: w,
                bound: ball.bound,
                link: ball.link,
            })
        })
        .collect();
    let fit = StarFit::from_selection(&members, &sel)?;
    Ok(BallStarFit {
        fit,
        candidates: FunctionClass::new(ClassVariant::Finite { members }, class.delta)?,
        link: ball.link,
    })
}

/// Uniform draw from the Euclidean ball of radius `r` in `R^d`.
pub(crate) fn uniform_in_ball<R: Rng>(rng: &mut R, d: usize, r: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let norm = dot(&v, &v).sqrt();
    let u: f64 = rng.random();
    let radius = r * u.powf(1.0 / d as f64);
    if norm > 0.0 {
        v.iter_mut().for_each(|c| *c *= radius / norm);
    }
    v
}

/// Loss inputs of a weight matrix and their gradients, for partner refinement.
struct Partner<'a> {
    model: &'a LossModel,
    class: &'a FunctionClass,
    sample: &'a Sample,
    ball: LinearBall,
}

impl Partner<'_> {
    fn inputs(&self, w: &[Vec<f64>]) -> Result<Vec<f64>> {
        let predictor = Predictor::Linear(LinearPredictor {
            weights: w.to_vec(),
            bound: self.ball.bound,
            link: self.ball.link,
        });
        self.class.loss_inputs(self.model, &predictor, self.sample)
    }

    /// Objective `E_n psi(lambda a + (1 - lambda) h(w))`; `None` off the domain.
    fn objective(&self, w: &[Vec<f64>], anchor: &[f64], lambda: f64) -> Option<f64> {
        let h = self.inputs(w).ok()?;
        let mixed: Vec<f64> = anchor
            .iter()
            .zip(&h)
            .map(|(&a, &b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        Some(risk_of(self.model, &mixed, &self.sample.targets))
    }

    fn gradient(&self, w: &[Vec<f64>], anchor: &[f64], lambda: f64) -> Vec<Vec<f64>> {
        let k = w.len();
        let scale = 1.0 - self.class.delta.unwrap_or(0.0);
        let n = self.sample.len() as f64;
        let mut grad = vec![vec![0.0; self.ball.d]; k];
        for (i, x) in self.sample.features.iter().enumerate() {
            let y = self.sample.targets[i];
            let scores: Vec<f64> = w.iter().map(|row| dot(row, x)).collect();
            // d h / d scores, where h is the loss input at example i
            let (h, dh): (f64, Vec<f64>) = match self.ball.link {
                LinkSpec::Identity => {
                    let h = if self.class.delta.is_some() {
                        scale * scores[0] + (1.0 - scale)
                    } else {
                        scores[0]
                    };
                    let mut dh = vec![0.0; k];
                    dh[0] = scale;
                    (h, dh)
                }
                LinkSpec::Softmax => {
                    let p = link_softmax(&scores);
                    let label = y as usize - 1;
                    let h = scale * p[label] + (1.0 - scale) / k as f64;
                    let dh = (0..k)
                        .map(|j| {
                            let ind = if j == label { 1.0 } else { 0.0 };
                            scale * p[label] * (ind - p[j])
                        })
                        .collect();
                    (h, dh)
                }
            };
            let mixed = lambda * anchor[i] + (1.0 - lambda) * h;
            let outer = dpsi(&self.model.kind, mixed, y) * (1.0 - lambda) / n;
            for (row, &g) in grad.iter_mut().zip(&dh) {
                row.iter_mut()
                    .zip(x)
                    .for_each(|(r, &xv)| *r += outer * g * xv);
            }
        }
        grad
    }

    /// Projected gradient descent on the partner with `lambda` fixed.
    fn descend(
        &self,
        start: &[Vec<f64>],
        anchor: &[f64],
        lambda: f64,
        steps: usize,
    ) -> Result<Vec<Vec<f64>>> {
        let mut w = start.to_vec();
        let mut value = self
            .objective(&w, anchor, lambda)
            .ok_or_else(|| Error::invalid("refinement started outside the loss domain"))?;
        let mean_sq =
            self.sample.features.iter().map(|x| dot(x, x)).sum::<f64>() / self.sample.len() as f64;
        let mut step = 1.0 / mean_sq.max(1e-12);
        for _ in 0..steps {
            let grad = self.gradient(&w, anchor, lambda);
            if grad.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite("partner refinement gradient".into()));
            }
            let mut accepted = false;
            for _ in 0..60 {
                let mut trial: Vec<Vec<f64>> = w
                    .iter()
                    .zip(&grad)
                    .map(|(row, g)| row.iter().zip(g).map(|(a, b)| a - step * b).collect())
                    .collect();
                project_rows(&mut trial, self.ball.bound);
                match self.objective(&trial, anchor, lambda) {
                    Some(v) if v < value => {
                        w = trial;
                        value = v;
                        step *= 1.5;
                        accepted = true;
                        break;
                    }
                    _ => step *= 0.5,
                }
            }
            if !accepted {
                break;
            }
        }
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::empirical_risk;

    #[test]
    fn line_search_square_midpoint() {
        let sq = LossModel::square(2.0).unwrap();
        let (lambda, risk) =
            line_search_segment(&sq, &[1.0, 1.0], &[-1.0, -1.0], &[0.0, 0.0]).unwrap();
        assert!((lambda - 0.5).abs() < 1e-9);
        assert!(risk < 1e-18);
    }

    #[test]
    fn line_search_equal_endpoints_returns_one() {
        let sq = LossModel::square(2.0).unwrap();
        let (lambda, risk) =
            line_search_segment(&sq, &[0.3, 0.1], &[0.3, 0.1], &[0.0, 0.0]).unwrap();
        assert_eq!(lambda, 1.0);
        assert!((risk - 0.05).abs() < 1e-15);
    }

    #[test]
    fn line_search_log_matches_dense_grid() {
        let log = LossModel::log(0.1).unwrap();
        let a = [0.2, 0.9];
        let b = [0.9, 0.2];
        let t = [0.0, 0.0];
        let (_, risk) = line_search_segment(&log, &a, &b, &t).unwrap();
        let grid = 1_000_000;
        let oracle = (0..=grid)
            .map(|j| {
                let l = j as f64 / grid as f64;
                let u = l * a[0] + (1.0 - l) * b[0];
                let v = l * a[1] + (1.0 - l) * b[1];
                0.5 * (-u.ln() - v.ln())
            })
            .fold(f64::INFINITY, f64::min);
        assert!((risk - oracle).abs() < 1e-8);
    }

    #[test]
    fn singleton_star_is_erm() {
        let sq = LossModel::square(2.0).unwrap();
        let s = Sample::targets_only(vec![0.5, -0.2]).unwrap();
        let class = FunctionClass::finite(vec![Predictor::constant(0.1)]).unwrap();
        let fit = star_fit(&sq, &class, &s).unwrap();
        assert_eq!(fit.lambda, 1.0);
        assert_eq!(fit.partner, fit.erm);
        assert_eq!(fit.star_risk, fit.erm_risk);
    }

    #[test]
    fn two_point_star_beats_members() {
        let sq = LossModel::square(2.0).unwrap();
        let s = Sample::targets_only(vec![0.5, 0.5, 0.5]).unwrap();
        let class = FunctionClass::finite(vec![Predictor::constant(0.0), Predictor::constant(1.0)])
            .unwrap();
        let fit = star_fit(&sq, &class, &s).unwrap();
        assert!(fit.star_risk < 0.25 - 1e-6);
        let grid_best = (0..=10_000)
            .map(|j| {
                let l = j as f64 / 10_000.0;
                (l * 0.0 + (1.0 - l) * 1.0 - 0.5f64).powi(2)
            })
            .fold(f64::INFINITY, f64::min);
        assert!((fit.star_risk - grid_best).abs() < 1e-8);
        let direct = empirical_risk(&sq, &fit.combined, &s).unwrap();
        assert!((direct - fit.star_risk).abs() < 1e-12);
    }

    #[test]
    fn glm_star_outputs_regularized_simplex() {
        let model = LossModel::glm(3, 0.5).unwrap();
        let ball = LinearBall {
            d: 2,
            k: 3,
            bound: 2.0,
            link: LinkSpec::Softmax,
        };
        let features = vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.5],
            vec![0.2, -0.3],
        ];
        let sample = Sample::new(features.clone(), vec![1.0, 2.0, 3.0, 1.0]).unwrap();
        let options = BallStarOptions {
            candidates: 4,
            ..BallStarOptions::default()
        };
        let fit = regularized_star_glm(&model, &ball, &sample, 0.5, &options).unwrap();
        assert!(fit.fit.star_risk <= fit.fit.erm_risk + 1e-12);
        for x in &features {
            let p = fit.output(x).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&v| v >= 0.5 / 3.0 - 1e-15));
            let back = link_softmax(&fit.scores(x).unwrap());
            assert!(back.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-12));
        }
        assert!(regularized_star_glm(&model, &ball, &sample, 0.0, &options).is_err());
        assert!(regularized_star_glm(&model, &ball, &sample, 0.6, &options).is_err());
    }
}
