//! Predictors, function classes, empirical risk minimization and the star
//! estimator.

mod convex;
mod linear;
mod star;

pub use convex::{materialize_segment, materialize_simplex, segment_erm, simplex_erm};
pub use linear::{erm_linear, ErmLinearOptions, LinearFit};
pub use star::{
    line_search_segment, regularized_star_glm, star_fit, star_fit_ball, star_select, BallStarFit,
    BallStarOptions, StarFit, StarSelection, LINE_SEARCH_TOL,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss_models::{
    check_regularization_delta, link_softmax, psi, regularize_simplex, LossModel,
};

const NORM_SLACK: f64 = 1e-12;

/// Output link of a linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkSpec {
    Identity,
    Softmax,
}

/// `x -> link(W x)` with `W` in the `2 -> inf` ball of radius `bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPredictor {
    /// `k x d` weight matrix, one row per output.
    pub weights: Vec<Vec<f64>>,
    pub bound: f64,
    pub link: LinkSpec,
}

impl LinearPredictor {
    pub fn new(weights: Vec<Vec<f64>>, bound: f64, link: LinkSpec) -> Result<Self> {
        let predictor = Self {
            weights,
            bound,
            link,
        };
        predictor.validate()?;
        Ok(predictor)
    }

    fn validate(&self) -> Result<()> {
        if self.weights.is_empty() || self.weights[0].is_empty() {
            return Err(Error::invalid("weight matrix must be nonempty"));
        }
        let d = self.weights[0].len();
        if self.weights.iter().any(|row| row.len() != d) {
            return Err(Error::invalid("weight rows have unequal lengths"));
        }
        if !(self.bound > 0.0) {
            return Err(Error::invalid(format!(
                "norm bound must be positive, got {}",
                self.bound
            )));
        }
        let worst = max_row_norm(&self.weights);
        if worst > self.bound * (1.0 + NORM_SLACK) + NORM_SLACK {
            return Err(Error::invalid(format!(
                "max row norm {worst} exceeds bound {}",
                self.bound
            )));
        }
        if self.link == LinkSpec::Softmax && self.weights.len() < 2 {
            return Err(Error::invalid("soft-max link needs k >= 2 rows"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights.iter().map(|row| dot(row, x)).collect()
    }

    pub fn output(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "feature dimension {} does not match weight dimension {}",
                x.len(),
                self.dim()
            )));
        }
        let scores = self.scores(x);
        Ok(match self.link {
            LinkSpec::Identity => scores,
            LinkSpec::Softmax => link_softmax(&scores),
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

pub(crate) fn max_row_norm(w: &[Vec<f64>]) -> f64 {
    w.iter().map(|row| dot(row, row).sqrt()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Predictor {
    /// Same output for every input.
    Constant {
        value: Vec<f64>,
    },
    /// Output looked up by example id.
    Tabular {
        values: Vec<Vec<f64>>,
    },
    Linear(LinearPredictor),
    /// Pointwise `lambda * left + (1 - lambda) * right` in prediction space.
    StarMix {
        lambda: f64,
        left: Box<Predictor>,
        right: Box<Predictor>,
    },
}

impl Predictor {
    pub fn constant(value: f64) -> Self {
        Predictor::Constant { value: vec![value] }
    }

    pub fn star_mix(lambda: f64, left: Predictor, right: Predictor) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid(format!(
                "mixing weight must lie in [0, 1], got {lambda}"
            )));
        }
        Ok(Predictor::StarMix {
            lambda,
            left: Box::new(left),
            right: Box::new(right),
        })
    }

    /// Raw output vector at `(x, id)`.
    pub fn output(&self, x: &[f64], id: usize) -> Result<Vec<f64>> {
        match self {
            Predictor::Constant { value } => Ok(value.clone()),
            Predictor::Tabular { values } => values.get(id).cloned().ok_or_else(|| {
                Error::invalid(format!(
                    "tabular predictor has {} entries, example id {id}",
                    values.len()
                ))
            }),
            Predictor::Linear(lin) => lin.output(x),
            Predictor::StarMix {
                lambda,
                left,
                right,
            } => {
                let a = left.output(x, id)?;
                let b = right.output(x, id)?;
                if a.len() != b.len() {
                    return Err(Error::invalid(
                        "star mix of predictors with different output sizes",
                    ));
                }
                Ok(a.iter()
                    .zip(&b)
                    .map(|(u, v)| lambda * u + (1.0 - lambda) * v)
                    .collect())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Predictor::Constant { value } if value.is_empty() => {
                Err(Error::invalid("constant predictor with empty value"))
            }
            Predictor::Linear(lin) => lin.validate(),
            Predictor::StarMix {
                lambda,
                left,
                right,
            } => {
                if !(0.0..=1.0).contains(lambda) {
                    return Err(Error::invalid(format!(
                        "mixing weight must lie in [0, 1], got {lambda}"
                    )));
                }
                left.validate()?;
                right.validate()
            }
            _ => Ok(()),
        }
    }
}

/// Result of [`predict`].
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Scalar(f64),
    Vector(Vec<f64>),
}

/// Evaluates a predictor. With a label (1-based) a vector output is reduced
/// to the likelihood of that label.
pub fn predict(
    predictor: &Predictor,
    x: &[f64],
    example_id: usize,
    label: Option<usize>,
) -> Result<Prediction> {
    let out = predictor.output(x, example_id)?;
    match (out.len(), label) {
        (1, _) => Ok(Prediction::Scalar(out[0])),
        (k, Some(y)) if (1..=k).contains(&y) => Ok(Prediction::Scalar(out[y - 1])),
        (k, Some(y)) => Err(Error::invalid(format!("label {y} outside 1..={k}"))),
        (_, None) => Ok(Prediction::Vector(out)),
    }
}

/// A linear ball `{x -> link(W x) : max row norm of W <= bound}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearBall {
    pub d: usize,
    pub k: usize,
    pub bound: f64,
    pub link: LinkSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ClassVariant {
    Finite { members: Vec<Predictor> },
    LinearBall(LinearBall),
}

/// A comparison class, optionally regularized toward the uniform likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionClass {
    #[serde(flatten)]
    pub variant: ClassVariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

impl FunctionClass {
    pub fn finite(members: Vec<Predictor>) -> Result<Self> {
        Self::new(ClassVariant::Finite { members }, None)
    }

    pub fn new(variant: ClassVariant, delta: Option<f64>) -> Result<Self> {
        let class = Self { variant, delta };
        class.validate()?;
        Ok(class)
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        self.delta = Some(delta);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(delta) = self.delta {
            check_regularization_delta(delta)?;
        }
        match &self.variant {
            ClassVariant::Finite { members } => {
                if members.is_empty() {
                    return Err(Error::invalid("finite class must be nonempty"));
                }
                members.iter().try_for_each(Predictor::validate)
            }
            ClassVariant::LinearBall(ball) => {
                if ball.d == 0 || ball.k == 0 || !(ball.bound > 0.0) {
                    return Err(Error::invalid(
                        "linear ball needs d >= 1, k >= 1 and a positive bound",
                    ));
                }
                if ball.link == LinkSpec::Softmax && ball.k < 2 {
                    return Err(Error::invalid("soft-max link needs k >= 2"));
                }
                Ok(())
            }
        }
    }

    pub fn members(&self) -> Result<&[Predictor]> {
        match &self.variant {
            ClassVariant::Finite { members } => Ok(members),
            ClassVariant::LinearBall(_) => Err(Error::invalid(
                "operation needs a finite class, got a linear ball",
            )),
        }
    }

    /// Applies the class regularization to a raw output.
    pub fn regularize(&self, out: Vec<f64>) -> Result<Vec<f64>> {
        match self.delta {
            None => Ok(out),
            Some(delta) => {
                if let Some(&bad) = out.iter().find(|&&p| !(0.0..=1.0 + 1e-12).contains(&p)) {
                    return Err(Error::Domain {
                        what: "likelihood",
                        value: bad,
                        lo: 0.0,
                        hi: 1.0,
                    });
                }
                if out.len() == 1 {
                    Ok(vec![(1.0 - delta) * out[0] + delta])
                } else {
                    regularize_simplex(&out, delta)
                }
            }
        }
    }

    /// Loss inputs of `predictor` on every example, after regularization,
    /// checked against the model domain.
    pub fn loss_inputs(
        &self,
        model: &LossModel,
        predictor: &Predictor,
        sample: &Sample,
    ) -> Result<Vec<f64>> {
        (0..sample.len())
            .map(|i| {
                let x = &sample.features[i];
                let y = sample.targets[i];
                let out = self.regularize(predictor.output(x, i)?)?;
                let v = model.loss_input(&out, y)?;
                model.check_pred(v)?;
                model.check_target(y)?;
                Ok(v)
            })
            .enumerate()
            .map(|(i, r): (usize, Result<f64>)| r.map_err(|e| Error::at(i, e)))
            .collect()
    }
}

/// Labelled examples; example ids are positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Sample {
    pub fn new(features: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if features.len() != targets.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} targets",
                features.len(),
                targets.len()
            )));
        }
        if targets.is_empty() {
            return Err(Error::invalid("sample must be nonempty"));
        }
        let d = features[0].len();
        if let Some(i) = features.iter().position(|x| x.len() != d) {
            return Err(Error::at(
                i,
                Error::invalid("feature dimension differs from row 0"),
            ));
        }
        Ok(Self { features, targets })
    }

    /// Targets only, with empty feature vectors (for tabular and constant classes).
    pub fn targets_only(targets: Vec<f64>) -> Result<Self> {
        let features = vec![Vec::new(); targets.len()];
        Self::new(features, targets)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }
}

/// `(1/n) sum psi(pred_i, y_i)`; domain violations name the example.
pub fn empirical_risk(model: &LossModel, predictor: &Predictor, sample: &Sample) -> Result<f64> {
    let unregularized = FunctionClass {
        variant: ClassVariant::Finite {
            members: Vec::new(),
        },
        delta: None,
    };
    let inputs = unregularized.loss_inputs(model, predictor, sample)?;
    Ok(risk_of(model, &inputs, &sample.targets))
}

/// Checks every loss input and target against the model, naming the first bad example.
pub fn validate_inputs(model: &LossModel, preds: &[f64], targets: &[f64]) -> Result<()> {
    if preds.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} predictions but {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::invalid("sample must be nonempty"));
    }
    for (i, (&p, &y)) in preds.iter().zip(targets).enumerate() {
        model
            .check_pred(p)
            .and_then(|_| model.check_target(y))
            .map_err(|e| Error::at(i, e))?;
    }
    Ok(())
}

/// Mean loss of already validated inputs.
pub(crate) fn risk_of(model: &LossModel, preds: &[f64], targets: &[f64]) -> f64 {
    let total: f64 = preds
        .iter()
        .zip(targets)
        .map(|(&p, &y)| psi(&model.kind, p, y))
        .sum();
    total / preds.len() as f64
}

/// Empirical risk minimizer over a finite class: `(index, risk)`, lowest index on ties.
pub fn erm_finite(
    model: &LossModel,
    class: &FunctionClass,
    sample: &Sample,
) -> Result<(usize, f64)> {
    let inputs = class_inputs(model, class, sample)?;
    Ok(erm_of_inputs(model, &inputs, &sample.targets))
}

/// Loss-input matrix `[member][example]` of a finite class.
pub fn class_inputs(
    model: &LossModel,
    class: &FunctionClass,
    sample: &Sample,
) -> Result<Vec<Vec<f64>>> {
    class
        .members()?
        .iter()
        .map(|m| class.loss_inputs(model, m, sample))
        .collect()
}

pub(crate) fn erm_of_inputs(
    model: &LossModel,
    inputs: &[Vec<f64>],
    targets: &[f64],
) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, preds) in inputs.iter().enumerate() {
        let r = risk_of(model, preds, targets);
        if r < best.1 {
            best = (j, r);
        }
    }
    best
}
