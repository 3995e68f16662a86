//! Synthetic rate experiments: data generators, population excess risk,
//! rate fitting and the experiment runners.

mod generators;
mod runs;

pub use generators::{
    gen_logistic_data, gen_logistic_features, gen_twopoint_data, PLossDesign, FEATURE_RADIUS,
};
pub use runs::{
    bound_vs_empirical, run_rate_experiment, BoundRow, ExcessRecord, ExperimentOutcome,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{class_inputs, risk_of, FunctionClass, Predictor, Sample};
use crate::loss_models::LossModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    LogisticRate,
    PlossRate,
    NonconvexGap,
    BoundVsEmpirical,
}

impl ExperimentName {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentName::LogisticRate => "logistic_rate",
            ExperimentName::PlossRate => "ploss_rate",
            ExperimentName::NonconvexGap => "nonconvex_gap",
            ExperimentName::BoundVsEmpirical => "bound_vs_empirical",
        }
    }
}

/// User-facing experiment settings; unset fields take per-experiment defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: Option<ExperimentName>,
    pub n_grid: Option<Vec<usize>>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub oracle_size: Option<usize>,
    pub p: Option<f64>,
    pub bound: Option<f64>,
    pub d: Option<usize>,
    pub k: Option<usize>,
    /// Regularization level; unset means `1/n` for each sample size.
    pub delta: Option<f64>,
    pub noise: Option<f64>,
    pub c: Option<f64>,
    pub members: Option<usize>,
    pub member_radius: Option<f64>,
    pub misspecification: Option<f64>,
    pub w_true: Option<Vec<Vec<f64>>>,
    pub candidates: Option<usize>,
    pub rho: Option<f64>,
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: ExperimentName,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub oracle_size: usize,
    pub p: f64,
    pub bound: f64,
    pub d: usize,
    pub k: usize,
    pub delta: Option<f64>,
    /// Noise scale: Gaussian standard deviation (two-point) or uniform half-width (p-loss).
    pub noise: f64,
    /// Half-distance between the two-point class members.
    pub c: f64,
    pub members: usize,
    pub member_radius: f64,
    pub misspecification: f64,
    pub w_true: Vec<Vec<f64>>,
    pub candidates: usize,
    pub rho: f64,
}

pub const MIN_ORACLE_SIZE: usize = 100_000;

fn default_grid() -> Vec<usize> {
    (7..=13).map(|e| 1usize << e).collect()
}

impl ExperimentConfig {
    pub fn defaults(name: ExperimentName) -> Self {
        let mut config = Self {
            name,
            n_grid: default_grid(),
            replications: 200,
            seed: 0,
            oracle_size: 1_000_000,
            p: 3.0,
            bound: 1.0,
            d: 2,
            k: 2,
            delta: None,
            noise: 0.1,
            c: 1.0,
            members: 16,
            member_radius: 0.4,
            misspecification: 0.3,
            w_true: vec![vec![1.0, 0.5], vec![-0.5, 0.25]],
            candidates: 64,
            rho: 0.05,
        };
        match name {
            ExperimentName::LogisticRate => {
                config.bound = 3.0;
            }
            ExperimentName::NonconvexGap => {
                config.replications = 10_000;
                config.noise = 1.0;
                config.p = 2.0;
            }
            ExperimentName::PlossRate | ExperimentName::BoundVsEmpirical => {}
        }
        config
    }

    /// Defaults for `spec.name` overridden by every field set in `spec`.
    pub fn resolve(spec: &ExperimentSpec) -> Result<Self> {
        let name = spec
            .name
            .ok_or_else(|| Error::invalid("experiment name is required"))?;
        let mut c = Self::defaults(name);
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = spec.$field.clone() { c.$field = v; })*
            };
        }
        take!(
            n_grid,
            replications,
            seed,
            oracle_size,
            p,
            bound,
            d,
            k,
            noise,
            c,
            members,
            member_radius,
            misspecification,
            w_true,
            candidates,
            rho
        );
        if spec.delta.is_some() {
            c.delta = spec.delta;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "n_grid must be nonempty and strictly increasing",
            ));
        }
        if self.n_grid[0] == 0 {
            return Err(Error::invalid("sample sizes must be positive"));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        if self.oracle_size < MIN_ORACLE_SIZE {
            return Err(Error::invalid(format!(
                "oracle_size must be at least {MIN_ORACLE_SIZE}, got {}",
                self.oracle_size
            )));
        }
        if let Some(delta) = self.delta {
            if !(delta > 0.0 && delta <= 0.5) {
                return Err(Error::invalid(format!(
                    "delta must lie in (0, 1/2], got {delta}"
                )));
            }
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::invalid(format!(
                "rho must lie in (0, 1), got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

/// One aggregated sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub mean_excess_risk: f64,
    pub standard_error: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub experiment: ExperimentName,
    pub estimator: String,
    pub rows: Vec<RateRow>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least squares through `(ln n, ln mean)`: `(slope, intercept, r^2)`.
/// Rows with nonpositive mean are dropped with a warning.
pub fn fit_rate(rows: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|&&(n, mean)| {
            let keep = mean > 0.0 && n > 0.0;
            if !keep {
                log::warn!("dropping row n = {n} with nonpositive mean {mean}");
            }
            keep
        })
        .map(|&(n, mean)| (n.ln(), mean.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::invalid(format!(
            "rate fit needs at least 3 rows with positive mean, got {}",
            pts.len()
        )));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid(
            "rate fit needs at least two distinct sample sizes",
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok((slope, intercept, r_squared))
}

/// Oracle-sample risk of `predictor` minus the smallest oracle-sample risk
/// among the class members (class regularization applies to both).
pub fn population_excess_risk(
    model: &LossModel,
    predictor: &Predictor,
    class: &FunctionClass,
    oracle: &Sample,
) -> Result<f64> {
    let own = class.loss_inputs(model, predictor, oracle)?;
    let risk = risk_of(model, &own, &oracle.targets);
    let best = class_inputs(model, class, oracle)?
        .iter()
        .map(|m| risk_of(model, m, &oracle.targets))
        .fold(f64::INFINITY, f64::min);
    Ok(risk - best)
}
