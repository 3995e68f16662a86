//! Offset Rademacher localization for `(mu, d)`-convex losses.
//!
//! The crate provides certified loss models, numerical checks of the margin
//! inequalities behind localization, the two-stage star estimator (including
//! a regularized improper GLM pipeline), Monte Carlo estimation of offset
//! Rademacher suprema, closed-form risk bound evaluators and synthetic rate
//! experiments.

pub mod complexity_bounds;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod loss_models;
pub mod margins;
pub mod search;
pub mod seed;

pub use error::{Error, Result};
pub use loss_models::{LossKind, LossModel, ModulusDescriptor};
