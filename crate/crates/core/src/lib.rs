//! Complier classification, covariate-adjusted partial-identification bounds,
//! and instrument sharpness for binary instrumental variables.
//!
//! The crate is organized around a small pipeline:
//!
//! 1. [`data`] — ingest/validate IV datasets, rescale outcomes to `[0,1]`,
//!    and split units into cross-fitting folds.
//! 2. [`nuisance`] — pluggable regression learners, K-fold cross-fitting of
//!    the instrument propensity `pi_1`, treatment regressions `lambda_z`,
//!    and the transformed-outcome regressions that feed the bound estimators;
//!    evaluation of the uncentered influence functions `phi_z`, `phi_mu`.
//! 3. [`classify`] — Bayes, quantile-threshold, stochastic, and modified
//!    quantile complier classifiers with identified classification errors.
//! 4. [`bounds`] — bounds on treatment effects in identifiable subgroups, the
//!    LATE point estimator, and Imbens–Manski confidence intervals.
//! 5. [`sharpness`] — influence-function estimation of instrument strength and
//!    sharpness with Wald and logit-transformed confidence intervals.
//! 6. [`simlab`] — a probit-score data-generating process, quadrature oracles
//!    for its population moments, a Monte Carlo harness, a first-stage
//!    F-statistic demonstration, and margin-curve fitting.
//!
//! All numeric code is generic over a scalar type implementing [`num::Real`]
//! (`f32` or `f64`); public structs default the scalar to `f64`, so
//! `IVDataset`, `NuisanceFit`, and friends can be used without type
//! parameters in the common case.

pub mod bounds;
pub mod classify;
pub mod data;
pub mod error;
pub mod nuisance;
pub mod num;
pub mod sharpness;
pub mod simlab;

pub use bounds::{BoundsReport, TransformedOutcomes};
pub use classify::{ClassifierKind, ComplierAssignment, ErrorReport};
pub use data::{ColumnSpec, FoldAssignment, IVDataset, ScaleInfo};
pub use error::{Error, Result};
pub use nuisance::{LearnerSpec, NuisanceFit};
pub use num::Real;
pub use sharpness::{SharpnessReport, StrengthEstimate};
pub use simlab::{DGPConfig, OracleMoments};
