//! Evaluation of restricted-mean-survival-time (RMST) predictors under right
//! censoring.
//!
//! * [`scoring`]: the IPCW weighted residual sum of squares (WRSS), an
//!   estimator of the mean squared error of an RMST predictor, with
//!   cross-validation and Monte-Carlo decompositions of the error.
//! * [`conformal`]: IPCW split and rank-one-out conformal prediction
//!   intervals for `T* ∧ tau`.
//! * [`loco`]: local and global leave-one-covariate-out importance,
//!   including a censoring-adjusted sign test and multi-split aggregation.
//! * [`models`]: integrated Kaplan–Meier, integrated Cox and
//!   pseudo-observation linear RMST learners.
//! * [`sim`]: simulation schemes with retained latent times.
//!
//! Event status is coded `true`/1 for an observed event, `false`/0 for a
//! censored time.

pub mod conformal;
pub mod data;
pub mod error;
pub mod io;
pub mod ipcw;
pub mod loco;
pub mod models;
pub mod rng;
pub mod scoring;
pub mod sim;
pub mod survival;

pub use data::{Observation, SurvivalDataset, TimeHorizon};
pub use error::{Error, Result};
pub use ipcw::{ipcw_weights, CensoringFit, CensoringKind, CensoringModel, WeightSet};
pub use models::{Learner, ModelKind, Predictor, RmstPredictor};
pub use survival::{kaplan_meier, StepFunction, Target};
