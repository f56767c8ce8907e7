//! Multi-output support vector regression (M-SVR) trained by iteratively
//! reweighted least squares, together with the machinery needed to compare
//! iterated, direct and MIMO multi-step-ahead forecasting strategies:
//! chaotic benchmark generators, invertible preprocessing, Delta-test input
//! selection, PSO hyperparameter tuning, accuracy metrics with ANOVA/Tukey
//! post-hoc tests, and an end-to-end experiment harness.

pub mod error;
pub mod evaluation;
pub mod harness;
pub mod kernels;
pub mod preprocessing;
pub mod selection;
pub mod series;
pub mod simulators;
pub mod solver;
pub mod strategies;
pub mod tuning;

mod matrix_serde;

pub use error::{Error, Result};
pub use kernels::{gram, kernel_eval, GramMatrix, KernelConfig, KernelKind};
pub use series::{EmbeddedDataset, LagSet, TimeSeries};
pub use solver::{fit, Hyperparams, MsvrModel, SolverOptions};
pub use strategies::{ForecastResult, ModelKind, Regressor, Strategy};
