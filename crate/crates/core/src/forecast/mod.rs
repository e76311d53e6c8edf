//! Seasonal Gaussian-process one-step demand predictors.

mod evaluate;
pub mod features;
mod gp;
mod history;
pub mod kernel;
mod models;
mod season;

pub use evaluate::{coverage, evaluate_one_step, residual_stats, OneStepPoint, OneStepReport, ResidualStats};
pub use features::{encode, encode_electric, encode_from_window, encode_heat, FeatureLayout, FeatureVector, ModelKind};
pub use gp::{
    fit, log_marginal_likelihood, optimize_hyperparameters, window_rows, ConditioningRows, FitDiagnostics, FitOptions,
    GpModel, ModelFile, Standardization, MODEL_SCHEMA_VERSION,
};
pub use history::DemandHistory;
pub use kernel::{kernel_eval, KernelHyperparameters};
pub use models::{model_file_name, ModelSet};
pub use season::{select_seasonal_model, Season, SeasonTable};

#[derive(Debug, thiserror::Error)]
pub enum ForecastError {
    #[error("invalid history: {0}")]
    InvalidHistory(String),
    #[error("insufficient history: {0}")]
    InsufficientHistory(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("Gram matrix not positive definite even with jitter {0:e}")]
    NotPositiveDefinite(f64),
    #[error("non-contiguous conditioning rows: {0}")]
    NonContiguous(String),
    #[error("empty training set: {0}")]
    EmptyTrainingSet(String),
    #[error("model file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}
