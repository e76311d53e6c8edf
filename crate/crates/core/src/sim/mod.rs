//! Closed-loop simulation: synthetic data, realization against the true
//! demand, receding-horizon runs and their summaries.
//!
//! Realization rule: the first-hour set points are applied as planned, the
//! grid buys or sells the electric imbalance and the thermal storage takes the
//! heat imbalance until it saturates at a bound. Heat it cannot serve or take
//! is recorded as a violation, measured as the distance the storage level
//! would have gone past the bound.

mod closed_loop;
mod data;
mod realize;
mod summary;

pub use closed_loop::{
    run_arms, run_closed_loop, ClosedLoopTrace, Controller, SimulationConfig, TraceRow, MAX_CONSECUTIVE_FAILURES,
};
pub use data::{generate_synthetic_data, SyntheticDataConfig};
pub use realize::{realize_step, RealizedStep, VIOLATION_TOL};
pub use summary::{
    read_trace_csv, severity_bin, summarize, write_combined_csv, write_trace_csv, DailyCost, Histogram, Summary,
    SEVERITY_EDGES,
};

use crate::forecast::ForecastError;
use crate::hub::HubError;
use crate::mpc::MpcError;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation input: {0}")]
    Input(String),
    #[error(transparent)]
    Hub(#[from] HubError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error("run aborted at {hour}: {reason}")]
    Aborted { hour: String, reason: String },
    #[error("io: {0}")]
    Io(String),
}
