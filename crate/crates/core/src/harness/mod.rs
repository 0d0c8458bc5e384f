//! Experiment drivers: configuration, single runs, Monte Carlo sweeps,
//! observability sweeps and CSV output.

pub mod config;
pub mod montecarlo;
pub mod output;
pub mod run;

use thiserror::Error;

pub use config::{load_config, parse_config, InitSpec, SimConfig};
pub use montecarlo::{run_montecarlo, MetricStats, MonteCarloSummary, RunSummary};
pub use run::{init_estimates, run_inspected, run_single, RunMetrics, RunResult, TraceRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Dynamics(#[from] crate::dynamics::DynamicsError),
    #[error(transparent)]
    Sensor(#[from] crate::sensors::SensorError),
    #[error(transparent)]
    Observer(#[from] crate::observer::ObserverError),
    #[error(transparent)]
    Observability(#[from] crate::observability::ObservabilityError),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}
