//! Experiment orchestration: load calibration, scenario search, the
//! end-to-end pipeline and report emission.

mod calibrate;
mod config;
mod pipeline;
mod report;
mod suite;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use calibrate::{calibrate_load, pilot_probe, CalibrationResult, Probe};
pub use config::{incremental_name, CalibrationConfig, Network, ScenarioConfig, SuiteConfig, LNN_NAME};
pub use pipeline::{record_loads, run_scenario, run_scenario_on, simulate_to_failure, ScenarioRun, SimTrace};
pub use report::{aggregate_by_class, emit_report, read_reports, tconv_table, ClassCurve, TConvRow};
pub use suite::{run_suite, scenario_suite, SuiteCandidate};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Topology(#[from] crate::topology::TopologyError),
    #[error(transparent)]
    Traffic(#[from] crate::traffic::TrafficError),
    #[error(transparent)]
    Sim(#[from] crate::eon::SimError),
    #[error(transparent)]
    Forecast(#[from] crate::forecast::ForecastError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no load above the {floor_tbps} Tbps floor runs without blocking")]
    NoFeasibleLoad { floor_tbps: f64 },
    #[error("topology is not strongly connected; restoration pilots cannot succeed")]
    NotStronglyConnected,
    #[error("search budget exhausted after {tried} failed links: found {highly} highly and {moderately} moderately impacted pairs")]
    SearchBudget { tried: usize, highly: usize, moderately: usize },
    #[error("forecasters saw different observation streams")]
    StreamMismatch,
    #[error("nothing to report")]
    EmptyReport,
    #[error("stage `{stage}` failed: {source}")]
    Stage { stage: &'static str, source: Box<HarnessError> },
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, HarnessError>;
}

impl<T, E: Into<HarnessError>> StageExt<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, HarnessError> {
        self.map_err(|e| HarnessError::Stage { stage, source: Box::new(e.into()) })
    }
}
