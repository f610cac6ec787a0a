use std::path::PathBuf;

use thiserror::Error;

use crate::simcore::{JobId, SimTime};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("causality violation: event at {at} scheduled while clock is {now}")]
    Causality { at: SimTime, now: SimTime },
    #[error("invalid workload: {0}")]
    Workload(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Rms(#[from] RmsError),
    #[error(transparent)]
    Dmr(#[from] DmrError),
}

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("invalid workload parameters: {0}")]
    InvalidParams(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("{procs} processes outside the application range [{min}, {max}]")]
    OutOfDomain { procs: u32, min: u32, max: u32 },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RmsError {
    #[error("job {0} already submitted")]
    DuplicateJob(JobId),
    #[error("job {0} is not running")]
    NotRunning(JobId),
    #[error("inconsistent request: {0}")]
    InconsistentRequest(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DmrError {
    #[error("job {0} is not flexible and may not call the reconfiguration API")]
    NotFlexible(JobId),
    #[error("cannot shrink {old_world} processes by factor {factor}")]
    Indivisible { old_world: u32, factor: u32 },
    #[error("invalid resizing factor {0}")]
    InvalidFactor(u32),
    #[error(transparent)]
    Rms(#[from] RmsError),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("workload: {0}")]
    Workload(#[from] WorkloadError),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("runs are not over the same workload: {0}")]
    WorkloadMismatch(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

impl ScenarioError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ScenarioError::Io {
            path: path.into(),
            source,
        }
    }
}
