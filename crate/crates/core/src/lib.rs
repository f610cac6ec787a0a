//! Discrete-event simulation of a cluster running mixed rigid and malleable
//! jobs under a reconfiguration-aware resource manager.
//!
//! The crate is organised by layer: [`simcore`] holds the clock and event
//! queue, [`workload`] generates jobs, [`appmodel`] turns process counts into
//! step and resize times, [`rms`] is the resource manager, [`dmr`] the
//! runtime side of reconfiguration, [`sim`] the loop that ties them together
//! and [`metrics`] the measurements taken from a run. [`scenario`] reads
//! experiment files and [`audit`] re-checks a finished trace.

pub mod appmodel;
pub mod audit;
pub mod dmr;
pub mod error;
pub mod metrics;
pub mod rms;
pub mod scenario;
pub mod sim;
pub mod simcore;
pub mod workload;

pub use appmodel::{AppCatalog, AppKind, AppModel, CostModelParams, Speedup};
pub use dmr::{DmrRequest, RedistributionPlan};
pub use error::{ConfigError, DmrError, ModelError, RmsError, ScenarioError, SimError, WorkloadError};
pub use metrics::{GainReport, JobTiming, RunSummary};
pub use rms::{Action, ActionKind, ClusterState, PolicyToggles, Reason};
pub use scenario::{parse_config, run_scenario, Scenario, ScenarioReport};
pub use sim::{simulate, Mode, SimConfig, SimOutput, Simulation};
pub use simcore::{JobId, SimTime};
pub use workload::{generate_workload, JobDescriptor, WorkloadParams};
