//! Scenario files, the closed-loop simulation, run logs and metrics.

pub mod config;
pub mod log;
pub mod metrics;
pub mod operator;
pub mod reference;
pub mod sim;

pub use config::{
    BondConfig, LinkDirection, OperatorSource, ScenarioConfig, ScenarioEvent, SCHEMA_VERSION,
};
pub use log::{export_log, read_log, LogFormat, LogRow, LoggedEvent, RunLog, RunMeta};
pub use metrics::{compute_metrics, Metrics, MetricsParams};
pub use operator::{read_trace, sample_at, OperatorSample};
pub use reference::{circle_reference, Reference, ReferenceDriver, Waypoint};
pub use sim::{run_scenario, RunAborted, Simulation, TickOutput};
