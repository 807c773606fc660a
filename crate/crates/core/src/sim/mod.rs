//! Deterministic scenario simulation over the node models.

mod config;
mod log;
mod runner;

pub use config::{
    validate_config, ChannelModel, ConfigError, EventKind, NetSpec, NodeSpec, ScenarioConfig,
    TimelineEvent,
};
pub use log::{parse_record, query_log, LogFilter, LogRecord};
pub use runner::{contains_bytes, resolve_seed, run_scenario, SimError, SimOutcome};
