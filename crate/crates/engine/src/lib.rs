//! Experiment runtime for the projected robot arena.
//!
//! [`run_experiment`] drives the perception/actuation loop of `arena-core`
//! tick by tick, writes a track CSV and a JSON-lines event log, and
//! publishes telemetry. [`server::serve_control`] exposes the command and
//! telemetry protocol over TCP (line-delimited JSON) and WebSocket.

// `!(x > 0.0)` is deliberate: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod command;
pub mod config;
pub mod metrics;
pub mod orchestrator;
pub mod record;
pub mod runner;
pub mod server;
pub mod telemetry;

pub use command::{Command, CommandSource, Reply, Verb};
pub use config::{load_scenario, Mode, ScenarioConfig};
pub use orchestrator::{EngineError, Orchestrator};
pub use record::TickRecord;
pub use runner::{run_experiment, ExperimentSummary, StopReason};
pub use telemetry::{TelemetryFrame, TelemetrySink};
