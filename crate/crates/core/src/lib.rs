//! Distributed free-flight control for multicopters flying to destination
//! lines, with a deterministic fleet simulator.
//!
//! Each agent follows a first-order velocity lag toward a saturated command
//! built from a line-attraction term and pairwise barrier repulsion between
//! filtered positions `ξ = p + v/l`.

pub mod config;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod math;
pub mod potential;
pub mod sim;
pub mod trace;

pub use config::{parse_scenario, parse_scenario_str, serialize, Parsed};
pub use controller::{
    advance_route, arrival_check, line_error, neighbor_set, velocity_command, Advance,
    ControllerGains, DestinationLine, NeighborView, Route,
};
pub use dynamics::{step, AgentParams, AgentState};
pub use error::{ConfigError, DomainError, OutputError, ValidationError};
pub use math::{kappa, saturate, SigmaParams, Vec2};
pub use potential::{
    barrier_gain_bij, barrier_value, composite_v1, lyapunov_line_attract, AttractorParams,
    BarrierParams,
};
pub use sim::{
    run, run_collect, EventKind, RunOutput, ScenarioConfig, ScenarioKind, SimEvent, World,
};
pub use trace::{export_plot_data, ExportKind, RunSummary, TraceRecord, TraceWriter};
