//! Scenario simulation, the closed-form overhead model, authentication
//! benchmarks and plotting.

pub mod bench;
pub mod overhead;
pub mod plots;
pub mod reference;
pub mod scenario;
mod sim;
mod artifacts;

pub use artifacts::{write_bench, write_run, BenchManifest, Manifest};
pub use scenario::{Role, Scenario, ScenarioError};
pub use sim::{
    run_scenario, Event, EventLog, LogEntry, ProbeResult, RunStats, ScorePoint, SimError, SimOutput, UpdateView,
    DENSITY_HALF_WIDTH_KM,
};
