//! Scenario runner for the `physobs` adaptive observer: configuration,
//! simulation, CSV traces, reports, plots and parameter sweeps.

pub mod check;
pub mod model;
pub mod plots;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod sweep;
pub mod trace;

pub use report::RunReport;
pub use runner::{RunOptions, RunOutput, RunStatus};
pub use scenario::{ConfigError, Observers, Scenario};
