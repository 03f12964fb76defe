//! Scenario configuration, builtin registry, experiment runner and plots
//! for the `obslab` command-line tool.

pub mod config;
pub mod registry;
pub mod runner;
pub mod study;
pub mod svg;

pub use config::{Analysis, ConfigError, ScenarioConfig};
pub use registry::{list_scenarios, Registry};
pub use runner::{run_scenario, RunReport, EXIT_CONFIG, EXIT_FAIL, EXIT_PASS};
pub use study::{refinement_study, ConvergenceTable, Order};
