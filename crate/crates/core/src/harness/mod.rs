//! Scenario orchestration: configuration, the shared streams, metrics and output files.

pub mod config;
pub mod metrics;
pub mod output;
pub mod run;

pub use config::{load_config, CancellerSpec, ScenarioConfig, Seeds, REFERENCE_SCENARIO};
pub use output::{format_table, write_outputs};
pub use run::{run_canceller, run_scenario, synthesize, AlgorithmRun, RunReport, Streams, SummaryRow};
