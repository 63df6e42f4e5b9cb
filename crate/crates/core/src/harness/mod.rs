//! Monte Carlo engine, rate fitting, configuration, reports and the
//! experiment driver behind the command-line tool.

pub mod config;
pub mod engine;
pub mod rate;
pub mod report;
pub mod run;

pub use config::{config_schema, ExperimentConfig, ExperimentKind, Thresholds};
pub use engine::{mc_map_reduce, Engine, MeanVar};
pub use rate::{fit_rate, RateFit, RateRow, RateTable};
pub use report::{CheckResult, Counters, ReportBundle, Summary, VERSION};
pub use run::{run_experiment, RunOptions, DEFAULT_OUTPUT_DIR};
