//! Command-line orchestration: configuration, reports, DOT export and the
//! verify/repair pipeline.

pub mod config;
pub mod dot;
pub mod pipeline;
pub mod report;

pub use config::{load_config, RunConfig};
pub use dot::{chain_to_dot, export_dot};
pub use pipeline::{run_verify_repair, Mode, RunOutcome};
pub use report::{write_report, Report};
