//! Command-line front end: `estimate` on a CSV described by a JSON
//! configuration, and `simulate` for the benchmark study.
//!
//! Exit codes: 0 success, 1 output not writable, 2 invalid arguments or
//! configuration, 3 data errors, 4 estimation failures.

pub mod config;
pub mod error;
pub mod estimate;
pub mod simulate;

pub use config::{Overrides, RunConfig};
pub use error::CliError;
pub use estimate::{report_json, run_estimate, EstimateReport};
pub use simulate::{run_simulate, summary_table, SimulateArgs};
