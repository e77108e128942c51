//! Benchmark harness: sweeps, verification suites and instance generation on
//! top of `camdp-core`.

pub mod config;
pub mod error;
pub mod fixtures;
pub mod hardgen;
pub mod solve;
pub mod sweep;
pub mod verify;

pub use config::{InstanceSource, SweepSpec};
pub use error::{CliError, CliResult};
pub use solve::{Bench, CellOptions, SolveMode, SolveReport};
pub use sweep::{run_sweep, write_csv, CellResult};
