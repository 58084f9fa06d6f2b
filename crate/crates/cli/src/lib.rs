//! Library side of the `mtleq` executable: configuration, commands and the
//! self-test suite.

pub mod commands;
pub mod config;
pub mod selftest;

pub use commands::{cmd_simulate, cmd_sweep, cmd_train, SimulateReport, SweepReport, TrainOptions, TrainReport};
pub use config::{ExperimentConfig, Scale};
pub use selftest::{run_selftest, SelftestOptions, SelftestReport};
