//! Benchmark harness for the squirrel optimizer: builtin objectives, a
//! paired random-search baseline and CSV reporting.

pub mod functions;
pub mod report;
pub mod runner;

pub use functions::{builtin_functions, select_functions, FuncSpec};
pub use runner::{run_experiment, run_one, OptimizerKind, RunResult};
