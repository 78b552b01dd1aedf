//! Benchmark harness around the `stochograd` solvers: phantom and data
//! generation, noise pipelines, problem builders, reference solutions,
//! CSV/image persistence, and the command-line surface.

pub mod cli;
pub mod config;
pub mod data;
pub mod images;
pub mod metrics;
pub mod problems;
pub mod runner;

pub use config::{Algorithm, ExperimentConfig, ExperimentKind};
pub use problems::{build_problem, compute_reference, BuiltProblem};
pub use runner::{compare_experiment, run_experiment, RunOutput};
