//! First-order optimisation toolkit for variational regularisation of linear
//! inverse problems.
//!
//! The crate is organised around four layers:
//!
//! * [`vector`] / [`linops`] — dense vectors with optional image shape and a
//!   matrix-free linear-operator algebra (dense, circulant blur, 2-D finite
//!   differences, parallel-beam X-ray transform, row subsets, block operators)
//!   with matched adjoints.
//! * [`functionals`] — extended-real convex functionals (least squares, l1,
//!   box, Kullback–Leibler, Huber, isotropic TV) with gradients, proximal
//!   maps and conjugate proximal maps.
//! * [`solvers`] — deterministic baselines (GD/NAG, PGD/FISTA, PDHG, ADMM,
//!   Condat–Vũ, PD3O, coordinate descent) and stochastic methods (SGD,
//!   SAG/SAGA, SVRG and loopless SVRG, accelerated variance reduction, SPDHG,
//!   adaptive diagonal steps) producing per-pass [`solvers::IterateTrace`]s.
//! * [`sampling`] — subset partitions over operator rows/angles, index
//!   samplers (uniform, permutation, cyclic, Herman–Meyer, importance) and
//!   smoothness diagnostics.
//!
//! All randomness flows through seeded PCG-64 generators (see [`rng`]), so
//! runs are reproducible from a single 64-bit seed.

pub mod error;
pub mod functionals;
pub mod linops;
pub mod problem;
pub mod rng;
pub mod sampling;
pub mod solvers;
pub mod vector;

pub use error::{Error, Result};
pub use functionals::Functional;
pub use linops::LinearMap;
pub use problem::{CompositeTerm, PartitionedProblem, SmoothnessInfo};
pub use sampling::{Partition, Sampler, SamplerKind};
pub use solvers::{IterateTrace, SolverConfig, StepSchedule};
pub use vector::{DenseVector, Shape};
