//! Finite-horizon optimal control of ensembles of discrete-time systems.
//!
//! The toolkit covers the full pipeline for average-cost problems over a
//! parameter measure: metric spaces and comparison-function calculus
//! ([`spaces`], [`comparison`]), parametrised system families and rollouts
//! ([`ensemble`]), stage/terminal cost registries and averaged objectives
//! ([`costs`]), discrete parameter measures with empirical sampling and
//! Gauss-Legendre references ([`measures`]), exact and derivative-free
//! solvers ([`solvers`]), sampling-based assumption checkers ([`verify`]),
//! and the empirical-measure convergence harness ([`gamma`]).
//!
//! With the default `parallel` feature, per-atom and per-sample loops run on
//! rayon; without it the same code paths run sequentially. Results are
//! bit-identical in both modes because reductions always happen in fixed
//! index order.

pub mod comparison;
pub mod config;
pub mod costs;
pub mod ensemble;
mod error;
mod exec;
pub mod gamma;
pub mod measures;
pub mod problem;
pub mod rng;
pub mod solvers;
pub mod spaces;
pub mod verify;

pub use error::{Error, Result};
pub use exec::configure_threads;
pub use problem::EnsembleProblem;
