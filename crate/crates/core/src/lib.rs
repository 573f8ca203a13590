//! Differentially private distributed quadratic programming.

pub mod budget;
pub mod cases;
pub mod error;
pub mod model;
pub mod privacy;
pub mod qp;
pub mod rng;
pub mod solver;
pub mod tradeoff;

pub use error::{Error, Result};
pub use model::*;
pub use qp::{brute_force_local, solve_local, solve_local_with, LocalSolution, SolveOptions};
