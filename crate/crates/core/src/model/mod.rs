//! Problem representation: communication graph, selection maps, local
//! quadratic data and the adjacency metric on local parameters.

mod adjacency;
mod config;
mod graph;
mod problem;
mod quadratic;
mod selection;

pub use adjacency::{AdjacencyMetric, Block, Masks, Norm};
pub use config::InstanceFile;
pub use graph::Graph;
pub use problem::{DistributedProblem, ProblemData, ValidationReport};
pub use quadratic::{QuadraticData, QuadraticLocal, SYMMETRY_TOL};
pub use selection::{Component, SelectionMap};

use rand::Rng;

use crate::error::Result;

pub fn validate_problem(p: &DistributedProblem) -> ValidationReport {
    p.validate()
}

pub fn adjacency_distance(
    m: &AdjacencyMetric,
    p: &QuadraticLocal,
    q: &QuadraticLocal,
) -> Result<f64> {
    m.distance(p, q)
}

pub fn perturb_problem<R: Rng + ?Sized>(
    p: &QuadraticLocal,
    m: &AdjacencyMetric,
    rng: &mut R,
) -> Result<QuadraticLocal> {
    m.perturb(p, rng)
}
