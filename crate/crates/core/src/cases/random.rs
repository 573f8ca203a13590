//! Seeded random instances for property tests and benchmarks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::model::{DistributedProblem, Graph, QuadraticLocal, SelectionMap};
use crate::rng::{stream, Domain};

/// Bound `G_i` attached to every random local problem.
pub const RANDOM_BOUND: f64 = 10.0;

/// Random strongly convex local problem with `rows` normalized half-space
/// constraints, each at distance at least `0.3` from the origin (so the
/// origin is strictly feasible). Hessian eigenvalues lie roughly in `[1, 2]`.
pub fn random_local<R: Rng + ?Sized>(rng: &mut R, dim: usize, rows: usize) -> QuadraticLocal {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let h = (a.transpose() * &a) / (dim as f64 * 2.0).max(1.0) + DMatrix::identity(dim, dim);
    let h = (&h + h.transpose()) * 0.5;
    let lin = DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0));
    let mut c = DMatrix::zeros(rows, dim);
    let mut rhs = DVector::zeros(rows);
    for r in 0..rows {
        let mut row = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        if row.norm() < 1e-3 {
            row[0] = 1.0;
        }
        row /= row.norm();
        c.row_mut(r).copy_from(&row.transpose());
        rhs[r] = rng.random_range(0.3..1.5);
    }
    QuadraticLocal::new(h, lin, c, rhs).expect("random local problem is well formed")
}

/// Random connected problem with `2..=max_agents` agents, each owning
/// `1..=max_dim` components, a few constraint rows per agent and `G_i = 10`.
pub fn random_problem(seed: u64, max_agents: usize, max_dim: usize) -> DistributedProblem {
    let mut rng = stream(seed, Domain::Instance, 0, 0);
    let m = rng.random_range(2..=max_agents.max(2));
    // random spanning tree plus a few extra edges
    let mut edges: Vec<(usize, usize)> = (1..m).map(|i| (rng.random_range(0..i), i)).collect();
    for _ in 0..m / 2 {
        let a = rng.random_range(0..m);
        let b = rng.random_range(0..m);
        if a != b {
            edges.push((a, b));
        }
    }
    let graph = Graph::from_edges(m, edges);
    let owned: Vec<usize> = (0..m)
        .map(|_| rng.random_range(1..=max_dim.max(1)))
        .collect();
    let selection = SelectionMap::neighborhood(&graph, &owned);
    let locals = (0..m)
        .map(|i| {
            let dim = selection.local_dim(i);
            let rows = rng.random_range(0..=2);
            random_local(&mut rng, dim, rows)
        })
        .collect();
    DistributedProblem::new(graph, selection, locals, vec![RANDOM_BOUND; m])
        .expect("random problem is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_valid() {
        for seed in 0..20 {
            let a = random_problem(seed, 4, 3);
            let b = random_problem(seed, 4, 3);
            assert_eq!(a.hash(), b.hash());
            assert!(a.validate().is_empty());
        }
    }
}
