//! Noisy distributed iteration (the mechanism), its dual proximal-gradient
//! counterpart, and dual-objective bookkeeping.

mod algorithm1;
mod algorithm2;
mod dual;
mod export;

pub use algorithm1::{
    run_algorithm1, run_algorithm1_with, AgentState, BoundViolation, IterationState, Transcript,
};
pub use algorithm2::{run_algorithm2, run_algorithm2_with, DualState};
pub use dual::{
    centralized_reference, dual_gap, dual_objective, dual_objective_split, suboptimality_bound,
    suboptimality_bound_moments, CentralizedSolution, DUAL_FEASIBILITY_TOL,
};
pub use export::{RunSummary, TRANSCRIPT_CSV_VERSION};

pub(crate) use algorithm1::iterate;

use nalgebra::DVector;

use crate::qp::DEFAULT_TOL;

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// KKT tolerance of every local solve.
    pub tol: f64,
    /// Reuse each agent's previous constraint multipliers as the next initial guess.
    pub warm_start: bool,
    /// Initial duals `μ_i^0` (zero when absent).
    pub mu0: Option<Vec<DVector<f64>>>,
    /// Solve the agents of a round in parallel.
    pub parallel: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            tol: DEFAULT_TOL,
            warm_start: true,
            mu0: None,
            parallel: true,
        }
    }
}

/// Concatenates per-agent vectors into the stacked layout of `E`.
pub fn stack(parts: &[DVector<f64>]) -> DVector<f64> {
    let n = parts.iter().map(|p| p.len()).sum();
    DVector::from_iterator(n, parts.iter().flat_map(|p| p.iter().copied()))
}

/// Inverse of `stack` for the local dimensions of `p`.
pub fn split(p: &crate::model::DistributedProblem, w: &DVector<f64>) -> Vec<DVector<f64>> {
    let mut off = 0;
    (0..p.agents())
        .map(|i| {
            let d = p.selection().local_dim(i);
            let part = w.rows(off, d).into_owned();
            off += d;
            part
        })
        .collect()
}
