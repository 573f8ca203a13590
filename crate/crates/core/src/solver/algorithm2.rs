use nalgebra::{DMatrix, DVector};

use super::algorithm1::{initial_mu, local_step};
use super::{split, stack, RunOptions};
use crate::error::{Error, Result};
use crate::model::DistributedProblem;
use crate::privacy::NoiseSchedule;

/// Dual iterate `w^k` with the gradient error `e^k` that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub k: usize,
    pub w: DVector<f64>,
    pub e: DVector<f64>,
}

/// Stochastic proximal-gradient on the dual with default options.
pub fn run_algorithm2(
    p: &DistributedProblem,
    noise: &NoiseSchedule,
    k: usize,
    seed: u64,
) -> Result<Vec<DualState>> {
    run_algorithm2_with(p, noise, k, seed, &RunOptions::default())
}

/// `w^k = prox_{τψ}(w^{k−1} − τ^k(∇φ(w^{k−1}) + e^k))`, where the prox of the
/// indicator of `{Eᵀw = 0}` is the orthogonal projection, formed densely here
/// so that this route shares no averaging code with the primal iteration.
/// `∇φ(w)` stacks the local solutions at `w_i`; `e^k` uses the same noise
/// streams as the primal iteration.
pub fn run_algorithm2_with(
    p: &DistributedProblem,
    noise: &NoiseSchedule,
    k_max: usize,
    seed: u64,
    opts: &RunOptions,
) -> Result<Vec<DualState>> {
    let report = p.validate();
    if !report.is_empty() {
        return Err(Error::Validation(report.to_string()));
    }
    noise.validate_for(p.agents(), k_max)?;
    let projector = null_space_projector(&p.selection().dense_stacked())?;
    let tau0 = p.rho_phi();
    let mut w = stack(&initial_mu(p, opts)?);
    let mut warm = vec![None; p.agents()];
    let mut out = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let tau = 1.0 / (tau0 * k as f64);
        let parts = split(p, &w);
        let step = local_step(p, noise, k, seed, &parts, &mut warm, opts)?;
        let grad = stack(&step.iter().map(|(z, _)| z.clone()).collect::<Vec<_>>());
        let e = stack(&step.into_iter().map(|(_, d)| d).collect::<Vec<_>>());
        w = &projector * (&w - (&grad + &e) * tau);
        out.push(DualState { k, w: w.clone(), e });
    }
    Ok(out)
}

/// `I − E(EᵀE)⁻¹Eᵀ`.
fn null_space_projector(e: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = e.transpose() * e;
    let chol = gram.cholesky().ok_or_else(|| {
        Error::Validation("EᵀE is singular: some component is held by nobody".into())
    })?;
    let n = e.nrows();
    Ok(DMatrix::identity(n, n) - e * chol.solve(&e.transpose()))
}
