use nalgebra::{DMatrix, DVector};

use super::split;
use crate::error::{Error, Result};
use crate::model::{DistributedProblem, QuadraticLocal};
use crate::privacy::NoiseSchedule;
use crate::qp::solve_local;

/// Relative tolerance on `‖Eᵀw‖∞` for the dual-feasibility indicator.
pub const DUAL_FEASIBILITY_TOL: f64 = 1e-8;
const REFERENCE_TOL: f64 = 1e-10;

/// `D(w) = −Σ f_i*(w_i)` for a stacked `w`; `−∞` when `Eᵀw ≠ 0`.
pub fn dual_objective(p: &DistributedProblem, w: &DVector<f64>) -> Result<f64> {
    let total: usize = (0..p.agents()).map(|i| p.selection().local_dim(i)).sum();
    if w.len() != total {
        return Err(Error::Dimension(format!(
            "stacked dual has length {}, expected {total}",
            w.len()
        )));
    }
    dual_objective_split(p, &split(p, w))
}

pub fn dual_objective_split(p: &DistributedProblem, w: &[DVector<f64>]) -> Result<f64> {
    let sel = p.selection();
    let scale = w.iter().map(|x| x.amax()).fold(1.0, f64::max);
    for g in 0..sel.global_dim() {
        let s: f64 = sel.holders(g).iter().map(|&(a, pos)| w[a][pos]).sum();
        if s.abs() > DUAL_FEASIBILITY_TOL * scale {
            return Ok(f64::NEG_INFINITY);
        }
    }
    let mut d = 0.0;
    for (i, wi) in w.iter().enumerate() {
        // f*(w) = wᵀz − f(z) at z = g(P, w)
        let z = solve_local(p.local(i), wi, REFERENCE_TOL)
            .map_err(|e| e.at(i, 0))?
            .z;
        d -= wi.dot(&z) - p.local(i).objective(&z);
    }
    Ok(d)
}

/// Minimizer of the assembled centralized QP; by strong duality its value is `D(w*)`.
#[derive(Debug, Clone)]
pub struct CentralizedSolution {
    pub v: DVector<f64>,
    pub value: f64,
}

/// Solves `min_v Σ f_i(E_i v)` s.t. `C_i E_i v ≤ c_i` as one QP.
pub fn centralized_reference(p: &DistributedProblem) -> Result<CentralizedSolution> {
    let q = assemble(p)?;
    let sol = solve_local(&q, &DVector::zeros(q.dim()), REFERENCE_TOL)?;
    Ok(CentralizedSolution {
        value: q.objective(&sol.z),
        v: sol.z,
    })
}

fn assemble(p: &DistributedProblem) -> Result<QuadraticLocal> {
    let sel = p.selection();
    let n = sel.global_dim();
    let rows: usize = p.locals().iter().map(QuadraticLocal::rows).sum();
    let mut h = DMatrix::zeros(n, n);
    let mut lin = DVector::zeros(n);
    let mut cm = DMatrix::zeros(rows, n);
    let mut cv = DVector::zeros(rows);
    let mut r0 = 0;
    for i in 0..p.agents() {
        let q = p.local(i);
        let idx: Vec<usize> = sel
            .entries(i)
            .iter()
            .map(|&c| sel.global_index(c))
            .collect();
        for (a, &ga) in idx.iter().enumerate() {
            lin[ga] += q.linear()[a];
            for (b, &gb) in idx.iter().enumerate() {
                h[(ga, gb)] += q.hessian()[(a, b)];
            }
        }
        for r in 0..q.rows() {
            for (a, &ga) in idx.iter().enumerate() {
                cm[(r0 + r, ga)] += q.constraint_matrix()[(r, a)];
            }
            cv[r0 + r] = q.constraint_rhs()[r];
        }
        r0 += q.rows();
    }
    QuadraticLocal::new(h, lin, cm, cv)
}

/// `|D(μ) − D(w*)|` for per-agent duals.
pub fn dual_gap(
    p: &DistributedProblem,
    mu: &[DVector<f64>],
    reference: &CentralizedSolution,
) -> Result<f64> {
    Ok((dual_objective_split(p, mu)? - reference.value).abs())
}

/// Expected-suboptimality bound `4Σ(G_i² + σ_i²)/(ρ_φ² k)` with
/// `σ_i² = 2·dim(z_i)·scale²` at the largest scale among the first `k`.
pub fn suboptimality_bound(p: &DistributedProblem, noise: &NoiseSchedule, k: usize) -> Result<f64> {
    if noise.agents() != p.agents() {
        return Err(Error::Dimension(
            "noise schedule does not match the problem".into(),
        ));
    }
    let sigma_sq: Vec<f64> = (0..p.agents())
        .map(|i| noise.second_moment(i, p.selection().local_dim(i), k))
        .collect();
    suboptimality_bound_moments(p.bounds(), &sigma_sq, p.rho_phi(), k)
}

/// Same bound from raw second moments.
pub fn suboptimality_bound_moments(g: &[f64], sigma_sq: &[f64], rho: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("the bound needs k ≥ 1".into()));
    }
    if g.len() != sigma_sq.len() {
        return Err(Error::Dimension("G and σ² lists differ in length".into()));
    }
    let s: f64 = g.iter().zip(sigma_sq).map(|(g, s)| g * g + s).sum();
    Ok(4.0 * s / (rho * rho * k as f64))
}
