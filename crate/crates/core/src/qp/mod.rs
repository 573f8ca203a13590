//! Local subproblem solver: `argmin_{Cz ≤ c} ½ zᵀHz + hᵀz − μᵀz`.
//!
//! General instances are solved by accelerated projected gradient on the
//! constraint multipliers, with an active-set polish step that solves the
//! equality-constrained KKT system exactly once the active set is guessed.
//! Unconstrained problems and diagonal problems with axis-aligned rows are
//! solved in closed form.

mod brute;

pub use brute::brute_force_local;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::QuadraticLocal;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100_000;
const POLISH_EVERY: usize = 10;

/// Minimizer of the local subproblem with its inequality multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolution {
    pub z: DVector<f64>,
    /// One multiplier per inequality row.
    pub w: DVector<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial multipliers (clipped at zero); ignored on dimension mismatch.
    pub warm_start: Option<DVector<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            warm_start: None,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolveOptions {
            tol,
            ..Self::default()
        }
    }
}

/// `g(P, μ)`: solves the local problem to KKT tolerance `tol`.
pub fn solve_local(p: &QuadraticLocal, mu: &DVector<f64>, tol: f64) -> Result<LocalSolution> {
    solve_local_with(p, mu, &SolveOptions::with_tol(tol))
}

pub fn solve_local_with(
    p: &QuadraticLocal,
    mu: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<LocalSolution> {
    if mu.len() != p.dim() {
        return Err(Error::Dimension(format!(
            "μ has length {}, local problem has dimension {}",
            mu.len(),
            p.dim()
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let cache = p.cache()?;
    let q = p.linear() - mu;

    if p.rows() == 0 {
        let z = -(&cache.h_inv * &q);
        let w = DVector::zeros(0);
        let kkt_residual = kkt_residual(p, mu, &z, &w);
        return Ok(LocalSolution {
            z,
            w,
            kkt_residual,
            iterations: 0,
        });
    }
    if let Some(boxes) = &cache.boxes {
        return solve_box(p, mu, &q, boxes);
    }
    solve_dual(p, mu, &q, opts)
}

/// Largest KKT violation: stationarity norm, primal infeasibility, dual
/// negativity and complementary slackness.
pub fn kkt_residual(
    p: &QuadraticLocal,
    mu: &DVector<f64>,
    z: &DVector<f64>,
    w: &DVector<f64>,
) -> f64 {
    let mut stat = p.hessian() * z + p.linear() - mu;
    if p.rows() > 0 {
        stat += p.constraint_matrix().transpose() * w;
    }
    let mut r = stat.norm();
    if p.rows() > 0 {
        let slack = p.constraint_matrix() * z - p.constraint_rhs();
        for j in 0..p.rows() {
            r = r.max(slack[j].max(0.0));
            r = r.max((-w[j]).max(0.0));
            r = r.max((w[j] * slack[j]).abs());
        }
    }
    r
}

fn solve_box(
    p: &QuadraticLocal,
    mu: &DVector<f64>,
    q: &DVector<f64>,
    boxes: &[(f64, f64)],
) -> Result<LocalSolution> {
    let n = p.dim();
    let h = p.hessian();
    let cm = p.constraint_matrix();
    let cv = p.constraint_rhs();
    let mut z = DVector::zeros(n);
    for j in 0..n {
        let (lo, hi) = boxes[j];
        if lo > hi {
            return Err(Error::Infeasible);
        }
        z[j] = (-q[j] / h[(j, j)]).clamp(lo, hi);
    }
    // Attribute the stationarity gap of each clipped coordinate to the row
    // that defines the active bound.
    let mut w = DVector::zeros(p.rows());
    for j in 0..n {
        let g = h[(j, j)] * z[j] + q[j];
        if g == 0.0 {
            continue;
        }
        let binding = (0..p.rows()).find(|&r| {
            let a = cm[(r, j)];
            a != 0.0 && (a > 0.0) == (g < 0.0) && cv[r] / a == z[j]
        });
        if let Some(r) = binding {
            w[r] = -g / cm[(r, j)];
        }
    }
    let kkt_residual = kkt_residual(p, mu, &z, &w);
    Ok(LocalSolution {
        z,
        w,
        kkt_residual,
        iterations: 0,
    })
}

struct DualData<'a> {
    m: &'a DMatrix<f64>,
    h_inv_ct: &'a DMatrix<f64>,
    /// unconstrained minimizer `−H⁻¹q`
    z0: DVector<f64>,
    /// `C z0 − c`
    s0: DVector<f64>,
}

impl DualData<'_> {
    fn primal(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.z0 - self.h_inv_ct * w
    }

    /// `Cz(w) − c`, the ascent direction of the dual.
    fn slack(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.s0 - self.m * w
    }
}

fn solve_dual(
    p: &QuadraticLocal,
    mu: &DVector<f64>,
    q: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<LocalSolution> {
    let cache = p.cache()?;
    let rows = p.rows();
    let z0 = -(&cache.h_inv * q);
    let s0 = p.constraint_matrix() * &z0 - p.constraint_rhs();
    let data = DualData {
        m: &cache.dual_hessian,
        h_inv_ct: &cache.h_inv_ct,
        z0,
        s0,
    };
    let step = 1.0 / cache.dual_lipschitz.max(f64::MIN_POSITIVE);

    let mut w = match &opts.warm_start {
        Some(ws) if ws.len() == rows => ws.map(|x| x.max(0.0)),
        _ => DVector::zeros(rows),
    };
    let mut best = f64::INFINITY;

    let accept = |w: &DVector<f64>, best: &mut f64| -> Option<(DVector<f64>, f64)> {
        let z = data.primal(w);
        let r = kkt_residual(p, mu, &z, w);
        *best = best.min(r);
        (r <= opts.tol).then_some((z, r))
    };

    let mut w_prev = w.clone();
    let mut theta = 1.0_f64;
    for it in 0..=opts.max_iter {
        if it % POLISH_EVERY == 0 {
            if let Some((z, r)) = accept(&w, &mut best) {
                return Ok(LocalSolution {
                    z,
                    w,
                    kkt_residual: r,
                    iterations: it,
                });
            }
            if let Some(wp) = polish(&data, &w, step) {
                if let Some((z, r)) = accept(&wp, &mut best) {
                    return Ok(LocalSolution {
                        z,
                        w: wp,
                        kkt_residual: r,
                        iterations: it,
                    });
                }
            }
            if it > 0 && farkas_certificate(p, &w) {
                return Err(Error::Infeasible);
            }
        }
        if it == opts.max_iter {
            break;
        }
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / theta_next;
        let y = &w + (&w - &w_prev) * beta;
        let w_next = (&y + data.slack(&y) * step).map(|x| x.max(0.0));
        // restart momentum when the step reverses direction
        if (&w_next - &w).dot(&(&w - &w_prev)) < 0.0 {
            theta = 1.0;
        } else {
            theta = theta_next;
        }
        w_prev = std::mem::replace(&mut w, w_next);
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        best_residual: best,
    })
}

/// Guesses the active set from a projected step and solves the
/// equality-constrained KKT system on it.
fn polish(data: &DualData<'_>, w: &DVector<f64>, step: f64) -> Option<DVector<f64>> {
    let slack = data.slack(w);
    let active: Vec<usize> = (0..w.len())
        .filter(|&j| w[j] + step * slack[j] > 0.0)
        .collect();
    let mut out = DVector::zeros(w.len());
    if active.is_empty() {
        return Some(out);
    }
    let k = active.len();
    let sub = DMatrix::from_fn(k, k, |a, b| data.m[(active[a], active[b])]);
    let rhs = DVector::from_fn(k, |a, _| data.s0[active[a]]);
    let sol = match sub.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => sub.svd(true, true).solve(&rhs, 1e-12).ok()?,
    };
    for (a, &j) in active.iter().enumerate() {
        out[j] = sol[a].max(0.0);
    }
    Some(out)
}

/// Checks whether the diverging multiplier direction proves `{Cz ≤ c}` empty:
/// a `d ≥ 0` with `Cᵀd = 0` and `cᵀd < 0`.
fn farkas_certificate(p: &QuadraticLocal, w: &DVector<f64>) -> bool {
    let scale = w.amax();
    if scale <= 1.0 {
        return false;
    }
    let support: Vec<usize> = (0..w.len()).filter(|&j| w[j] > 1e-9 * scale).collect();
    if support.is_empty() {
        return false;
    }
    let cm = p.constraint_matrix();
    let cs = DMatrix::from_fn(support.len(), cm.ncols(), |a, c| cm[(support[a], c)]);
    let ws = DVector::from_fn(support.len(), |a, _| w[support[a]] / scale);
    // project onto null(C_Sᵀ)
    let ct = cs.transpose();
    let gram = &ct * ct.transpose();
    let coef = match gram.clone().svd(true, true).solve(&(&ct * &ws), 1e-12) {
        Ok(c) => c,
        Err(_) => return false,
    };
    let d = &ws - ct.transpose() * coef;
    if d.iter().any(|&x| x < -1e-9) || d.amax() < 1e-6 {
        return false;
    }
    let d = d.map(|x| x.max(0.0));
    let residual = (&ct * &d).amax();
    let value: f64 = support
        .iter()
        .enumerate()
        .map(|(a, &j)| p.constraint_rhs()[j] * d[a])
        .sum();
    let c_scale = p.constraint_rhs().amax().max(1.0);
    residual <= 1e-10 * cm.amax().max(1.0) && value < -1e-9 * c_scale
}
