//! Grid-search oracle for small local problems (dimension ≤ 3).

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::QuadraticLocal;

const FEAS_TOL: f64 = 1e-12;
const REFINEMENTS: usize = 12;
const WINDOW: f64 = 5.0;

/// Minimizes `½zᵀHz + hᵀz − μᵀz` over feasible points of a grid with
/// spacing `grid_step` covering `bounds`, then repeatedly re-grids a window
/// around the incumbent at half the spacing. Purely evaluation based; shares
/// no code with the solver.
pub fn brute_force_local(
    p: &QuadraticLocal,
    mu: &DVector<f64>,
    grid_step: f64,
    bounds: &[(f64, f64)],
) -> Result<DVector<f64>> {
    let n = p.dim();
    if bounds.len() != n || mu.len() != n {
        return Err(Error::Dimension(format!(
            "grid bounds/μ must have length {n}"
        )));
    }
    if n == 0 || n > 3 {
        return Err(Error::InvalidArgument(format!(
            "grid oracle supports dimensions 1..=3, got {n}"
        )));
    }
    if !(grid_step > 0.0)
        || bounds
            .iter()
            .any(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite())
    {
        return Err(Error::InvalidArgument("invalid grid specification".into()));
    }
    let eval = |z: &DVector<f64>| p.objective(z) - mu.dot(z);
    let mut best = search(p, &eval, grid_step, bounds).ok_or(Error::EmptyGrid)?;
    let mut step = grid_step;
    for _ in 0..REFINEMENTS {
        let window: Vec<(f64, f64)> = (0..n)
            .map(|j| {
                let (lo, hi) = bounds[j];
                (
                    (best[j] - WINDOW * step).max(lo),
                    (best[j] + WINDOW * step).min(hi),
                )
            })
            .collect();
        step *= 0.5;
        if let Some(z) = search(p, &eval, step, &window) {
            if eval(&z) <= eval(&best) {
                best = z;
            }
        }
    }
    Ok(best)
}

fn search(
    p: &QuadraticLocal,
    eval: &impl Fn(&DVector<f64>) -> f64,
    step: f64,
    bounds: &[(f64, f64)],
) -> Option<DVector<f64>> {
    let n = bounds.len();
    let counts: Vec<usize> = bounds
        .iter()
        .map(|(lo, hi)| ((hi - lo) / step + 1e-9).floor() as usize + 1)
        .collect();
    let total: usize = counts.iter().product();
    let mut z = DVector::zeros(n);
    let mut best: Option<(f64, DVector<f64>)> = None;
    for flat in 0..total {
        let mut rem = flat;
        for j in 0..n {
            z[j] = bounds[j].0 + (rem % counts[j]) as f64 * step;
            rem /= counts[j];
        }
        if p.violation(&z) > FEAS_TOL {
            continue;
        }
        let f = eval(&z);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, z.clone()));
        }
    }
    best.map(|(_, z)| z)
}
