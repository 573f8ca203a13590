//! Cumulative privacy budget and its division across agents.
//!
//! Shares are in the second-moment units of the suboptimality bound
//! (`σ_i² = E‖δ_i‖²`); `laplace_scale` converts a share into the
//! per-coordinate Laplace scale `sqrt(σ²/(2·dim))`.

mod utility;

pub use utility::{check_concavity, LogUtility, PowerUtility, Utility};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::privacy::NoiseSchedule;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    EqualSplit,
    EqualEpsilon,
    Kelly,
    VcgKelly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Budget {
    pub value: f64,
    /// `¼ρ²KS − ΣG²` before clipping at zero.
    pub raw: f64,
    /// True when no amount of noise meets the target.
    pub infeasible_target: bool,
}

/// `Σ_budget = max(0, ¼ρ_φ²·K·S_K − ΣG_i²)`.
pub fn compute_budget(rho: f64, k: usize, s_target: f64, g: &[f64]) -> Result<Budget> {
    if !(rho > 0.0 && s_target > 0.0) || k == 0 || g.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::InvalidArgument(
            "budget inputs must be positive".into(),
        ));
    }
    let raw = 0.25 * rho * rho * k as f64 * s_target - g.iter().map(|x| x * x).sum::<f64>();
    Ok(Budget {
        value: raw.max(0.0),
        raw,
        infeasible_target: raw < 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetAllocation {
    pub schema_version: u32,
    pub scheme: Scheme,
    pub sigma_budget: f64,
    /// Per-agent variance shares `σ_i²`.
    pub shares: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bids: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payments: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub floors: Option<Vec<f64>>,
    /// Laplace scales implied by the shares, once dimensions are attached.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub laplace_scales: Option<Vec<f64>>,
}

impl BudgetAllocation {
    fn new(scheme: Scheme, sigma_budget: f64, shares: Vec<f64>) -> Self {
        BudgetAllocation {
            schema_version: SCHEMA_VERSION,
            scheme,
            sigma_budget,
            shares,
            bids: None,
            payments: None,
            floors: None,
            laplace_scales: None,
        }
    }

    pub fn total(&self) -> f64 {
        self.shares.iter().sum()
    }

    /// Attaches per-agent noise dimensions and fills `laplace_scales`.
    pub fn with_dims(mut self, dims: &[usize]) -> Result<Self> {
        if dims.len() != self.shares.len() {
            return Err(Error::Dimension("one dimension per agent required".into()));
        }
        self.laplace_scales = Some(
            self.shares
                .iter()
                .zip(dims)
                .map(|(s, d)| laplace_scale(*s, *d))
                .collect(),
        );
        Ok(self)
    }

    /// Constant noise schedule realizing the shares.
    pub fn to_schedule(&self, dims: &[usize]) -> Result<NoiseSchedule> {
        let scales = self
            .clone()
            .with_dims(dims)?
            .laplace_scales
            .expect("filled");
        Ok(NoiseSchedule::per_agent(scales))
    }
}

/// Per-coordinate Laplace scale with second moment `share` over `dim` coordinates.
pub fn laplace_scale(share: f64, dim: usize) -> f64 {
    if dim == 0 {
        0.0
    } else {
        (share / (2.0 * dim as f64)).sqrt()
    }
}

fn check_budget(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "budget must be finite and ≥ 0, got {sigma}"
        )))
    }
}

/// `σ_i² = Σ/M`.
pub fn allocate_equal(sigma: f64, m: usize) -> Result<BudgetAllocation> {
    check_budget(sigma)?;
    if m == 0 {
        return Err(Error::InvalidArgument("no agents to allocate to".into()));
    }
    Ok(BudgetAllocation::new(
        Scheme::EqualSplit,
        sigma,
        vec![sigma / m as f64; m],
    ))
}

/// Equal privacy levels: `σ_i = Θ_i·sqrt(Σ/ΣΘ_j²)`, i.e. `σ_i² = Θ_i²Σ/ΣΘ_j²`.
/// Agents with `Θ_i = 0` get no noise.
pub fn allocate_equal_epsilon(sigma: f64, theta: &[f64]) -> Result<BudgetAllocation> {
    check_budget(sigma)?;
    if theta.is_empty() || theta.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidArgument(
            "Θ must be a nonempty list of finite values ≥ 0".into(),
        ));
    }
    let norm: f64 = theta.iter().map(|t| t * t).sum();
    if norm == 0.0 {
        return Err(Error::InvalidArgument("every Θ_i is zero".into()));
    }
    let shares = theta.iter().map(|t| t * t * sigma / norm).collect();
    Ok(BudgetAllocation::new(Scheme::EqualEpsilon, sigma, shares))
}

/// Closed form of the proportional-fair program: `σ_i² = w_i/Σw·Σ`.
pub fn kelly_closed_form(sigma: f64, bids: &[f64]) -> Result<Vec<f64>> {
    let total = check_bids(bids)?;
    Ok(bids.iter().map(|w| w / total * sigma).collect())
}

fn check_bids(bids: &[f64]) -> Result<f64> {
    if bids.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument("bids must be finite and ≥ 0".into()));
    }
    let total: f64 = bids.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("all bids are zero".into()));
    }
    Ok(total)
}

/// `argmax Σ w_i log σ_i²` s.t. `Σσ_i² ≤ Σ`, solved numerically.
pub fn allocate_kelly(sigma: f64, bids: &[f64]) -> Result<BudgetAllocation> {
    allocate_kelly_with_floors(sigma, bids, None)
}

pub fn allocate_kelly_with_floors(
    sigma: f64,
    bids: &[f64],
    floors: Option<&[f64]>,
) -> Result<BudgetAllocation> {
    check_budget(sigma)?;
    check_bids(bids)?;
    let utilities: Vec<&dyn Utility> = vec![&LogUtility; bids.len()];
    let shares = maximize_welfare(sigma, bids, &utilities, floors)?;
    let mut a = BudgetAllocation::new(Scheme::Kelly, sigma, shares);
    a.bids = Some(bids.to_vec());
    a.floors = floors.map(<[f64]>::to_vec);
    Ok(a)
}

/// VCG-Kelly with one utility family shared by all agents.
pub fn allocate_vcg_kelly(
    sigma: f64,
    bids: &[f64],
    family: &dyn Utility,
) -> Result<BudgetAllocation> {
    let utilities = vec![family; bids.len()];
    allocate_vcg_kelly_with(sigma, bids, &utilities, None)
}

/// Allocation maximizing `Σ w_i f_i(σ_i²)`; agent `i` pays the welfare the
/// others lose by its presence: `max_{σ^{−i}} Σ_{j≠i} w_j f_j − Σ_{j≠i} w_j f_j(σ_j²)`.
pub fn allocate_vcg_kelly_with(
    sigma: f64,
    bids: &[f64],
    utilities: &[&dyn Utility],
    floors: Option<&[f64]>,
) -> Result<BudgetAllocation> {
    check_budget(sigma)?;
    check_bids(bids)?;
    if utilities.len() != bids.len() {
        return Err(Error::Dimension("one utility per bidder required".into()));
    }
    for u in utilities {
        check_concavity(*u, sigma.max(1.0))?;
    }
    let shares = maximize_welfare(sigma, bids, utilities, floors)?;
    let m = bids.len();
    let mut payments = vec![0.0; m];
    for i in 0..m {
        let others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        if others.iter().all(|&j| bids[j] == 0.0) {
            continue;
        }
        let w: Vec<f64> = others.iter().map(|&j| bids[j]).collect();
        let u: Vec<&dyn Utility> = others.iter().map(|&j| utilities[j]).collect();
        let fl: Option<Vec<f64>> = floors.map(|f| others.iter().map(|&j| f[j]).collect());
        let without = maximize_welfare(sigma, &w, &u, fl.as_deref())?;
        let best: f64 = others
            .iter()
            .zip(&without)
            .map(|(&j, &x)| term(bids[j], utilities[j], x))
            .sum();
        let at: f64 = others
            .iter()
            .map(|&j| term(bids[j], utilities[j], shares[j]))
            .sum();
        let p = best - at;
        payments[i] = if p < 0.0 && p > -1e-10 { 0.0 } else { p };
    }
    let mut a = BudgetAllocation::new(Scheme::VcgKelly, sigma, shares);
    a.bids = Some(bids.to_vec());
    a.payments = Some(payments);
    a.floors = floors.map(<[f64]>::to_vec);
    Ok(a)
}

fn term(w: f64, u: &dyn Utility, x: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * u.value(x)
    }
}

/// Water-filling: `x_i(λ) = max(floor_i, (f_i')⁻¹(λ/w_i))` with the multiplier
/// `λ` found by bisection so that `Σx_i = Σ`.
fn maximize_welfare(
    sigma: f64,
    bids: &[f64],
    utilities: &[&dyn Utility],
    floors: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let m = bids.len();
    let floors: Vec<f64> = match floors {
        Some(f) if f.len() == m => f.to_vec(),
        Some(_) => return Err(Error::Dimension("one floor per agent required".into())),
        None => vec![0.0; m],
    };
    if floors.iter().any(|f| !(*f >= 0.0)) {
        return Err(Error::InvalidArgument("floors must be ≥ 0".into()));
    }
    let floor_total: f64 = floors.iter().sum();
    if floor_total > sigma * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "floors sum to {floor_total}, above the budget {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(vec![0.0; m]);
    }
    let alloc = |log_lambda: f64| -> Vec<f64> {
        let lambda = log_lambda.exp();
        (0..m)
            .map(|i| {
                if bids[i] == 0.0 {
                    floors[i]
                } else {
                    inverse_derivative(utilities[i], lambda / bids[i], sigma).max(floors[i])
                }
            })
            .collect()
    };
    // Σx(λ) is nonincreasing in λ
    let (mut lo, mut hi) = (-700.0_f64, 700.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if alloc(mid).iter().sum::<f64>() > sigma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = alloc(hi);
    // distribute the bisection residue proportionally among unclamped agents
    let total: f64 = x.iter().sum();
    let free: f64 = x
        .iter()
        .zip(&floors)
        .filter(|(x, f)| *x > *f)
        .map(|(x, _)| *x)
        .sum();
    if free > 0.0 && total > 0.0 {
        let factor = 1.0 + (sigma - total) / free;
        for (xi, fi) in x.iter_mut().zip(&floors) {
            if *xi > *fi {
                *xi *= factor;
            }
        }
    }
    Ok(x)
}

/// Solves `f'(x) = t` on `(0, cap]` by bisection in log space; `f'` is decreasing.
fn inverse_derivative(u: &dyn Utility, t: f64, cap: f64) -> f64 {
    if u.derivative(cap) >= t {
        return cap;
    }
    let (mut lo, mut hi) = ((cap * 1e-300).max(f64::MIN_POSITIVE).ln(), cap.ln());
    if u.derivative(lo.exp()) <= t {
        return 0.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if u.derivative(mid.exp()) > t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_examples() {
        let b = compute_budget(1.0, 100, 0.4, &[1.0, 1.0]).unwrap();
        assert!((b.value - 8.0).abs() < 1e-12 && !b.infeasible_target);
        let b = compute_budget(1.0, 100, 0.01, &[1.0, 1.0]).unwrap();
        assert_eq!(b.value, 0.0);
        assert!(b.infeasible_target);
        let b1 = compute_budget(2.0, 10, 1.0, &[1.0]).unwrap();
        let b2 = compute_budget(2.0, 20, 1.0, &[1.0]).unwrap();
        assert!(((b2.raw + 1.0) - 2.0 * (b1.raw + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn equal_split() {
        assert_eq!(allocate_equal(8.0, 2).unwrap().shares, vec![4.0, 4.0]);
        assert_eq!(allocate_equal(0.0, 3).unwrap().shares, vec![0.0; 3]);
        assert_eq!(allocate_equal(5.0, 1).unwrap().shares, vec![5.0]);
        assert!(allocate_equal(1.0, 0).is_err());
    }

    #[test]
    fn equal_epsilon() {
        let a = allocate_equal_epsilon(2.0, &[1.0, 1.0]).unwrap();
        assert_eq!(a.shares, vec![1.0, 1.0]);
        let a = allocate_equal_epsilon(5.0, &[1.0, 2.0]).unwrap();
        assert!((a.shares[0] - 1.0).abs() < 1e-12 && (a.shares[1] - 4.0).abs() < 1e-12);
        let b = allocate_equal_epsilon(5.0, &[2.0, 4.0]).unwrap();
        assert_eq!(a.shares, b.shares);
        let z = allocate_equal_epsilon(1.0, &[0.0, 1.0]).unwrap();
        assert_eq!(z.shares, vec![0.0, 1.0]);
    }

    #[test]
    fn kelly_examples() {
        let a = allocate_kelly(4.0, &[1.0, 3.0]).unwrap();
        assert!((a.shares[0] - 1.0).abs() < 1e-9 && (a.shares[1] - 3.0).abs() < 1e-9);
        let a = allocate_kelly(6.0, &[2.0, 2.0, 2.0]).unwrap();
        assert!(a.shares.iter().all(|s| (s - 2.0).abs() < 1e-9));
        let a = allocate_kelly(6.0, &[5.0]).unwrap();
        assert!((a.shares[0] - 6.0).abs() < 1e-9);
        assert!(allocate_kelly(1.0, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn floors_are_respected() {
        let a = allocate_kelly_with_floors(4.0, &[1.0, 9.0], Some(&[1.0, 0.0])).unwrap();
        assert!((a.shares[0] - 1.0).abs() < 1e-9, "{:?}", a.shares);
        assert!((a.total() - 4.0).abs() < 1e-9);
        assert!(allocate_kelly_with_floors(1.0, &[1.0, 1.0], Some(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn vcg_log_example() {
        let a = allocate_vcg_kelly(2.0, &[1.0, 1.0], &LogUtility).unwrap();
        assert!((a.shares[0] - 1.0).abs() < 1e-9);
        let p = a.payments.unwrap();
        assert!((p[0] - 2.0_f64.ln()).abs() < 1e-9, "{p:?}");
        assert!((p[1] - 2.0_f64.ln()).abs() < 1e-9);
        let single = allocate_vcg_kelly(3.0, &[2.0], &LogUtility).unwrap();
        assert_eq!(single.payments.unwrap(), vec![0.0]);
    }

    struct Convex;
    impl Utility for Convex {
        fn value(&self, x: f64) -> f64 {
            x * x
        }
        fn derivative(&self, x: f64) -> f64 {
            2.0 * x
        }
    }

    #[test]
    fn non_concave_family_rejected() {
        assert!(matches!(
            allocate_vcg_kelly(1.0, &[1.0, 1.0], &Convex),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn truthful_bidding_is_a_best_response() {
        let grid: Vec<f64> = (1..=20).map(|i| i as f64 * 0.25).collect();
        for &v1 in &[0.5, 1.0, 2.5] {
            for &w2 in &[0.5, 1.5, 3.0] {
                let gain = |bid: f64| {
                    let a = allocate_vcg_kelly(4.0, &[bid, w2], &LogUtility).unwrap();
                    v1 * a.shares[0].ln() - a.payments.unwrap()[0]
                };
                let truthful = gain(v1);
                let best = grid
                    .iter()
                    .map(|&b| gain(b))
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!(
                    truthful >= best - 1e-9,
                    "v1={v1} w2={w2}: {truthful} < {best}"
                );
            }
        }
    }

    #[test]
    fn laplace_conversion() {
        let a = allocate_equal(8.0, 2).unwrap().with_dims(&[1, 2]).unwrap();
        let s = a.laplace_scales.unwrap();
        assert!((s[0] - 2.0_f64.sqrt()).abs() < 1e-12);
        assert!((s[1] - 1.0).abs() < 1e-12);
    }
}
