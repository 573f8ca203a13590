//! Privacy/suboptimality trade-off algebra for constant noise schedules.

use std::fmt::Write;

use serde::Serialize;

use crate::error::{Error, Result};

pub const CSV_VERSION: u32 = 1;
/// Relative tolerance of the feasibility inequalities, so that exact
/// boundary points count as feasible despite rounding.
pub const REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TradeoffPoint {
    pub sigma: f64,
    pub k: usize,
    pub epsilon: f64,
    pub s_bound: f64,
}

/// `(ε, S) = (ΘK/σ, 4M(G² + σ²)/(ρ²K))`.
pub fn tradeoff_point(
    theta: f64,
    sigma: f64,
    k: usize,
    m: usize,
    g: f64,
    rho: f64,
) -> TradeoffPoint {
    let kf = k as f64;
    TradeoffPoint {
        sigma,
        k,
        epsilon: theta * kf / sigma,
        s_bound: 4.0 * m as f64 * (g * g + sigma * sigma) / (rho * rho * kf),
    }
}

/// Specification `ε_i ≤ ε̄`, `S ≤ S̄` with uniform `G`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffSpec {
    pub eps_bar: f64,
    pub s_bar: f64,
    pub m: usize,
    pub g: f64,
    pub rho: f64,
    pub theta: Vec<f64>,
}

impl TradeoffSpec {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0;
        if !(self.eps_bar >= 0.0 && self.s_bar >= 0.0 && pos(self.g) && pos(self.rho) && self.m > 0)
            || self.theta.iter().any(|t| !(*t > 0.0))
        {
            return Err(Error::InvalidArgument(
                "trade-off specification must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    /// `(G/Θ_i)ε̄ − K/ν` per agent.
    pub privacy_slack: Vec<f64>,
    /// `(S̄/4M)(ρ/G)² − (1+ν²)/K`.
    pub suboptimality_slack: f64,
    pub privacy_ok: bool,
    pub suboptimality_ok: bool,
}

fn holds(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs || (lhs - rhs) <= REL_TOL * lhs.abs().max(rhs.abs())
}

/// Checks `K/ν ≤ (G/Θ_i)ε̄` for every agent and `(1+ν²)/K ≤ (S̄/4M)(ρ/G)²`.
pub fn feasible(spec: &TradeoffSpec, nu: f64, k: usize) -> Result<Feasibility> {
    spec.validate()?;
    if !(nu > 0.0) || k == 0 {
        return Err(Error::InvalidArgument(
            "ν must be positive and K ≥ 1".into(),
        ));
    }
    let lhs1 = k as f64 / nu;
    let mut privacy_ok = true;
    let privacy_slack = spec
        .theta
        .iter()
        .map(|t| {
            let rhs = spec.g / t * spec.eps_bar;
            privacy_ok &= holds(lhs1, rhs);
            rhs - lhs1
        })
        .collect();
    let lhs2 = (1.0 + nu * nu) / k as f64;
    let rhs2 = spec.s_bar / (4.0 * spec.m as f64) * (spec.rho / spec.g).powi(2);
    let suboptimality_ok = holds(lhs2, rhs2);
    Ok(Feasibility {
        feasible: privacy_ok && suboptimality_ok,
        privacy_slack,
        suboptimality_slack: rhs2 - lhs2,
        privacy_ok,
        suboptimality_ok,
    })
}

/// Sweep grid for `(σ, K)` clouds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub sigmas: Vec<f64>,
    pub ks: Vec<usize>,
}

impl SweepGrid {
    /// σ log-spaced over `[1e−3·G, 10·G]`, K log-spaced over `1..=10⁴`.
    pub fn default_for(g: f64) -> Self {
        let n = 41;
        let sigmas = (0..n)
            .map(|i| g * 10f64.powf(-3.0 + 4.0 * i as f64 / (n - 1) as f64))
            .collect();
        let mut ks: Vec<usize> = (0..n)
            .map(|i| 10f64.powf(4.0 * i as f64 / (n - 1) as f64).round() as usize)
            .collect();
        ks.dedup();
        SweepGrid { sigmas, ks }
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty() || self.ks.is_empty()
    }
}

/// Every grid point with the uniform-agent coordinates of `tradeoff_point`.
pub fn sweep(
    theta: f64,
    m: usize,
    g: f64,
    rho: f64,
    grid: &SweepGrid,
) -> Result<Vec<TradeoffPoint>> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if grid.sigmas.iter().any(|s| !(*s > 0.0)) || grid.ks.contains(&0) {
        return Err(Error::InvalidArgument("grid needs σ > 0 and K ≥ 1".into()));
    }
    Ok(grid
        .ks
        .iter()
        .flat_map(|&k| {
            grid.sigmas
                .iter()
                .map(move |&s| tradeoff_point(theta, s, k, m, g, rho))
        })
        .collect())
}

/// Nondominated subset (minimizing both ε and S), sorted by ε ascending.
pub fn pareto_front(points: &[TradeoffPoint]) -> Vec<TradeoffPoint> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| {
        a.epsilon
            .total_cmp(&b.epsilon)
            .then(a.s_bound.total_cmp(&b.s_bound))
    });
    let mut front: Vec<TradeoffPoint> = Vec::new();
    let mut best_s = f64::INFINITY;
    for p in sorted {
        if p.s_bound < best_s {
            best_s = p.s_bound;
            front.push(p);
        }
    }
    front
}

/// `(σ, K, ε, S, on_front)` rows for external plotting.
pub fn cloud_csv(cloud: &[TradeoffPoint], front: &[TradeoffPoint]) -> String {
    let mut out = format!("# privdist tradeoff v{CSV_VERSION}\nsigma,k,epsilon,s_bound,front\n");
    for p in cloud {
        let on = front.iter().any(|f| f == p);
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.sigma, p.k, p.epsilon, p.s_bound, on as u8
        );
    }
    out
}

/// Inputs of the OPF-specific trade-off test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpfTradeoffSpec {
    /// Per-DER privacy targets `ε̄_i`.
    pub eps_bar: Vec<f64>,
    pub s_bar: f64,
    pub prices: Vec<f64>,
    /// `u_{i,max} = max(|u̲_i|, |ū_i|)`.
    pub u_max: Vec<f64>,
    pub theta: Vec<f64>,
    pub nu: Vec<f64>,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpfTradeoffReport {
    /// `(u_{i,max}/Θ_i)ε̄_i − K/ν_i` per DER.
    pub privacy_slack: Vec<f64>,
    /// With `ρ = π_max`: `(S̄/4)(π_max/u_max)² − (M + Σν_i²)/K`.
    pub suboptimality_slack: f64,
    pub feasible: bool,
    pub rho_printed: f64,
    /// Minimum convexity modulus of the leaf objectives.
    pub rho_min: f64,
    /// Suboptimality slack when `ρ = rho_min`.
    pub suboptimality_slack_min_rho: f64,
    pub feasible_min_rho: bool,
    pub rho_differs: bool,
}

/// OPF instance of the feasibility inequalities with `G_i = u_{i,max}`.
pub fn opf_tradeoff(spec: &OpfTradeoffSpec) -> Result<OpfTradeoffReport> {
    let m = spec.prices.len();
    let lens = [
        spec.eps_bar.len(),
        spec.u_max.len(),
        spec.theta.len(),
        spec.nu.len(),
    ];
    if m == 0 || lens.iter().any(|&l| l != m) {
        return Err(Error::Dimension(
            "OPF trade-off lists must have one entry per DER".into(),
        ));
    }
    if spec.k == 0
        || spec
            .prices
            .iter()
            .chain(&spec.u_max)
            .chain(&spec.theta)
            .chain(&spec.nu)
            .any(|x| !(*x > 0.0))
    {
        return Err(Error::InvalidArgument(
            "OPF trade-off inputs must be positive".into(),
        ));
    }
    let kf = spec.k as f64;
    let mut privacy_ok = true;
    let privacy_slack = (0..m)
        .map(|i| {
            let lhs = kf / spec.nu[i];
            let rhs = spec.u_max[i] / spec.theta[i] * spec.eps_bar[i];
            privacy_ok &= holds(lhs, rhs);
            rhs - lhs
        })
        .collect();
    let u_max = spec.u_max.iter().copied().fold(0.0, f64::max);
    let rho_printed = spec.prices.iter().copied().fold(0.0, f64::max);
    let rho_min = spec.prices.iter().copied().fold(f64::INFINITY, f64::min);
    let lhs = (m as f64 + spec.nu.iter().map(|v| v * v).sum::<f64>()) / kf;
    let rhs = |rho: f64| spec.s_bar / 4.0 * (rho / u_max).powi(2);
    Ok(OpfTradeoffReport {
        privacy_slack,
        suboptimality_slack: rhs(rho_printed) - lhs,
        feasible: privacy_ok && holds(lhs, rhs(rho_printed)),
        rho_printed,
        rho_min,
        suboptimality_slack_min_rho: rhs(rho_min) - lhs,
        feasible_min_rho: privacy_ok && holds(lhs, rhs(rho_min)),
        rho_differs: rho_printed != rho_min,
    })
}
