//! Distributed optimal power flow on a radial feeder (linearized, lossless).
//!
//! Agent 0 is the trusted center; agent `i ≥ 1` is the `i`-th controllable
//! unit and owns its setpoint `u_i`. The center sees every `u_i` and carries
//! the branch-flow limits; each unit carries its own capacity box.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AdjacencyMetric, DistributedProblem, Graph, Masks, Norm, QuadraticLocal, SelectionMap,
};
use crate::rng::{stream, Domain};
use crate::solver::centralized_reference;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Der {
    pub bus: usize,
    pub u_min: f64,
    pub u_max: f64,
    pub price: f64,
}

/// Limits on the flow into bus `to` from its parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchLimit {
    pub to: usize,
    pub p_min: f64,
    pub p_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeederModel {
    /// `parent[j]` for `j ≥ 1`; bus 0 is the feeder head and `parent[0]` is ignored.
    pub parent: Vec<usize>,
    pub p_c: Vec<f64>,
    pub p_g: Vec<f64>,
    pub ders: Vec<Der>,
    #[serde(default)]
    pub monitored: Vec<BranchLimit>,
    /// Adjacency radii; default to the largest price and capacity.
    #[serde(default)]
    pub delta_price: Option<f64>,
    #[serde(default)]
    pub delta_upper: Option<f64>,
    #[serde(default)]
    pub delta_lower: Option<f64>,
}

impl FeederModel {
    pub fn buses(&self) -> usize {
        self.parent.len()
    }

    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        let n = self.buses();
        if n == 0 {
            issues.push("feeder has no buses".into());
            return issues;
        }
        for j in 1..n {
            if self.parent[j] >= n || self.parent[j] == j {
                issues.push(format!("bus {j}: invalid parent {}", self.parent[j]));
            }
        }
        // every bus must reach the head
        for j in 1..n {
            let mut cur = j;
            let mut steps = 0;
            while cur != 0 && steps <= n {
                cur = self.parent[cur].min(n - 1);
                steps += 1;
            }
            if cur != 0 {
                issues.push(format!("bus {j} is not connected to the feeder head"));
            }
        }
        if self.p_c.len() != n || self.p_g.len() != n {
            issues.push("p_c and p_g need one entry per bus".into());
        }
        for (i, d) in self.ders.iter().enumerate() {
            if d.bus >= n {
                issues.push(format!("unit {i}: unknown bus {}", d.bus));
            }
            if !(d.u_min <= d.u_max) {
                issues.push(format!("unit {i}: u_min > u_max"));
            }
            if !(d.price > 0.0) {
                issues.push(format!("unit {i}: price must be positive"));
            }
        }
        for b in &self.monitored {
            if b.to == 0 || b.to >= n {
                issues.push(format!(
                    "monitored branch into bus {} is not a tree edge",
                    b.to
                ));
            }
            if !(b.p_min <= b.p_max) {
                issues.push(format!("branch into bus {}: P_min > P_max", b.to));
            }
        }
        issues
    }

    /// Downstream set `D_j` (bus `j` and all its descendants).
    pub fn downstream(&self, j: usize) -> Vec<usize> {
        let n = self.buses();
        let mut children = vec![Vec::new(); n];
        for k in 1..n {
            children[self.parent[k]].push(k);
        }
        let mut out = vec![j];
        let mut i = 0;
        while i < out.len() {
            out.extend(children[out[i]].iter().copied());
            i += 1;
        }
        out.sort_unstable();
        out
    }

    fn check(&self) -> Result<()> {
        let issues = self.validate();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(issues.join("; ")))
        }
    }
}

/// Flow into every bus `j ≥ 1` from its parent (index 0 unused, set to 0):
/// the downstream net load `Σ_{k∈D_j} (p_c − p_g + u)_k`.
pub fn flows(f: &FeederModel, u: &[f64]) -> Result<Vec<f64>> {
    f.check()?;
    if u.len() != f.ders.len() {
        return Err(Error::Dimension(format!(
            "{} setpoints for {} units",
            u.len(),
            f.ders.len()
        )));
    }
    let n = f.buses();
    let mut net: Vec<f64> = (0..n).map(|k| f.p_c[k] - f.p_g[k]).collect();
    for (d, &x) in f.ders.iter().zip(u) {
        net[d.bus] += x;
    }
    // accumulate leaves-first; order buses by depth
    let depth = |mut j: usize| {
        let mut d = 0;
        while j != 0 {
            j = f.parent[j];
            d += 1;
        }
        d
    };
    let mut order: Vec<usize> = (1..n).collect();
    order.sort_by_key(|&j| std::cmp::Reverse(depth(j)));
    let mut flow = net.clone();
    for &j in &order {
        let p = f.parent[j];
        if p != 0 {
            flow[p] += flow[j];
        }
    }
    flow[0] = 0.0;
    Ok(flow)
}

/// Compiles the feeder into a star-shaped distributed problem: center
/// `H_0 = diag(π)`, one box-constrained scalar problem `H_i = [π_i]` per unit.
pub fn build_opf(f: &FeederModel) -> Result<DistributedProblem> {
    f.check()?;
    let n_der = f.ders.len();
    if n_der == 0 {
        return Err(Error::Validation("feeder has no controllable units".into()));
    }
    let m = n_der + 1;
    let graph = Graph::star(m, 0);
    let mut owned = vec![1; m];
    owned[0] = 0;
    let selection = SelectionMap::neighborhood(&graph, &owned);

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for b in &f.monitored {
        let down = f.downstream(b.to);
        let base: f64 = down.iter().map(|&k| f.p_c[k] - f.p_g[k]).sum();
        let coef: Vec<f64> = f
            .ders
            .iter()
            .map(|d| if down.contains(&d.bus) { 1.0 } else { 0.0 })
            .collect();
        let any = coef.iter().any(|c| *c != 0.0);
        if b.p_max.is_finite() {
            if any {
                rows.push(coef.clone());
                rhs.push(b.p_max - base);
            } else if base > b.p_max {
                return Err(Error::Infeasible);
            }
        }
        if b.p_min.is_finite() {
            if any {
                rows.push(coef.iter().map(|c| -c).collect());
                rhs.push(base - b.p_min);
            } else if base < b.p_min {
                return Err(Error::Infeasible);
            }
        }
    }
    let prices: Vec<f64> = f.ders.iter().map(|d| d.price).collect();
    let center = QuadraticLocal::new(
        DMatrix::from_diagonal(&DVector::from_column_slice(&prices)),
        DVector::zeros(n_der),
        DMatrix::from_row_iterator(rows.len(), n_der, rows.iter().flatten().copied()),
        DVector::from_column_slice(&rhs),
    )?;
    let mut locals = vec![center];
    let mut bounds = vec![0.0];
    for d in &f.ders {
        locals.push(QuadraticLocal::new(
            DMatrix::from_element(1, 1, d.price),
            DVector::zeros(1),
            DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
            DVector::from_column_slice(&[d.u_max, -d.u_min]),
        )?);
        bounds.push(d.u_min.abs().max(d.u_max.abs()).max(f64::MIN_POSITIVE));
    }
    bounds[0] = bounds[1..].iter().map(|g| g * g).sum::<f64>().sqrt();
    let p = DistributedProblem::new(graph, selection, locals, bounds)?;
    // capacities versus flow limits
    centralized_reference(&p).map_err(|e| match e {
        Error::Infeasible => Error::Infeasible,
        other => other,
    })?;
    Ok(p)
}

/// One l1 metric per unit (agent `i + 1`): `|Δπ|/δπ + |Δū|/δū + |Δu̲|/δu̲`.
pub fn opf_adjacency(f: &FeederModel) -> Result<Vec<AdjacencyMetric>> {
    f.check()?;
    let dp = f
        .delta_price
        .unwrap_or_else(|| f.ders.iter().map(|d| d.price).fold(0.0, f64::max));
    let cap = f
        .ders
        .iter()
        .map(|d| d.u_min.abs().max(d.u_max.abs()))
        .fold(0.0, f64::max);
    let du = f.delta_upper.unwrap_or(cap);
    let dl = f.delta_lower.unwrap_or(cap);
    if !(dp > 0.0 && du > 0.0 && dl > 0.0) {
        return Err(Error::InvalidArgument(
            "OPF adjacency radii must be positive".into(),
        ));
    }
    let metric = AdjacencyMetric::new([1.0, 0.0, 0.0, 1.0], Norm::L1).with_masks(Masks {
        hessian: Some(vec![1.0 / dp]),
        linear: None,
        constraints: None,
        rhs: Some(vec![1.0 / du, 1.0 / dl]),
    });
    Ok(vec![metric; f.ders.len()])
}

/// Three units on a small lateral; the head branch limit forces a 0.3 load shed.
pub fn opf_toy() -> FeederModel {
    FeederModel {
        parent: vec![0, 0, 1, 1, 1],
        p_c: vec![0.0, 0.2, 0.5, 0.4, 0.6],
        p_g: vec![0.0, 0.0, 0.0, 0.1, 0.0],
        ders: vec![
            Der {
                bus: 2,
                u_min: -1.0,
                u_max: 1.0,
                price: 1.0,
            },
            Der {
                bus: 3,
                u_min: -1.0,
                u_max: 1.0,
                price: 1.1,
            },
            Der {
                bus: 4,
                u_min: -1.0,
                u_max: 1.0,
                price: 1.2,
            },
        ],
        monitored: vec![BranchLimit {
            to: 1,
            p_min: -10.0,
            p_max: 1.3,
        }],
        delta_price: None,
        delta_upper: None,
        delta_lower: None,
    }
}

/// Random radial feeder: `parent[j]` uniform over earlier buses, loads in
/// `[0, 1)`, a unit at a random subset of buses, one or two monitored branches.
pub fn random_feeder(seed: u64, buses: usize, units: usize) -> FeederModel {
    let mut rng = stream(seed, Domain::Instance, buses as u64, units as u64);
    let parent: Vec<usize> = (0..buses)
        .map(|j| if j == 0 { 0 } else { rng.random_range(0..j) })
        .collect();
    let p_c = (0..buses).map(|_| rng.random::<f64>()).collect();
    let p_g = (0..buses).map(|_| 0.3 * rng.random::<f64>()).collect();
    let ders = (0..units)
        .map(|_| Der {
            bus: rng.random_range(0..buses),
            u_min: -1.0 - rng.random::<f64>(),
            u_max: 1.0 + rng.random::<f64>(),
            price: 0.5 + rng.random::<f64>(),
        })
        .collect();
    let monitored = (0..rng.random_range(1..=2))
        .filter(|_| buses > 1)
        .map(|_| BranchLimit {
            to: rng.random_range(1..buses),
            p_min: -100.0,
            p_max: 100.0,
        })
        .collect();
    FeederModel {
        parent,
        p_c,
        p_g,
        ders,
        monitored,
        delta_price: None,
        delta_upper: None,
        delta_lower: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_optimum_is_zero() {
        let mut f = opf_toy();
        f.monitored.clear();
        f.ders.iter_mut().for_each(|d| d.price = 1.0);
        let p = build_opf(&f).unwrap();
        let c = centralized_reference(&p).unwrap();
        assert!(c.v.amax() < 1e-9);
    }

    #[test]
    fn load_shed_spread_by_inverse_price() {
        let f = opf_toy();
        let p = build_opf(&f).unwrap();
        let c = centralized_reference(&p).unwrap();
        let inv: Vec<f64> = f.ders.iter().map(|d| 1.0 / d.price).collect();
        let total: f64 = inv.iter().sum();
        for i in 0..3 {
            assert!((c.v[i] + 0.3 * inv[i] / total).abs() < 1e-8, "{}", c.v);
        }
    }

    #[test]
    fn tight_capacities_are_infeasible() {
        let mut f = opf_toy();
        f.ders.iter_mut().for_each(|d| d.u_min = -0.05);
        assert!(matches!(build_opf(&f), Err(Error::Infeasible)));
    }

    #[test]
    fn adjacency_normalization() {
        let f = opf_toy();
        let m = &opf_adjacency(&f).unwrap()[0];
        let p = build_opf(&f).unwrap();
        let base = p.local(1).clone();
        assert_eq!(m.distance(&base, &base).unwrap(), 0.0);
        let dp = 1.2;
        let moved = base
            .with_data(
                DMatrix::from_element(1, 1, 1.0 + dp),
                base.linear().clone(),
                base.constraint_matrix().clone(),
                base.constraint_rhs().clone(),
            )
            .unwrap();
        assert!((m.distance(&base, &moved).unwrap() - 1.0).abs() < 1e-12);
        let half = base
            .with_data(
                base.hessian().clone(),
                base.linear().clone(),
                base.constraint_matrix().clone(),
                DVector::from_column_slice(&[1.5, 1.0]),
            )
            .unwrap();
        assert!((m.distance(&base, &half).unwrap() - 0.5).abs() < 1e-12);
    }
}
