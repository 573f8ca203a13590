//! Monte-Carlo check of the local privacy guarantee on first-round outputs.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::{privacy_level, NoiseSchedule};
use crate::error::{Error, Result};
use crate::model::{DistributedProblem, QuadraticLocal};
use crate::qp::solve_local;
use crate::rng::{child_seed, Domain};
use crate::solver::{iterate, RunOptions};

#[derive(Debug, Clone)]
pub struct DpCheckOptions {
    /// Bins per coordinate.
    pub bins: usize,
    /// Bins with fewer hits in either run are ignored.
    pub min_count: usize,
    /// Normal quantile of the per-bin confidence interval on the log ratio.
    pub z: f64,
    pub seed: u64,
}

impl Default for DpCheckOptions {
    fn default() -> Self {
        DpCheckOptions {
            bins: 40,
            min_count: 200,
            z: 4.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DpCheckReport {
    pub agent: usize,
    pub trials: usize,
    /// `Θ/σ_i^1` with `Θ = ‖g(P_i, 0) − g(P'_i, 0)‖₁`, the exact ratio bound
    /// of per-coordinate Laplace noise.
    pub epsilon: f64,
    pub max_log_ratio: f64,
    /// `max(|log ratio| − slack)` over bins.
    pub max_excess: f64,
    pub bins_used: usize,
    pub passed: bool,
}

/// Runs the mechanism `trials` times under `P` and under `P` with agent
/// `agent`'s problem replaced by `p_alt`, histograms agent `agent`'s first
/// transmitted vector and compares binned log-likelihood ratios with `ε`.
///
/// The slack of bin `b` is `z·sqrt(1/n_b + 1/n'_b)`, the delta-method
/// standard error of a log ratio of counts.
pub fn empirical_dp_check(
    p: &DistributedProblem,
    agent: usize,
    p_alt: &QuadraticLocal,
    noise: &NoiseSchedule,
    k: usize,
    trials: usize,
    opts: &DpCheckOptions,
) -> Result<DpCheckReport> {
    if agent >= p.agents() {
        return Err(Error::InvalidArgument(format!("no agent {agent}")));
    }
    let dim = p.selection().local_dim(agent);
    if dim == 0 || dim > 2 {
        return Err(Error::InvalidArgument(format!(
            "the binned check supports local dimension 1 or 2, got {dim}"
        )));
    }
    if !(1..=3).contains(&k) {
        return Err(Error::InvalidArgument(
            "the check runs 1 to 3 rounds".into(),
        ));
    }
    if trials < 1000 {
        return Err(Error::InsufficientTrials(format!(
            "{trials} trials; at least 1000 needed"
        )));
    }
    let alt = p.with_local(agent, p_alt.clone())?;
    for q in [p, &alt] {
        let r = q.validate();
        if !r.is_empty() {
            return Err(Error::Validation(r.to_string()));
        }
    }
    noise.validate_for(p.agents(), k)?;
    let scale = noise.scale(agent, 1);
    let zero = DVector::zeros(dim);
    let diff = solve_local(p.local(agent), &zero, 1e-12)?.z - solve_local(p_alt, &zero, 1e-12)?.z;
    let theta = diff.iter().map(|x| x.abs()).sum::<f64>();
    let epsilon = privacy_level(theta, &[scale], 1)?;

    let run_opts = RunOptions {
        parallel: false,
        ..RunOptions::default()
    };
    let outputs = |q: &DistributedProblem, which: u64| -> Result<Vec<DVector<f64>>> {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let seed = child_seed(opts.seed, Domain::DpTrial, which * trials as u64 + t as u64);
                let tr = iterate(q, noise, k, seed, &run_opts, String::new())?;
                Ok(tr.iterations[0].agents[agent].z.clone())
            })
            .collect()
    };
    let a = outputs(p, 0)?;
    let b = outputs(&alt, 1)?;

    // common bin grid over the pooled range
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for z in a.iter().chain(&b) {
        for j in 0..dim {
            lo[j] = lo[j].min(z[j]);
            hi[j] = hi[j].max(z[j]);
        }
    }
    let bin_of = |z: &DVector<f64>| -> Vec<usize> {
        (0..dim)
            .map(|j| {
                let w = (hi[j] - lo[j]).max(f64::MIN_POSITIVE);
                (((z[j] - lo[j]) / w * opts.bins as f64) as usize).min(opts.bins - 1)
            })
            .collect()
    };
    let mut counts: BTreeMap<Vec<usize>, (usize, usize)> = BTreeMap::new();
    for z in &a {
        counts.entry(bin_of(z)).or_default().0 += 1;
    }
    for z in &b {
        counts.entry(bin_of(z)).or_default().1 += 1;
    }
    let mut max_log_ratio = 0.0_f64;
    let mut max_excess = f64::NEG_INFINITY;
    let mut bins_used = 0;
    for &(na, nb) in counts.values() {
        if na < opts.min_count || nb < opts.min_count {
            continue;
        }
        bins_used += 1;
        let lr = (na as f64 / nb as f64).ln().abs();
        let slack = opts.z * (1.0 / na as f64 + 1.0 / nb as f64).sqrt();
        max_log_ratio = max_log_ratio.max(lr);
        max_excess = max_excess.max(lr - slack);
    }
    if bins_used == 0 {
        return Err(Error::InsufficientTrials(format!(
            "no bin reached {} hits in both runs",
            opts.min_count
        )));
    }
    Ok(DpCheckReport {
        agent,
        trials,
        epsilon,
        max_log_ratio,
        max_excess,
        bins_used,
        passed: max_excess <= epsilon,
    })
}
