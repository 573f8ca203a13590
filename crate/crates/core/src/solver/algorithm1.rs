use nalgebra::DVector;
use rayon::prelude::*;

use super::RunOptions;
use crate::error::{Error, Result};
use crate::model::DistributedProblem;
use crate::privacy::{sample_laplace, NoiseSchedule};
use crate::qp::{solve_local_with, SolveOptions};
use crate::rng::{stream, Domain};

/// What agent `i` holds after round `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    /// Transmitted local solution `z_i^k` (noise included).
    pub z: DVector<f64>,
    /// Exact local solution before noise.
    pub z_clean: DVector<f64>,
    /// Injected noise `δ_i^k`; logged for test harnesses only.
    pub delta: DVector<f64>,
    /// Dual variable `μ_i^k`.
    pub mu: DVector<f64>,
    /// Consensus component `[v^k]_i`.
    pub v: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationState {
    pub k: usize,
    pub tau: f64,
    pub agents: Vec<AgentState>,
}

impl IterationState {
    pub fn mu(&self) -> Vec<DVector<f64>> {
        self.agents.iter().map(|a| a.mu.clone()).collect()
    }

    /// Global consensus vector `v^k`.
    pub fn v(&self) -> DVector<f64> {
        super::stack(&self.agents.iter().map(|a| a.v.clone()).collect::<Vec<_>>())
    }
}

/// A clean local solution outside its declared radius `G_i`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BoundViolation {
    pub k: usize,
    pub agent: usize,
    pub norm: f64,
    pub bound: f64,
}

/// Full mechanism output for `k = 1..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub seed: u64,
    pub problem_hash: String,
    pub noise: NoiseSchedule,
    pub tau0: f64,
    pub iterations: Vec<IterationState>,
    pub bound_violations: Vec<BoundViolation>,
}

impl Transcript {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// True when every clean local solution respected `G_i`.
    pub fn bounded(&self) -> bool {
        self.bound_violations.is_empty()
    }

    pub fn last(&self) -> Option<&IterationState> {
        self.iterations.last()
    }
}

/// Runs `k` rounds of the noisy distributed iteration with default options.
pub fn run_algorithm1(
    p: &DistributedProblem,
    noise: &NoiseSchedule,
    k: usize,
    seed: u64,
) -> Result<Transcript> {
    run_algorithm1_with(p, noise, k, seed, &RunOptions::default())
}

pub fn run_algorithm1_with(
    p: &DistributedProblem,
    noise: &NoiseSchedule,
    k: usize,
    seed: u64,
    opts: &RunOptions,
) -> Result<Transcript> {
    let report = p.validate();
    if !report.is_empty() {
        return Err(Error::Validation(report.to_string()));
    }
    noise.validate_for(p.agents(), k)?;
    iterate(p, noise, k, seed, opts, p.hash())
}

pub(super) fn initial_mu(p: &DistributedProblem, opts: &RunOptions) -> Result<Vec<DVector<f64>>> {
    match &opts.mu0 {
        None => Ok((0..p.agents())
            .map(|i| DVector::zeros(p.selection().local_dim(i)))
            .collect()),
        Some(mu) => {
            let ok = mu.len() == p.agents()
                && mu
                    .iter()
                    .enumerate()
                    .all(|(i, m)| m.len() == p.selection().local_dim(i));
            if ok {
                Ok(mu.clone())
            } else {
                Err(Error::Dimension(
                    "μ^0 does not match the local dimensions".into(),
                ))
            }
        }
    }
}

/// One synchronous local step: every agent solves at its current dual
/// signal and perturbs the result. Returns `(clean, noise)` per agent.
pub(super) fn local_step(
    p: &DistributedProblem,
    noise: &NoiseSchedule,
    k: usize,
    seed: u64,
    signals: &[DVector<f64>],
    warm: &mut [Option<DVector<f64>>],
    opts: &RunOptions,
) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
    let solve =
        |i: usize, warm: &mut Option<DVector<f64>>| -> Result<(DVector<f64>, DVector<f64>)> {
            let so = SolveOptions {
                tol: opts.tol,
                warm_start: if opts.warm_start { warm.take() } else { None },
                ..SolveOptions::default()
            };
            let sol = solve_local_with(p.local(i), &signals[i], &so).map_err(|e| e.at(i, k))?;
            if opts.warm_start {
                *warm = Some(sol.w.clone());
            }
            let mut rng = stream(seed, Domain::IterationNoise, i as u64, k as u64);
            let delta = sample_laplace(noise.scale(i, k), sol.z.len(), &mut rng);
            Ok((sol.z, delta))
        };
    if opts.parallel {
        warm.par_iter_mut()
            .enumerate()
            .map(|(i, w)| solve(i, w))
            .collect()
    } else {
        warm.iter_mut()
            .enumerate()
            .map(|(i, w)| solve(i, w))
            .collect()
    }
}

/// Core loop; inputs are assumed validated.
pub(crate) fn iterate(
    p: &DistributedProblem,
    noise: &NoiseSchedule,
    k_max: usize,
    seed: u64,
    opts: &RunOptions,
    problem_hash: String,
) -> Result<Transcript> {
    let m = p.agents();
    let sel = p.selection();
    let tau0 = p.rho_phi();
    let mut mu = initial_mu(p, opts)?;
    let mut warm: Vec<Option<DVector<f64>>> = vec![None; m];
    let mut iterations = Vec::with_capacity(k_max);
    let mut bound_violations = Vec::new();

    for k in 1..=k_max {
        let tau = 1.0 / (tau0 * k as f64);
        let step = local_step(p, noise, k, seed, &mu, &mut warm, opts)?;
        let z: Vec<DVector<f64>> = step.iter().map(|(c, d)| c + d).collect();

        // consensus average over the holders of each component
        let v = DVector::from_fn(sel.global_dim(), |g, _| {
            let h = sel.holders(g);
            h.iter().map(|&(a, pos)| z[a][pos]).sum::<f64>() / h.len() as f64
        });

        let mut agents = Vec::with_capacity(m);
        for (i, (z_clean, delta)) in step.into_iter().enumerate() {
            let ev = sel.gather(i, &v);
            mu[i] = &mu[i] + (ev - &z[i]) * tau;
            let norm = z_clean.norm();
            let bound = p.bounds()[i];
            if norm > bound * (1.0 + 1e-9) {
                bound_violations.push(BoundViolation {
                    k,
                    agent: i,
                    norm,
                    bound,
                });
            }
            let off: usize = (0..i).map(|j| sel.owned_dim(j)).sum();
            agents.push(AgentState {
                z: z[i].clone(),
                z_clean,
                delta,
                mu: mu[i].clone(),
                v: v.rows(off, sel.owned_dim(i)).into_owned(),
            });
        }
        iterations.push(IterationState { k, tau, agents });
    }
    Ok(Transcript {
        seed,
        problem_hash,
        noise: noise.clone(),
        tau0,
        iterations,
        bound_violations,
    })
}
