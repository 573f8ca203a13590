//! Subcommand implementations. Each returns the artifacts it wrote.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use privdist_core::budget::{
    allocate_equal, allocate_equal_epsilon, allocate_kelly_with_floors, allocate_vcg_kelly_with,
    compute_budget, BudgetAllocation, LogUtility, Scheme, Utility,
};
use privdist_core::cases::{centralized_closed_loop, mpc_closed_loop, ClosedLoopOptions};
use privdist_core::privacy::{
    analytic_sensitivity_bound, dual_grid, privacy_level, sensitivity_sample_seeded, PrivacyReport,
    SensitivityCertificate, SensitivityOptions, ThetaKind,
};
use privdist_core::rng::{child_seed, Domain};
use privdist_core::solver::{
    centralized_reference, dual_gap, run_algorithm1, suboptimality_bound, RunSummary,
    TRANSCRIPT_CSV_VERSION,
};
use privdist_core::tradeoff::{
    cloud_csv, feasible, pareto_front, sweep, Feasibility, SweepGrid, TradeoffSpec,
};

use privdist_core::QuadraticLocal;

use crate::config::{ExperimentConfig, Loaded};
use crate::{Failure, Log};

const SCHEMA_VERSION: u32 = 1;

fn write(out: &Path, name: &str, contents: &str) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(out)
        .map_err(|e| Failure::Validation(format!("cannot create {}: {e}", out.display())))?;
    let path = out.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| Failure::Validation(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn per_agent(values: &[f64], m: usize, what: &str) -> Result<Vec<f64>, Failure> {
    match values.len() {
        1 => Ok(vec![values[0]; m]),
        n if n == m => Ok(values.to_vec()),
        n => Err(Failure::Validation(format!(
            "{what}: {n} values for {m} agents"
        ))),
    }
}

fn sensitivity_options(
    cfg: &ExperimentConfig,
    local: &QuadraticLocal,
    g: f64,
) -> SensitivityOptions {
    SensitivityOptions {
        // inner half-ball: perturbed solutions keep room inside ‖z‖ ≤ G
        mu_grid: dual_grid(local, 0.5 * g, cfg.privacy.mu_levels),
        g_bound: Some(g),
        truncate: Some(cfg.privacy.truncate),
        ..SensitivityOptions::default()
    }
}

/// Θ per agent for ε accounting: declared values, else the analytic bound,
/// else a sampled estimate. Agents without a metric hold no private data.
fn thetas(
    cfg: &ExperimentConfig,
    loaded: &Loaded,
    seed: u64,
    log: &Log,
) -> Result<Vec<(f64, ThetaKind)>, Failure> {
    let p = &loaded.problem;
    if let Some(t) = &cfg.privacy.theta {
        return Ok(per_agent(t, p.agents(), "privacy.theta")?
            .into_iter()
            .map(|t| (t, ThetaKind::Declared))
            .collect());
    }
    (0..p.agents())
        .map(|i| {
            let Some(m) = &loaded.metrics[i] else {
                return Ok((0.0, ThetaKind::Declared));
            };
            let g = p.bounds()[i];
            if let Some(u) = analytic_sensitivity_bound(p.local(i), m, Some(g)) {
                return Ok((u, ThetaKind::Certified));
            }
            let est = sensitivity_sample_seeded(
                p.local(i),
                m,
                cfg.privacy.alpha,
                cfg.privacy.beta,
                seed,
                i as u64,
                &sensitivity_options(cfg, p.local(i), g),
            )?;
            log.info(format!(
                "agent {i}: no analytic bound, sampled Θ = {} from N = {}",
                est.gamma_n, est.n
            ));
            Ok(est.theta())
        })
        .collect()
}

#[derive(Serialize)]
struct RunReport {
    #[serde(flatten)]
    summary: RunSummary,
    trials: usize,
    transcript_csv_version: u32,
    mean_final_gap: f64,
    standard_error: f64,
    bound_dominated: bool,
    /// `ε_i ≤ ε̄_i` per agent when targets are configured.
    targets_met: Option<Vec<bool>>,
    replicate_seeds: String,
}

pub fn run(cfg: &ExperimentConfig, out: &Path, log: &Log) -> Result<Vec<PathBuf>, Failure> {
    let loaded = cfg.load_problem()?;
    let p = &loaded.problem;
    let seed = cfg.seed()?;
    let k = cfg.iterations;
    if k == 0 || cfg.trials == 0 {
        return Err(Failure::Validation(
            "iterations and trials must be at least 1".into(),
        ));
    }
    let noise = cfg.noise(p.agents())?;
    noise.validate_for(p.agents(), k)?;
    let theta = thetas(cfg, &loaded, seed, log)?;
    let privacy = PrivacyReport::build(&theta, &noise, k)?;
    for i in privacy.unprotected() {
        log.warn(format!(
            "agent {i} requested privacy but has a zero noise scale: ε = ∞"
        ));
    }
    let reference = centralized_reference(p)?;
    // the exported replicate uses the seed itself
    let seeds: Vec<u64> = (0..cfg.trials as u64)
        .map(|t| {
            if t == 0 {
                seed
            } else {
                child_seed(seed, Domain::Replicate, t)
            }
        })
        .collect();
    let runs: Vec<(Vec<f64>, bool, usize)> = seeds
        .par_iter()
        .enumerate()
        .map(|(t, &s)| {
            let tr = run_algorithm1(p, &noise, k, s)?;
            // full gap history for the exported replicate, final gap otherwise
            let gaps = if t == 0 {
                tr.iterations
                    .iter()
                    .map(|it| dual_gap(p, &it.mu(), &reference))
                    .collect::<Result<Vec<_>, _>>()?
            } else {
                vec![dual_gap(p, &tr.last().expect("K ≥ 1").mu(), &reference)?]
            };
            if t == 0 {
                write(out, "transcript.csv", &tr.to_csv(Some(&gaps)))?;
            }
            Ok((gaps, tr.bounded(), tr.bound_violations.len()))
        })
        .collect::<Result<_, Failure>>()?;
    let finals: Vec<f64> = runs.iter().map(|r| *r.0.last().expect("gap")).collect();
    let n = finals.len() as f64;
    let mean = finals.iter().sum::<f64>() / n;
    let se = if finals.len() > 1 {
        (finals.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    let bound = suboptimality_bound(p, &noise, k)?;
    let bounded = runs.iter().all(|r| r.1);
    if !bounded {
        log.warn("some clean local solutions exceeded their declared G_i; the suboptimality bound does not apply");
    }
    let targets_met = match &cfg.privacy.eps_bar {
        Some(t) => {
            let t = per_agent(t, p.agents(), "privacy.eps_bar")?;
            let met: Vec<bool> = privacy
                .agents
                .iter()
                .zip(&t)
                .map(|(a, e)| a.epsilon <= *e)
                .collect();
            for (i, ok) in met.iter().enumerate() {
                if !ok {
                    log.warn(format!(
                        "agent {i}: ε = {} misses the target {}",
                        privacy.agents[i].epsilon, t[i]
                    ));
                }
            }
            Some(met)
        }
        None => None,
    };
    let report = RunReport {
        summary: RunSummary {
            schema_version: SCHEMA_VERSION,
            problem_hash: p.hash(),
            seed,
            iterations: k,
            reference_value: Some(reference.value),
            final_gap: Some(finals[0]),
            suboptimality_bound: Some(bound),
            bounded,
            bound_violations: runs.iter().map(|r| r.2).sum(),
            privacy: privacy.clone(),
            noise_streams: "ChaCha20 keyed by (replicate seed, domain 1, agent, k)".into(),
        },
        trials: cfg.trials,
        transcript_csv_version: TRANSCRIPT_CSV_VERSION,
        mean_final_gap: mean,
        standard_error: se,
        bound_dominated: mean <= bound,
        targets_met,
        replicate_seeds: format!("trial 0: {seed}; trial t ≥ 1: child_seed({seed}, domain 4, t)"),
    };
    for a in &privacy.agents {
        if a.epsilon.is_finite() {
            log.info(format!(
                "agent {}: Θ = {} ({:?}), ε = {}",
                a.agent, a.theta, a.theta_kind, a.epsilon
            ));
        } else {
            log.info(format!(
                "agent {}: Θ = {} ({:?}), ε = ∞",
                a.agent, a.theta, a.theta_kind
            ));
        }
    }
    log.info(format!(
        "mean dual gap after {k} iterations: {mean:.6e} (bound {bound:.6e}, {} trials)",
        cfg.trials
    ));
    let files = vec![
        out.join("transcript.csv"),
        write(out, "privacy.json", &json(&privacy))?,
        write(out, "summary.json", &json(&report))?,
    ];
    Ok(files)
}

#[derive(Serialize)]
struct SensitivityReport {
    schema_version: u32,
    agents: Vec<AgentCertificate>,
}

#[derive(Serialize)]
struct AgentCertificate {
    agent: usize,
    #[serde(flatten)]
    certificate: SensitivityCertificate,
    failures: usize,
    g_violations: usize,
    dominance_holds: bool,
}

pub fn sensitivity(cfg: &ExperimentConfig, out: &Path, log: &Log) -> Result<Vec<PathBuf>, Failure> {
    let loaded = cfg.load_problem()?;
    let p = &loaded.problem;
    let seed = cfg.seed()?;
    let mut agents = Vec::new();
    for i in 0..p.agents() {
        let Some(m) = &loaded.metrics[i] else {
            continue;
        };
        let est = sensitivity_sample_seeded(
            p.local(i),
            m,
            cfg.privacy.alpha,
            cfg.privacy.beta,
            seed,
            i as u64,
            &sensitivity_options(cfg, p.local(i), p.bounds()[i]),
        )?;
        log.info(format!(
            "agent {i}: N = {} (α = {}, β = {}), γ^N = {}, analytic bound {}",
            est.n,
            est.alpha,
            est.beta,
            est.gamma_n,
            est.analytic_upper
                .map_or("none".to_string(), |u| u.to_string())
        ));
        agents.push(AgentCertificate {
            agent: i,
            certificate: est.certificate(),
            failures: est.failures,
            g_violations: est.g_violations,
            dominance_holds: est.dominance_holds(1e-9),
        });
    }
    let report = SensitivityReport {
        schema_version: SCHEMA_VERSION,
        agents,
    };
    let path = write(out, "sensitivity.json", &json(&report))?;
    if let Some(bad) = report.agents.iter().find(|a| !a.dominance_holds) {
        return Err(Failure::Dominance(format!(
            "agent {}: sampled γ^N = {} exceeds the analytic bound {:?}",
            bad.agent, bad.certificate.gamma_n, bad.certificate.analytic_upper
        )));
    }
    Ok(vec![path])
}

#[derive(Serialize)]
struct TradeoffReport {
    schema_version: u32,
    spec: TradeoffSpec,
    verdicts: Vec<Verdict>,
    front_size: usize,
    cloud_size: usize,
}

#[derive(Serialize)]
struct Verdict {
    nu: f64,
    k: usize,
    #[serde(flatten)]
    feasibility: Feasibility,
}

pub fn tradeoff(cfg: &ExperimentConfig, out: &Path, log: &Log) -> Result<Vec<PathBuf>, Failure> {
    let t = &cfg.tradeoff;
    let loaded = if cfg.has_problem() {
        Some(cfg.load_problem()?)
    } else {
        None
    };
    let from_problem = |f: &dyn Fn(&Loaded) -> f64| loaded.as_ref().map(f);
    let g = t
        .g
        .or_else(|| from_problem(&|l| l.problem.bounds().iter().copied().fold(0.0, f64::max)))
        .ok_or_else(|| Failure::Validation("tradeoff.g is required without a problem".into()))?;
    let rho = t
        .rho
        .or_else(|| from_problem(&|l| l.problem.rho_phi()))
        .ok_or_else(|| Failure::Validation("tradeoff.rho is required without a problem".into()))?;
    let m = t
        .agents
        .or_else(|| loaded.as_ref().map(|l| l.problem.agents()))
        .ok_or_else(|| {
            Failure::Validation("tradeoff.agents is required without a problem".into())
        })?;
    let theta = t
        .theta
        .ok_or_else(|| Failure::Validation("tradeoff.theta is required".into()))?;
    let default = SweepGrid::default_for(g);
    let grid = SweepGrid {
        sigmas: t.sigmas.clone().unwrap_or(default.sigmas),
        ks: t.ks.clone().unwrap_or(default.ks),
    };
    let cloud = sweep(theta, m, g, rho, &grid)?;
    let front = pareto_front(&cloud);
    let spec = TradeoffSpec {
        eps_bar: t.eps_bar.unwrap_or(f64::INFINITY),
        s_bar: t.s_bar.or(cfg.s_bar).unwrap_or(f64::INFINITY),
        m,
        g,
        rho,
        theta: vec![theta; m],
    };
    let verdicts = t
        .pairs
        .iter()
        .map(|&(nu, k)| {
            let f = feasible(&spec, nu, k)?;
            log.info(format!(
                "ν = {nu}, K = {k}: {}",
                if f.feasible { "feasible" } else { "infeasible" }
            ));
            Ok(Verdict {
                nu,
                k,
                feasibility: f,
            })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let report = TradeoffReport {
        schema_version: SCHEMA_VERSION,
        spec,
        verdicts,
        front_size: front.len(),
        cloud_size: cloud.len(),
    };
    log.info(format!(
        "{} grid points, {} on the Pareto front",
        cloud.len(),
        front.len()
    ));
    Ok(vec![
        write(out, "tradeoff.csv", &cloud_csv(&cloud, &front))?,
        write(out, "tradeoff.json", &json(&report))?,
    ])
}

#[derive(Serialize)]
struct AllocationReport {
    schema_version: u32,
    infeasible_target: bool,
    raw_budget: Option<f64>,
    #[serde(flatten)]
    allocation: BudgetAllocation,
    epsilon: Option<Vec<Option<f64>>>,
}

pub fn allocate(cfg: &ExperimentConfig, out: &Path, log: &Log) -> Result<Vec<PathBuf>, Failure> {
    let a = &cfg.allocation;
    let loaded = if cfg.has_problem() {
        Some(cfg.load_problem()?)
    } else {
        None
    };
    let scheme = a.scheme.unwrap_or(Scheme::EqualSplit);
    let m = loaded
        .as_ref()
        .map(|l| l.problem.agents())
        .or(a.agents)
        .or(a.bids.as_ref().map(Vec::len))
        .or(a.theta.as_ref().map(Vec::len))
        .ok_or_else(|| Failure::Validation("cannot tell the number of agents".into()))?;
    let (sigma, raw, infeasible) = match (a.sigma_budget, &loaded) {
        (Some(s), _) => (s, None, false),
        (None, Some(l)) => {
            let s_bar = cfg.s_bar.ok_or_else(|| {
                Failure::Validation("s_bar is required to derive the budget".into())
            })?;
            let b = compute_budget(
                l.problem.rho_phi(),
                cfg.iterations,
                s_bar,
                l.problem.bounds(),
            )?;
            (b.value, Some(b.raw), b.infeasible_target)
        }
        (None, None) => {
            return Err(Failure::Validation(
                "give allocation.sigma_budget or a problem with s_bar".into(),
            ));
        }
    };
    if infeasible {
        log.warn(
            "the suboptimality target is unreachable even without noise; allocating a zero budget",
        );
    }
    let bids = || {
        a.bids
            .as_ref()
            .map(|b| per_agent(b, m, "allocation.bids"))
            .unwrap_or_else(|| {
                Err(Failure::Validation(format!(
                    "{scheme:?} needs allocation.bids"
                )))
            })
    };
    let allocation = match scheme {
        Scheme::EqualSplit => allocate_equal(sigma, m)?,
        Scheme::EqualEpsilon => {
            let theta = a
                .theta
                .as_ref()
                .or(cfg.privacy.theta.as_ref())
                .ok_or_else(|| {
                    Failure::Validation("equal-epsilon needs allocation.theta".into())
                })?;
            allocate_equal_epsilon(sigma, &per_agent(theta, m, "allocation.theta")?)?
        }
        Scheme::Kelly => allocate_kelly_with_floors(sigma, &bids()?, a.floors.as_deref())?,
        Scheme::VcgKelly => {
            let utilities: Vec<&dyn Utility> = vec![&LogUtility; m];
            allocate_vcg_kelly_with(sigma, &bids()?, &utilities, a.floors.as_deref())?
        }
    };
    let (allocation, epsilon) = match &loaded {
        Some(l) => {
            let dims: Vec<usize> = (0..m).map(|i| l.problem.selection().local_dim(i)).collect();
            let allocation = allocation.with_dims(&dims)?;
            let theta = thetas(cfg, l, cfg.seed.unwrap_or(0), log)?;
            let eps = allocation
                .laplace_scales
                .as_ref()
                .expect("dims attached")
                .iter()
                .zip(&theta)
                .map(|(s, (t, _))| {
                    privacy_level(*t, &vec![*s; cfg.iterations], cfg.iterations)
                        .map(|e| e.is_finite().then_some(e))
                })
                .collect::<Result<Vec<_>, _>>()?;
            (allocation, Some(eps))
        }
        None => (allocation, None),
    };
    log.info(format!(
        "Σ_budget = {sigma}; shares {:?}",
        allocation.shares
    ));
    if let Some(p) = &allocation.payments {
        log.info(format!("payments {p:?}"));
    }
    let report = AllocationReport {
        schema_version: SCHEMA_VERSION,
        infeasible_target: infeasible,
        raw_budget: raw,
        allocation,
        epsilon,
    };
    Ok(vec![write(out, "allocation.json", &json(&report))?])
}

#[derive(Serialize)]
struct MpcReport {
    schema_version: u32,
    steps: usize,
    k_per_step: usize,
    k_initial: Option<usize>,
    seed: u64,
    max_abs_tracking_error: f64,
    max_deviation_from_centralized: Option<f64>,
    relative_deviation: Option<f64>,
    step_seeds: String,
}

pub fn mpc_loop(cfg: &ExperimentConfig, out: &Path, log: &Log) -> Result<Vec<PathBuf>, Failure> {
    let loaded = cfg.load_problem()?;
    let b = loaded.building.as_ref().ok_or_else(|| {
        Failure::Validation("mpc-loop needs a building (case `mpc-building` or `building`)".into())
    })?;
    let seed = cfg.seed()?;
    let noise = cfg.noise(loaded.problem.agents())?;
    let opts = ClosedLoopOptions {
        k_per_step: cfg.mpc.k_per_step,
        k_initial: cfg.mpc.k_initial,
        steps: cfg.mpc.steps,
        seed,
        ..ClosedLoopOptions::default()
    };
    let traj = mpc_closed_loop(b, &noise, &opts)?;
    let mut files = vec![write(out, "mpc.csv", &traj.to_csv())?];
    let (dev, rel) = if cfg.mpc.compare {
        let central = centralized_closed_loop(b, cfg.mpc.steps)?;
        files.push(write(out, "mpc_centralized.csv", &central.to_csv())?);
        let d = traj.max_input_deviation(&central);
        (
            Some(d),
            Some(d / central.max_total_input().max(f64::MIN_POSITIVE)),
        )
    } else {
        (None, None)
    };
    let report = MpcReport {
        schema_version: SCHEMA_VERSION,
        steps: cfg.mpc.steps,
        k_per_step: cfg.mpc.k_per_step,
        k_initial: cfg.mpc.k_initial,
        seed,
        max_abs_tracking_error: traj
            .steps
            .iter()
            .map(|s| s.tracking_error.abs())
            .fold(0.0, f64::max),
        max_deviation_from_centralized: dev,
        relative_deviation: rel,
        step_seeds: format!("child_seed({seed}, domain 6, t)"),
    };
    if let Some(r) = rel {
        log.info(format!(
            "max |Σu − Σu_centralized| = {:.3}% of max |Σu_centralized|",
            100.0 * r
        ));
    }
    files.push(write(out, "mpc_summary.json", &json(&report))?);
    Ok(files)
}
