//! Experiment configuration and problem sources.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use privdist_core::budget::Scheme;
use privdist_core::cases::{
    build_mpc, build_opf, default_building, opf_adjacency, opf_toy, BuildingModel, FeederModel,
};
use privdist_core::privacy::NoiseSchedule;
use privdist_core::{AdjacencyMetric, DistributedProblem, InstanceFile};

use crate::Failure;

pub const BUILTIN_CASES: [&str; 2] = ["opf-toy", "mpc-building"];

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in case study (`opf-toy`, `mpc-building`).
    pub case: Option<String>,
    /// Problem instance file.
    pub problem: Option<PathBuf>,
    /// Radial feeder description.
    pub feeder: Option<PathBuf>,
    /// Building description.
    pub building: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Iterations `K`.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Monte-Carlo repetitions.
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub privacy: PrivacyConfig,
    /// Suboptimality target `S̄`.
    pub s_bar: Option<f64>,
    #[serde(default)]
    pub allocation: AllocationConfig,
    #[serde(default)]
    pub tradeoff: TradeoffConfig,
    #[serde(default)]
    pub mpc: MpcConfig,
}

fn default_iterations() -> usize {
    100
}

fn default_trials() -> usize {
    1
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// One Laplace scale for every agent and iteration.
    pub scale: Option<f64>,
    /// One constant scale per agent.
    pub scales: Option<Vec<f64>>,
    /// Per-agent, per-iteration scales.
    pub schedule: Option<Vec<Vec<f64>>>,
    /// Agents asking for privacy (default: all).
    pub requested: Option<Vec<bool>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacyConfig {
    /// Per-agent targets `ε̄_i` (a single entry applies to all).
    pub eps_bar: Option<Vec<f64>>,
    /// Declared sensitivities; skips estimation.
    pub theta: Option<Vec<f64>>,
    #[serde(default = "default_level")]
    pub alpha: f64,
    #[serde(default = "default_level")]
    pub beta: f64,
    /// Retries per draw when the adjacency ball leaves the positive definite cone.
    #[serde(default = "default_truncate")]
    pub truncate: usize,
    /// Dual signals per axis for sensitivity sampling (see `dual_grid`).
    #[serde(default = "default_mu_levels")]
    pub mu_levels: usize,
}

fn default_mu_levels() -> usize {
    5
}

fn default_level() -> f64 {
    0.01
}

fn default_truncate() -> usize {
    1000
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        PrivacyConfig {
            eps_bar: None,
            theta: None,
            alpha: default_level(),
            beta: default_level(),
            truncate: default_truncate(),
            mu_levels: default_mu_levels(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationConfig {
    pub scheme: Option<Scheme>,
    pub bids: Option<Vec<f64>>,
    /// Explicit budget; otherwise derived from `s_bar`, `K` and the problem.
    pub sigma_budget: Option<f64>,
    /// Agent count when no problem is given.
    pub agents: Option<usize>,
    pub floors: Option<Vec<f64>>,
    /// Sensitivities for `equal-epsilon`.
    pub theta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeoffConfig {
    pub theta: Option<f64>,
    pub g: Option<f64>,
    pub rho: Option<f64>,
    pub agents: Option<usize>,
    pub eps_bar: Option<f64>,
    pub s_bar: Option<f64>,
    pub sigmas: Option<Vec<f64>>,
    pub ks: Option<Vec<usize>>,
    /// `(ν, K)` pairs to check against the targets.
    #[serde(default)]
    pub pairs: Vec<(f64, usize)>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcConfig {
    #[serde(default = "default_k_per_step")]
    pub k_per_step: usize,
    pub k_initial: Option<usize>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Also run the centralized receding-horizon oracle.
    #[serde(default = "default_true")]
    pub compare: bool,
}

fn default_k_per_step() -> usize {
    10
}

fn default_steps() -> usize {
    96
}

fn default_true() -> bool {
    true
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            k_per_step: default_k_per_step(),
            k_initial: None,
            steps: default_steps(),
            compare: true,
        }
    }
}

/// A loaded problem with its per-agent adjacency metrics (`None` = no private data).
pub struct Loaded {
    pub problem: DistributedProblem,
    pub metrics: Vec<Option<AdjacencyMetric>>,
    pub building: Option<BuildingModel>,
}

impl ExperimentConfig {
    /// Reads a config file; a missing path naming a built-in case selects it.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        if !path.exists() {
            let name = path.to_string_lossy();
            if BUILTIN_CASES.contains(&name.as_ref()) {
                return Ok(ExperimentConfig {
                    case: Some(name.into_owned()),
                    iterations: default_iterations(),
                    trials: default_trials(),
                    ..ExperimentConfig::default()
                });
            }
            return Err(Failure::Validation(format!(
                "config file {} not found",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Validation(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
        // relative paths are relative to the config file
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [&mut cfg.problem, &mut cfg.feeder, &mut cfg.building]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64, Failure> {
        self.seed.ok_or_else(|| {
            Failure::Validation("a seed is required (config `seed` or --seed)".into())
        })
    }

    fn sources(&self) -> usize {
        [
            self.case.is_some(),
            self.problem.is_some(),
            self.feeder.is_some(),
            self.building.is_some(),
        ]
        .iter()
        .filter(|x| **x)
        .count()
    }

    pub fn has_problem(&self) -> bool {
        self.sources() > 0
    }

    pub fn load_problem(&self) -> Result<Loaded, Failure> {
        if self.sources() != 1 {
            return Err(Failure::Validation(
                "exactly one of `case`, `problem`, `feeder`, `building` must be given".into(),
            ));
        }
        let read = |p: &Path| {
            std::fs::read_to_string(p)
                .map_err(|e| Failure::Validation(format!("cannot read {}: {e}", p.display())))
        };
        if let Some(name) = &self.case {
            return match name.as_str() {
                "opf-toy" => from_feeder(opf_toy()),
                "mpc-building" => from_building(default_building()),
                other => Err(Failure::Validation(format!(
                    "unknown case `{other}` (known: {})",
                    BUILTIN_CASES.join(", ")
                ))),
            };
        }
        if let Some(path) = &self.problem {
            let inst = InstanceFile::from_toml(&read(path)?)?;
            let problem = inst.problem.to_problem()?;
            let metrics = (0..problem.agents())
                .map(|i| Some(inst.metric(i)))
                .collect();
            return Ok(Loaded {
                problem,
                metrics,
                building: None,
            });
        }
        if let Some(path) = &self.feeder {
            let f: FeederModel = toml::from_str(&read(path)?)
                .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
            return from_feeder(f);
        }
        let path = self.building.as_ref().expect("one source");
        let b: BuildingModel = toml::from_str(&read(path)?)
            .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
        from_building(b)
    }

    /// Noise schedule for `agents` agents; no noise when nothing is configured.
    pub fn noise(&self, agents: usize) -> Result<NoiseSchedule, Failure> {
        let n = &self.noise;
        let given = [n.scale.is_some(), n.scales.is_some(), n.schedule.is_some()]
            .iter()
            .filter(|x| **x)
            .count();
        if given > 1 {
            return Err(Failure::Validation(
                "give at most one of noise.scale, noise.scales, noise.schedule".into(),
            ));
        }
        let schedule = if let Some(s) = n.scale {
            NoiseSchedule::constant(agents, s)
        } else if let Some(s) = &n.scales {
            NoiseSchedule::per_agent(s.clone())
        } else if let Some(rows) = &n.schedule {
            NoiseSchedule::from_rows(rows.clone())?
        } else {
            NoiseSchedule::zero(agents)
        };
        let schedule = match &n.requested {
            Some(r) => schedule.with_requested(r.clone())?,
            None => schedule,
        };
        if schedule.agents() != agents {
            return Err(Failure::Validation(format!(
                "noise covers {} agents, the problem has {agents}",
                schedule.agents()
            )));
        }
        Ok(schedule)
    }
}

fn from_feeder(f: FeederModel) -> Result<Loaded, Failure> {
    let problem = build_opf(&f)?;
    let metrics = std::iter::once(None)
        .chain(opf_adjacency(&f)?.into_iter().map(Some))
        .collect();
    Ok(Loaded {
        problem,
        metrics,
        building: None,
    })
}

fn from_building(b: BuildingModel) -> Result<Loaded, Failure> {
    let problem = build_mpc(&b)?;
    // reference and initial states enter the linear terms
    let metrics = (0..problem.agents())
        .map(|_| Some(AdjacencyMetric::linear_only()))
        .collect();
    Ok(Loaded {
        problem,
        metrics,
        building: Some(b),
    })
}
