//! Laplace mechanism, per-agent ε accounting and sensitivity estimation.

mod dp;
mod noise;
mod sensitivity;

pub use dp::{empirical_dp_check, DpCheckOptions, DpCheckReport};
pub use noise::{sample_laplace, NoiseSchedule, ScaleRow};
pub use sensitivity::{
    analytic_sensitivity_bound, dual_grid, sampling_rule_n, sensitivity_bound_hessian,
    sensitivity_bound_linear, sensitivity_sample, sensitivity_sample_seeded,
    SensitivityCertificate, SensitivityEstimate, SensitivityOptions,
};

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// `ε_i = Θ Σ_{k=1}^K 1/σ_i^k`; `∞` when any scale is zero (and `Θ > 0`).
pub fn privacy_level(theta: f64, scales: &[f64], k: usize) -> Result<f64> {
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Θ must be finite and ≥ 0, got {theta}"
        )));
    }
    if scales.len() < k {
        return Err(Error::InvalidArgument(format!(
            "schedule covers {} of {k} iterations",
            scales.len()
        )));
    }
    if theta == 0.0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &s in &scales[..k] {
        if s == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += 1.0 / s;
    }
    Ok(theta * total)
}

/// Provenance of the Θ used in an ε computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaKind {
    /// Sampled lower estimate γ^N.
    Optimistic,
    /// Analytic upper bound.
    Certified,
    /// Supplied by the user.
    Declared,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentPrivacy {
    pub agent: usize,
    pub theta: f64,
    pub theta_kind: ThetaKind,
    /// `null` in JSON when infinite.
    #[serde(serialize_with = "finite_or_null")]
    pub epsilon: f64,
    pub epsilon_infinite: bool,
    pub iterations: usize,
    pub requested: bool,
    /// Definition-level flag: privacy requested and ε finite.
    pub locally_private: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrivacyReport {
    pub schema_version: u32,
    pub agents: Vec<AgentPrivacy>,
}

fn finite_or_null<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_none()
    }
}

impl PrivacyReport {
    /// Evaluates `privacy_level` for every agent over `k` iterations.
    pub fn build(thetas: &[(f64, ThetaKind)], noise: &NoiseSchedule, k: usize) -> Result<Self> {
        noise.validate_for(thetas.len(), k)?;
        let agents = thetas
            .iter()
            .enumerate()
            .map(|(i, &(theta, theta_kind))| {
                let requested = noise.requested(i);
                // agents that opted out are reported with the sentinel too
                let epsilon = privacy_level(theta, &noise.row(i, k), k)?;
                Ok(AgentPrivacy {
                    agent: i,
                    theta,
                    theta_kind,
                    epsilon,
                    epsilon_infinite: epsilon.is_infinite(),
                    iterations: k,
                    requested,
                    locally_private: requested && epsilon.is_finite(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PrivacyReport {
            schema_version: SCHEMA_VERSION,
            agents,
        })
    }

    /// Agents that requested privacy but get `ε = ∞`.
    pub fn unprotected(&self) -> Vec<usize> {
        self.agents
            .iter()
            .filter(|a| a.requested && a.epsilon_infinite)
            .map(|a| a.agent)
            .collect()
    }
}
