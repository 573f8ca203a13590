use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Laplace scales `σ_i^k` for every agent and iteration.
///
/// A scale of zero means the agent sends its exact local solution. Agents
/// flagged as requesting privacy but scheduled with a zero scale end up with
/// `ε = ∞` in privacy reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    rows: Vec<ScaleRow>,
    requested: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScaleRow {
    Constant(f64),
    /// Scales for `k = 1, 2, …`; iterations beyond the list are not covered.
    PerIteration(Vec<f64>),
}

impl NoiseSchedule {
    /// Same scale for every agent and iteration.
    pub fn constant(agents: usize, scale: f64) -> Self {
        Self::per_agent(vec![scale; agents])
    }

    /// No noise anywhere; nobody requests privacy.
    pub fn zero(agents: usize) -> Self {
        Self::constant(agents, 0.0)
    }

    /// One constant scale per agent. Agents with positive scale are marked as
    /// requesting privacy.
    pub fn per_agent(scales: Vec<f64>) -> Self {
        let requested = scales.iter().map(|s| *s > 0.0).collect();
        NoiseSchedule {
            rows: scales.into_iter().map(ScaleRow::Constant).collect(),
            requested,
        }
    }

    /// Explicit per-iteration rows.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let requested = rows.iter().map(|r| r.iter().any(|s| *s > 0.0)).collect();
        let s = NoiseSchedule {
            rows: rows.into_iter().map(ScaleRow::PerIteration).collect(),
            requested,
        };
        s.check()?;
        Ok(s)
    }

    pub fn with_requested(mut self, requested: Vec<bool>) -> Result<Self> {
        if requested.len() != self.rows.len() {
            return Err(Error::Dimension(format!(
                "{} privacy flags for {} agents",
                requested.len(),
                self.rows.len()
            )));
        }
        self.requested = requested;
        Ok(self)
    }

    fn check(&self) -> Result<()> {
        let bad = |s: &f64| !(s.is_finite() && *s >= 0.0);
        for (i, r) in self.rows.iter().enumerate() {
            let ok = match r {
                ScaleRow::Constant(s) => !bad(s),
                ScaleRow::PerIteration(v) => !v.iter().any(bad),
            };
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "agent {i}: noise scales must be finite and nonnegative"
                )));
            }
        }
        Ok(())
    }

    pub fn agents(&self) -> usize {
        self.rows.len()
    }

    pub fn requested(&self, i: usize) -> bool {
        self.requested[i]
    }

    /// Validates scales and coverage of `agents × K`.
    pub fn validate_for(&self, agents: usize, k: usize) -> Result<()> {
        self.check()?;
        if self.rows.len() != agents {
            return Err(Error::Dimension(format!(
                "noise schedule has {} agents, problem has {agents}",
                self.rows.len()
            )));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if let ScaleRow::PerIteration(v) = r {
                if v.len() < k {
                    return Err(Error::InvalidArgument(format!(
                        "agent {i}: schedule covers {} of {k} iterations",
                        v.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// `σ_i^k` for `k ≥ 1`.
    pub fn scale(&self, i: usize, k: usize) -> f64 {
        match &self.rows[i] {
            ScaleRow::Constant(s) => *s,
            ScaleRow::PerIteration(v) => v[k - 1],
        }
    }

    /// `σ_i^1, …, σ_i^K`.
    pub fn row(&self, i: usize, k: usize) -> Vec<f64> {
        (1..=k).map(|t| self.scale(i, t)).collect()
    }

    pub fn is_constant(&self, i: usize) -> bool {
        matches!(self.rows[i], ScaleRow::Constant(_))
    }

    /// Largest scale over the first `k` iterations (all of them for constant rows).
    pub fn max_scale(&self, i: usize, k: usize) -> f64 {
        match &self.rows[i] {
            ScaleRow::Constant(s) => *s,
            ScaleRow::PerIteration(v) => v.iter().take(k.max(1)).fold(0.0, |a, s| a.max(*s)),
        }
    }

    /// `E‖δ_i^k‖² = 2·dim·σ²` at the largest scale.
    pub fn second_moment(&self, i: usize, dim: usize, k: usize) -> f64 {
        let s = self.max_scale(i, k);
        2.0 * dim as f64 * s * s
    }
}

/// `dim` i.i.d. Laplace(0, scale) draws by inverse CDF.
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, dim: usize, rng: &mut R) -> DVector<f64> {
    if scale == 0.0 {
        return DVector::zeros(dim);
    }
    DVector::from_fn(dim, |_, _| laplace(scale, rng))
}

fn laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let t = 1.0 - 2.0 * u.abs();
        if t > 0.0 {
            return -scale * u.signum() * t.ln();
        }
    }
}
