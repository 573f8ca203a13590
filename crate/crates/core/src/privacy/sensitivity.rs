//! Scenario-sampling estimate of the local sensitivity
//! `Θ = sup ‖g(P, μ) − g(P', μ)‖` over unit-adjacent `P'`, plus analytic bounds.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{AdjacencyMetric, QuadraticData, QuadraticLocal};
use crate::qp::solve_local;
use crate::rng::{stream, Domain, StreamId};

/// `N = ⌈1/(αβ)⌉ − 1`.
pub fn sampling_rule_n(alpha: f64, beta: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha <= 1.0 && beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "α and β must lie in (0, 1], got α = {alpha}, β = {beta}"
        )));
    }
    let x = 1.0 / (alpha * beta);
    // absorb representation error so that α = β = 0.01 gives exactly 9999
    let x = if (x - x.round()).abs() <= 1e-9 * x {
        x.round()
    } else {
        x
    };
    Ok(x.ceil() as usize - 1)
}

/// `G/λ_min`: sensitivity bound when only `H` is private (`‖ΔH‖₂ ≤ 1`).
pub fn sensitivity_bound_hessian(p: &QuadraticLocal, g: f64) -> f64 {
    g / p.lambda_min()
}

/// `1/λ_min`: sensitivity bound when only `h` is private (`‖Δh‖₂ ≤ 1`).
pub fn sensitivity_bound_linear(p: &QuadraticLocal) -> f64 {
    1.0 / p.lambda_min()
}

/// Analytic bound for the unit ball of `m` around `p`, when one exists:
/// `max(r_H·G, r_h)/λ_min` where `r_H`, `r_h` bound `‖ΔH‖₂` and `‖Δh‖₂`.
/// Metrics touching `C` or `c` have no bound; a Hessian term needs `G`.
pub fn analytic_sensitivity_bound(
    p: &QuadraticLocal,
    m: &AdjacencyMetric,
    g: Option<f64>,
) -> Option<f64> {
    if m.touches_constraints(p) {
        return None;
    }
    let r_h = m.linear_radius(p);
    let r_hess = m.hessian_spectral_radius(p);
    let hess_term = if r_hess > 0.0 { r_hess * g? } else { 0.0 };
    Some(hess_term.max(r_h) / p.lambda_min())
}

/// Dual signals `μ = h + H·(s·G·e_j)` for `s` on `levels` evenly spaced
/// points of `[−1, 1]` and every axis `e_j`, so that the unconstrained
/// solutions sweep the radius-`G` ball along each axis. `levels ≤ 1` gives
/// `μ = h` only.
pub fn dual_grid(p: &QuadraticLocal, g: f64, levels: usize) -> Vec<DVector<f64>> {
    let mut grid = vec![p.linear().clone()];
    if levels <= 1 {
        return grid;
    }
    for j in 0..p.dim() {
        for l in 0..levels {
            let s = -1.0 + 2.0 * l as f64 / (levels - 1) as f64;
            if s.abs() < 1e-12 {
                continue;
            }
            grid.push(p.linear() + p.hessian().column(j) * (s * g));
        }
    }
    grid
}

#[derive(Debug, Clone)]
pub struct SensitivityOptions {
    pub tol: f64,
    /// Dual signals to maximize over; empty means `μ = 0` only.
    pub mu_grid: Vec<DVector<f64>>,
    /// Radius `G` on local solutions, needed for Hessian-metric bounds.
    pub g_bound: Option<f64>,
    /// Rejection-sample non-positive-definite draws (up to this many tries
    /// per draw) instead of requiring the whole ball to be positive definite.
    pub truncate: Option<usize>,
    /// Total failed draws tolerated before giving up.
    pub max_failures: usize,
}

impl Default for SensitivityOptions {
    fn default() -> Self {
        SensitivityOptions {
            tol: 1e-10,
            mu_grid: Vec::new(),
            g_bound: None,
            truncate: None,
            max_failures: 1000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitivityEstimate {
    pub gamma_n: f64,
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub analytic_upper: Option<f64>,
    /// Nominal problem and the adjacent draw attaining `gamma_n`.
    pub argmax: Option<(QuadraticData, QuadraticData)>,
    pub failures: usize,
    /// Samples where a solution exceeded `G`; a Hessian bound is then withheld.
    pub g_violations: usize,
    pub metric_hash: String,
    pub stream: StreamId,
}

/// JSON certificate of a sensitivity estimate.
#[derive(Debug, Clone, Serialize)]
pub struct SensitivityCertificate {
    pub schema_version: u32,
    #[serde(rename = "gamma_N")]
    pub gamma_n: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub analytic_upper: Option<f64>,
    #[serde(rename = "metric-hash")]
    pub metric_hash: String,
    pub label: &'static str,
    pub stream: StreamId,
}

impl SensitivityEstimate {
    /// Θ to use for ε accounting: the analytic bound when available.
    pub fn theta(&self) -> (f64, super::ThetaKind) {
        match self.analytic_upper {
            Some(u) => (u, super::ThetaKind::Certified),
            None => (self.gamma_n, super::ThetaKind::Optimistic),
        }
    }

    pub fn dominance_holds(&self, tol: f64) -> bool {
        self.analytic_upper.is_none_or(|u| self.gamma_n <= u + tol)
    }

    pub fn certificate(&self) -> SensitivityCertificate {
        SensitivityCertificate {
            schema_version: super::SCHEMA_VERSION,
            gamma_n: self.gamma_n,
            n: self.n,
            alpha: self.alpha,
            beta: self.beta,
            analytic_upper: self.analytic_upper,
            metric_hash: self.metric_hash.clone(),
            label: if self.analytic_upper.is_some() {
                "certified"
            } else {
                "optimistic"
            },
            stream: self.stream,
        }
    }
}

fn metric_hash(m: &AdjacencyMetric) -> String {
    let value = serde_json::to_value(m).expect("metric serializes");
    let digest = Sha256::digest(serde_json::to_string(&value).expect("json").as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Sampled estimate with default options; the stream seed is drawn from `rng`.
pub fn sensitivity_sample<R: Rng + ?Sized>(
    p: &QuadraticLocal,
    m: &AdjacencyMetric,
    alpha: f64,
    beta: f64,
    rng: &mut R,
) -> Result<SensitivityEstimate> {
    let seed = rng.random::<u64>();
    sensitivity_sample_seeded(p, m, alpha, beta, seed, 0, &SensitivityOptions::default())
}

/// Draws `N` adjacent problems `P'` (sample `s` uses stream
/// `(seed, Sensitivity, agent, s·2^20 + attempt)`), solves nominal and
/// perturbed problems on the μ grid and returns the largest distance.
pub fn sensitivity_sample_seeded(
    p: &QuadraticLocal,
    m: &AdjacencyMetric,
    alpha: f64,
    beta: f64,
    seed: u64,
    agent: u64,
    opts: &SensitivityOptions,
) -> Result<SensitivityEstimate> {
    let n = sampling_rule_n(alpha, beta)?;
    let issues = m.validate();
    if !issues.is_empty() {
        return Err(Error::InvalidArgument(issues.join("; ")));
    }
    let grid: Vec<DVector<f64>> = if opts.mu_grid.is_empty() {
        vec![DVector::zeros(p.dim())]
    } else {
        opts.mu_grid.clone()
    };
    if grid.iter().any(|mu| mu.len() != p.dim()) {
        return Err(Error::Dimension(
            "μ grid entries must match the local dimension".into(),
        ));
    }
    let nominal: Vec<DVector<f64>> = grid
        .iter()
        .map(|mu| solve_local(p, mu, opts.tol).map(|s| s.z))
        .collect::<Result<_>>()?;
    if opts.truncate.is_none() {
        // surfaces a degenerate ball once instead of per sample
        m.perturb(p, &mut stream(seed, Domain::Sensitivity, agent, u64::MAX))?;
    }

    struct Sample {
        theta: f64,
        draw: Option<QuadraticLocal>,
        failures: usize,
        over_g: bool,
    }
    const ATTEMPT_BITS: u64 = 20;
    let one = |s: usize| -> Result<Sample> {
        let mut failures = 0;
        for attempt in 0u64.. {
            let mut rng = stream(
                seed,
                Domain::Sensitivity,
                agent,
                ((s as u64) << ATTEMPT_BITS) | attempt,
            );
            let draw = match opts.truncate {
                Some(tries) => m.perturb_truncated(p, &mut rng, tries),
                None => m.perturb(p, &mut rng),
            };
            let solved = draw.and_then(|q| {
                let zs = grid
                    .iter()
                    .map(|mu| solve_local(&q, mu, opts.tol).map(|s| s.z))
                    .collect::<Result<Vec<_>>>()?;
                Ok((q, zs))
            });
            match solved {
                Ok((q, zs)) => {
                    let mut theta = 0.0_f64;
                    let mut over_g = false;
                    for (z, z0) in zs.iter().zip(&nominal) {
                        theta = theta.max((z - z0).norm());
                        if let Some(g) = opts.g_bound {
                            over_g |= z.norm() > g * (1.0 + 1e-9) || z0.norm() > g * (1.0 + 1e-9);
                        }
                    }
                    return Ok(Sample {
                        theta,
                        draw: Some(q),
                        failures,
                        over_g,
                    });
                }
                Err(e) if e.is_solver_failure() || matches!(e, Error::DegenerateBall(_)) => {
                    failures += 1;
                    if failures > opts.max_failures || attempt + 1 >= 1 << ATTEMPT_BITS {
                        return Err(Error::InsufficientTrials(format!(
                            "sample {s}: {failures} failed draws (last: {e})"
                        )));
                    }
                }
                Err(e) => return Err(e),
            }
        }
        unreachable!("attempt counter exhausted")
    };
    let samples: Vec<Sample> = (0..n).into_par_iter().map(one).collect::<Result<_>>()?;

    let failures: usize = samples.iter().map(|s| s.failures).sum();
    if failures > opts.max_failures {
        return Err(Error::InsufficientTrials(format!(
            "{failures} failed draws exceed the cap of {}",
            opts.max_failures
        )));
    }
    let g_violations = samples.iter().filter(|s| s.over_g).count();
    let best = samples
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.theta.total_cmp(&b.1.theta).then(b.0.cmp(&a.0)));
    let (gamma_n, argmax) = match best {
        Some((_, s)) => (s.theta, s.draw.as_ref().map(|q| (p.to_data(), q.to_data()))),
        None => (0.0, None),
    };
    let mut analytic_upper = analytic_sensitivity_bound(p, m, opts.g_bound);
    if g_violations > 0 && m.hessian_spectral_radius(p) > 0.0 {
        analytic_upper = None;
    }
    Ok(SensitivityEstimate {
        gamma_n,
        n,
        alpha,
        beta,
        analytic_upper,
        argmax,
        failures,
        g_violations,
        metric_hash: metric_hash(m),
        stream: StreamId::new(seed, Domain::Sensitivity, agent, 0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Masks, Norm};
    use nalgebra::DMatrix;

    fn scalar(h: f64) -> QuadraticLocal {
        QuadraticLocal::unconstrained(DMatrix::from_element(1, 1, h), DVector::zeros(1)).unwrap()
    }

    #[test]
    fn dual_grid_sweeps_the_ball() {
        let q = QuadraticLocal::unconstrained(
            DMatrix::from_element(1, 1, 2.0),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let grid = dual_grid(&q, 3.0, 5);
        let z: Vec<f64> = grid
            .iter()
            .map(|mu| solve_local(&q, mu, 1e-10).unwrap().z[0])
            .collect();
        for (a, b) in z.iter().zip([0.0, -3.0, -1.5, 1.5, 3.0]) {
            assert!((a - b).abs() < 1e-9, "{z:?}");
        }
        assert_eq!(z.len(), 5);
        assert_eq!(dual_grid(&q, 3.0, 1).len(), 1);
    }

    #[test]
    fn sampling_rule() {
        assert_eq!(sampling_rule_n(0.01, 0.01).unwrap(), 9999);
        assert_eq!(sampling_rule_n(0.1, 0.5).unwrap(), 19);
        assert_eq!(sampling_rule_n(1.0, 1.0).unwrap(), 0);
        assert!(sampling_rule_n(0.0, 0.5).is_err());
    }

    #[test]
    fn closed_form_bounds() {
        let p = QuadraticLocal::unconstrained(
            DMatrix::from_diagonal_element(2, 2, 2.0),
            DVector::zeros(2),
        )
        .unwrap();
        assert_eq!(sensitivity_bound_hessian(&p, 1.0), 0.5);
        let p1 = scalar(1.0);
        assert_eq!(sensitivity_bound_hessian(&p1, 3.0), 3.0);
        assert_eq!(sensitivity_bound_linear(&p1), 1.0);
        assert_eq!(sensitivity_bound_linear(&scalar(4.0)), 0.25);
    }

    #[test]
    fn one_dimensional_linear_metric_is_near_tight() {
        let p = scalar(1.0);
        let est = sensitivity_sample_seeded(
            &p,
            &AdjacencyMetric::linear_only(),
            0.05,
            0.05,
            3,
            0,
            &SensitivityOptions::default(),
        )
        .unwrap();
        assert_eq!(est.n, 399);
        assert!(est.gamma_n <= 1.0 + 1e-12);
        assert!(est.gamma_n >= 0.95);
        assert_eq!(est.analytic_upper, Some(1.0));
        assert_eq!(est.certificate().label, "certified");
    }

    #[test]
    fn zero_radius_metric() {
        let m = AdjacencyMetric::linear_only().with_masks(Masks {
            linear: Some(vec![0.0]),
            ..Masks::default()
        });
        let est = sensitivity_sample_seeded(
            &scalar(1.0),
            &m,
            0.5,
            0.5,
            1,
            0,
            &SensitivityOptions::default(),
        )
        .unwrap();
        assert_eq!(est.gamma_n, 0.0);
    }

    #[test]
    fn hessian_metric_requires_g() {
        let p = scalar(3.0);
        let m = AdjacencyMetric::hessian_only();
        assert_eq!(analytic_sensitivity_bound(&p, &m, None), None);
        assert_eq!(
            analytic_sensitivity_bound(&p, &m, Some(2.0)),
            Some(2.0 / 3.0)
        );
        let l1 = AdjacencyMetric::new([0.0, 2.0, 0.0, 0.0], Norm::L1);
        assert_eq!(analytic_sensitivity_bound(&p, &l1, None), Some(0.5 / 3.0));
    }

    #[test]
    fn deterministic_under_parallelism() {
        let p = QuadraticLocal::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.5]),
            DVector::from_column_slice(&[0.2, -0.1]),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_element(1, 0.1),
        )
        .unwrap();
        let opts = SensitivityOptions::default();
        let a =
            sensitivity_sample_seeded(&p, &AdjacencyMetric::linear_only(), 0.1, 0.2, 9, 1, &opts)
                .unwrap();
        let b =
            sensitivity_sample_seeded(&p, &AdjacencyMetric::linear_only(), 0.1, 0.2, 9, 1, &opts)
                .unwrap();
        assert_eq!(a.gamma_n.to_bits(), b.gamma_n.to_bits());
        assert!(a.dominance_holds(1e-9));
    }
}
