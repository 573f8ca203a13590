use std::fmt::Write;

use serde::Serialize;

use super::Transcript;
use crate::privacy::PrivacyReport;

pub const TRANSCRIPT_CSV_VERSION: u32 = 1;

fn join(v: &nalgebra::DVector<f64>) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

impl Transcript {
    /// One row per agent per iteration; vector cells are `;`-separated.
    /// `gaps[k-1]` fills the `dual_gap` column when given.
    pub fn to_csv(&self, gaps: Option<&[f64]>) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# privdist transcript v{TRANSCRIPT_CSV_VERSION} seed={} problem={}",
            self.seed, self.problem_hash
        );
        out.push_str("k,agent,tau,z,v,mu,dual_gap\n");
        for it in &self.iterations {
            let gap = gaps
                .and_then(|g| g.get(it.k - 1))
                .map(|g| g.to_string())
                .unwrap_or_default();
            for (i, a) in it.agents.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    it.k,
                    i,
                    it.tau,
                    join(&a.z),
                    join(&a.v),
                    join(&a.mu),
                    gap
                );
            }
        }
        out
    }
}

/// JSON summary of a private run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub problem_hash: String,
    pub seed: u64,
    pub iterations: usize,
    pub reference_value: Option<f64>,
    pub final_gap: Option<f64>,
    pub suboptimality_bound: Option<f64>,
    pub bounded: bool,
    pub bound_violations: usize,
    pub privacy: PrivacyReport,
    pub noise_streams: String,
}
