use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Component, Graph, QuadraticData, QuadraticLocal, SelectionMap};
use crate::error::{Error, Result};

/// Every violated invariant of a problem instance; empty iff the instance is valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.issues.iter().any(|s| s.contains(needle))
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.issues.join("; "))
    }
}

/// A separable quadratic problem over a communication graph:
/// minimize `Σ f_i(z_i)` subject to `z_i ∈ C_i` and `z_i = E_i v`.
#[derive(Debug, Clone)]
pub struct DistributedProblem {
    graph: Graph,
    selection: SelectionMap,
    locals: Vec<QuadraticLocal>,
    bounds: Vec<f64>,
}

impl DistributedProblem {
    /// Validated constructor.
    pub fn new(
        graph: Graph,
        selection: SelectionMap,
        locals: Vec<QuadraticLocal>,
        bounds: Vec<f64>,
    ) -> Result<Self> {
        let p = Self::new_unchecked(graph, selection, locals, bounds);
        let report = p.validate();
        if report.is_empty() {
            Ok(p)
        } else {
            Err(Error::Validation(report.to_string()))
        }
    }

    pub fn new_unchecked(
        graph: Graph,
        selection: SelectionMap,
        locals: Vec<QuadraticLocal>,
        bounds: Vec<f64>,
    ) -> Self {
        DistributedProblem {
            graph,
            selection,
            locals,
            bounds,
        }
    }

    /// Checks graph, selection, local data and bounds.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = self.graph.validate();
        issues.extend(self.selection.validate(&self.graph));
        let m = self.graph.len();
        if self.locals.len() != m {
            issues.push(format!(
                "{} local problems for {m} agents",
                self.locals.len()
            ));
        }
        if self.bounds.len() != m {
            issues.push(format!("{} bounds G_i for {m} agents", self.bounds.len()));
        }
        for (i, q) in self.locals.iter().enumerate() {
            issues.extend(q.validate().into_iter().map(|s| format!("agent {i}: {s}")));
            if i < self.selection.agents() && q.dim() != self.selection.local_dim(i) {
                issues.push(format!(
                    "agent {i}: local problem has dimension {}, z_{i} has {}",
                    q.dim(),
                    self.selection.local_dim(i)
                ));
            }
        }
        for (i, g) in self.bounds.iter().enumerate() {
            if !(g.is_finite() && *g > 0.0) {
                issues.push(format!("agent {i}: G_i must be positive (got {g})"));
            }
        }
        ValidationReport { issues }
    }

    pub fn agents(&self) -> usize {
        self.graph.len()
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn selection(&self) -> &SelectionMap {
        &self.selection
    }

    pub fn locals(&self) -> &[QuadraticLocal] {
        &self.locals
    }

    pub fn local(&self, i: usize) -> &QuadraticLocal {
        &self.locals[i]
    }

    /// User-supplied radii `G_i` on `‖z_i^k‖`.
    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    /// `ρ_φ = min_i λ_min(H_i)`.
    pub fn rho_phi(&self) -> f64 {
        self.locals
            .iter()
            .map(QuadraticLocal::lambda_min)
            .fold(f64::INFINITY, f64::min)
    }

    /// `B² = Σ G_i²`, the bound on the squared dual gradient.
    pub fn gradient_bound_sq(&self) -> f64 {
        self.bounds.iter().map(|g| g * g).sum()
    }

    /// Copy with agent `i`'s local problem replaced.
    pub fn with_local(&self, i: usize, q: QuadraticLocal) -> Result<Self> {
        let mut locals = self.locals.clone();
        if q.dim() != locals[i].dim() {
            return Err(Error::Dimension(format!(
                "replacement for agent {i} has dimension {}, expected {}",
                q.dim(),
                locals[i].dim()
            )));
        }
        locals[i] = q;
        Ok(DistributedProblem {
            locals,
            ..self.clone()
        })
    }

    /// Objective `Σ f_i(E_i v)` at a global point.
    pub fn primal_objective(&self, v: &DVector<f64>) -> f64 {
        (0..self.agents())
            .map(|i| self.locals[i].objective(&self.selection.gather(i, v)))
            .sum()
    }

    pub fn to_data(&self) -> ProblemData {
        let m = self.agents();
        ProblemData {
            agents: m,
            edges: self.graph.edges().map(|(a, b)| [a, b]).collect(),
            owned: (0..m).map(|j| self.selection.owned_dim(j)).collect(),
            entries: Some(
                (0..m)
                    .map(|i| {
                        self.selection
                            .entries(i)
                            .iter()
                            .map(|c| [c.owner, c.index])
                            .collect()
                    })
                    .collect(),
            ),
            locals: self.locals.iter().map(QuadraticLocal::to_data).collect(),
            bounds: self.bounds.clone(),
        }
    }

    /// Byte-stable JSON serialization (sorted keys).
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self.to_data()).expect("problem data serializes");
        serde_json::to_string(&value).expect("json value serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Serialized problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemData {
    pub agents: usize,
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
    /// Dimension of `[v]_j` per agent.
    pub owned: Vec<usize>,
    /// Explicit `(owner, index)` layout of each `z_i`; defaults to the
    /// concatenation over the neighborhood.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<Vec<[usize; 2]>>>,
    pub locals: Vec<QuadraticData>,
    /// `G_i` per agent.
    pub bounds: Vec<f64>,
}

impl ProblemData {
    /// Builds the problem without rejecting invariant violations.
    pub fn to_problem_unchecked(&self) -> Result<DistributedProblem> {
        let graph = Graph::from_edges(self.agents, self.edges.iter().map(|e| (e[0], e[1])));
        let selection = match &self.entries {
            Some(rows) => SelectionMap::from_entries(
                self.owned.clone(),
                rows.iter()
                    .map(|r| {
                        r.iter()
                            .map(|e| Component {
                                owner: e[0],
                                index: e[1],
                            })
                            .collect()
                    })
                    .collect(),
            ),
            None => {
                if self.owned.len() != self.agents {
                    return Err(Error::Dimension(format!(
                        "owned has {} entries for {} agents",
                        self.owned.len(),
                        self.agents
                    )));
                }
                SelectionMap::neighborhood(&graph, &self.owned)
            }
        };
        let locals = self
            .locals
            .iter()
            .map(QuadraticData::to_local_unchecked)
            .collect::<Result<Vec<_>>>()?;
        Ok(DistributedProblem::new_unchecked(
            graph,
            selection,
            locals,
            self.bounds.clone(),
        ))
    }

    pub fn to_problem(&self) -> Result<DistributedProblem> {
        let p = self.to_problem_unchecked()?;
        let report = p.validate();
        if report.is_empty() {
            Ok(p)
        } else {
            Err(Error::Validation(report.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use std::collections::BTreeSet;

    fn scalar(h: f64) -> QuadraticLocal {
        QuadraticLocal::new_unchecked(
            DMatrix::from_element(1, 1, h),
            DVector::zeros(1),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
        )
    }

    #[test]
    fn single_agent_is_valid() {
        let g = Graph::from_edges(1, []);
        let s = SelectionMap::neighborhood(&g, &[1]);
        let p = DistributedProblem::new_unchecked(g, s, vec![scalar(2.0)], vec![1.0]);
        assert!(p.validate().is_empty());
        assert_eq!(p.rho_phi(), 2.0);
    }

    #[test]
    fn negative_curvature_reported() {
        let g = Graph::from_edges(1, []);
        let s = SelectionMap::neighborhood(&g, &[1]);
        let p = DistributedProblem::new_unchecked(g, s, vec![scalar(-1.0)], vec![1.0]);
        assert!(p.validate().contains("λ_min ≤ 0"));
    }

    #[test]
    fn asymmetric_graph_reported() {
        let neighbors = vec![BTreeSet::from([0]), BTreeSet::from([0, 1])];
        let g = Graph::from_parts(2, [(0, 1)], neighbors);
        let s = SelectionMap::from_entries(
            vec![1, 0],
            vec![
                vec![Component { owner: 0, index: 0 }],
                vec![Component { owner: 0, index: 0 }],
            ],
        );
        let p =
            DistributedProblem::new_unchecked(g, s, vec![scalar(1.0), scalar(1.0)], vec![1.0, 1.0]);
        assert!(p.validate().contains("symmetry"));
    }

    #[test]
    fn nonpositive_bound_reported() {
        let g = Graph::from_edges(1, []);
        let s = SelectionMap::neighborhood(&g, &[1]);
        let p = DistributedProblem::new_unchecked(g, s, vec![scalar(1.0)], vec![0.0]);
        assert!(p.validate().contains("G_i"));
    }

    #[test]
    fn canonical_json_is_stable() {
        let g = Graph::star(3, 0);
        let s = SelectionMap::neighborhood(&g, &[0, 1, 1]);
        let center =
            QuadraticLocal::unconstrained(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        let p = DistributedProblem::new(g, s, vec![center, scalar(1.0), scalar(2.0)], vec![1.0; 3])
            .unwrap();
        let a = p.canonical_json();
        let back = serde_json::from_str::<ProblemData>(&a)
            .unwrap()
            .to_problem()
            .unwrap();
        assert_eq!(back.canonical_json(), a);
        assert_eq!(back.hash(), p.hash());
    }
}
