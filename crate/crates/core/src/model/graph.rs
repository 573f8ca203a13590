use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

/// Undirected communication graph over agents `0..m`.
///
/// Neighbor sets are stored explicitly (and always include the agent itself)
/// so that a loaded instance can be checked against its edge list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    m: usize,
    edges: BTreeSet<(usize, usize)>,
    neighbors: Vec<BTreeSet<usize>>,
}

impl Graph {
    /// Builds a graph from unordered pairs; neighbor sets are derived.
    pub fn from_edges(m: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut set = BTreeSet::new();
        let mut neighbors: Vec<BTreeSet<usize>> = (0..m).map(|i| BTreeSet::from([i])).collect();
        for (a, b) in edges {
            if a == b {
                continue;
            }
            let e = (a.min(b), a.max(b));
            set.insert(e);
            if a < m && b < m {
                neighbors[a].insert(b);
                neighbors[b].insert(a);
            }
        }
        Graph {
            m,
            edges: set,
            neighbors,
        }
    }

    /// Star graph with `center` connected to every other agent.
    pub fn star(m: usize, center: usize) -> Self {
        Graph::from_edges(m, (0..m).filter(|&i| i != center).map(|i| (center, i)))
    }

    /// Raw constructor that keeps the given neighbor sets; use `validate` afterwards.
    pub fn from_parts(
        m: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        neighbors: Vec<BTreeSet<usize>>,
    ) -> Self {
        Graph {
            m,
            edges: edges
                .into_iter()
                .map(|(a, b)| (a.min(b), a.max(b)))
                .collect(),
            neighbors,
        }
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// `N_i`, including `i`.
    pub fn neighbors(&self, i: usize) -> &BTreeSet<usize> {
        &self.neighbors[i]
    }

    /// Lists every violated invariant.
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.m == 0 {
            issues.push("graph has no agents".to_string());
            return issues;
        }
        if self.neighbors.len() != self.m {
            issues.push(format!(
                "graph has {} neighbor sets for {} agents",
                self.neighbors.len(),
                self.m
            ));
            return issues;
        }
        for &(a, b) in &self.edges {
            if a >= self.m || b >= self.m {
                issues.push(format!("edge ({a},{b}) references unknown agent"));
                continue;
            }
            if !self.neighbors[a].contains(&b) || !self.neighbors[b].contains(&a) {
                issues.push(format!(
                    "symmetry violation: edge ({a},{b}) not reflected in both neighbor sets"
                ));
            }
        }
        for (i, n) in self.neighbors.iter().enumerate() {
            if !n.contains(&i) {
                issues.push(format!("agent {i} missing from its own neighbor set"));
            }
            for &j in n {
                if j == i {
                    continue;
                }
                if j >= self.m || !self.edges.contains(&(i.min(j), i.max(j))) {
                    issues.push(format!(
                        "symmetry violation: {j} in N_{i} without a matching edge"
                    ));
                }
            }
        }
        if !self.is_connected() {
            issues.push("graph is not connected".to_string());
        }
        issues
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.m];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &self.neighbors[i] {
                if j < self.m && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_neighbors_include_self() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]);
        assert_eq!(g.neighbors(1), &BTreeSet::from([0, 1, 2]));
        assert_eq!(g.neighbors(0), &BTreeSet::from([0, 1]));
        assert!(g.validate().is_empty());
    }

    #[test]
    fn detects_asymmetric_neighbor_sets() {
        let neighbors = vec![BTreeSet::from([0]), BTreeSet::from([0, 1])];
        let g = Graph::from_parts(2, [(0, 1)], neighbors);
        let report = g.validate();
        assert!(report.iter().any(|s| s.contains("symmetry")), "{report:?}");
    }

    #[test]
    fn detects_disconnected() {
        let g = Graph::from_edges(3, [(0, 1)]);
        assert!(g.validate().iter().any(|s| s.contains("connected")));
    }
}
