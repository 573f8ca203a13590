use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Graph;

/// One entry of a local vector `z_i`: component `index` of `[v]_owner`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Component {
    pub owner: usize,
    pub index: usize,
}

/// Index-map representation of the selectors `E_i` and `F_ji`.
///
/// `z_i = E_i v` is the list of global components in `entries[i]`, in order.
/// `[v]_i = F_ji z_j` picks the entries of `z_j` owned by `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionMap {
    owned: Vec<usize>,
    offsets: Vec<usize>,
    entries: Vec<Vec<Component>>,
    /// For each global component, the `(agent, position in z_agent)` pairs holding it.
    #[serde(skip)]
    holders: Vec<Vec<(usize, usize)>>,
}

impl SelectionMap {
    /// Builds `z_i` as the concatenation of `[v]_j` over `j ∈ N_i` in ascending order.
    pub fn neighborhood(graph: &Graph, owned: &[usize]) -> Self {
        let entries = (0..graph.len())
            .map(|i| {
                graph
                    .neighbors(i)
                    .iter()
                    .filter(|&&j| j < owned.len())
                    .flat_map(|&j| (0..owned[j]).map(move |index| Component { owner: j, index }))
                    .collect()
            })
            .collect();
        SelectionMap::from_entries(owned.to_vec(), entries)
    }

    /// Raw constructor; entries referring to unknown components are kept and
    /// reported by `validate`.
    pub fn from_entries(owned: Vec<usize>, entries: Vec<Vec<Component>>) -> Self {
        let mut offsets = Vec::with_capacity(owned.len());
        let mut acc = 0;
        for &n in &owned {
            offsets.push(acc);
            acc += n;
        }
        let mut holders = vec![Vec::new(); acc];
        for (i, row) in entries.iter().enumerate() {
            for (pos, c) in row.iter().enumerate() {
                if c.owner < owned.len() && c.index < owned[c.owner] {
                    holders[offsets[c.owner] + c.index].push((i, pos));
                }
            }
        }
        SelectionMap {
            owned,
            offsets,
            entries,
            holders,
        }
    }

    pub fn agents(&self) -> usize {
        self.entries.len()
    }

    /// Dimension of the global variable `v`.
    pub fn global_dim(&self) -> usize {
        self.holders.len()
    }

    /// Dimension of `[v]_j`.
    pub fn owned_dim(&self, j: usize) -> usize {
        self.owned[j]
    }

    /// Dimension of `z_i`.
    pub fn local_dim(&self, i: usize) -> usize {
        self.entries[i].len()
    }

    pub fn entries(&self, i: usize) -> &[Component] {
        &self.entries[i]
    }

    pub fn global_index(&self, c: Component) -> usize {
        self.offsets[c.owner] + c.index
    }

    /// Agents (with positions) whose local vector contains global component `g`.
    pub fn holders(&self, g: usize) -> &[(usize, usize)] {
        &self.holders[g]
    }

    /// Owner of global component `g`.
    pub fn owner_of(&self, g: usize) -> usize {
        (0..self.owned.len())
            .rev()
            .find(|&j| self.owned[j] > 0 && self.offsets[j] <= g)
            .expect("component index out of range")
    }

    /// `z_i = E_i v`.
    pub fn gather(&self, i: usize, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.entries[i].len(),
            self.entries[i].iter().map(|&c| v[self.global_index(c)]),
        )
    }

    /// `[v]_i = F_ji z_j`; `None` when `z_j` does not carry all of `[v]_i`.
    pub fn extract(&self, j: usize, i: usize, z_j: &DVector<f64>) -> Option<DVector<f64>> {
        let mut out = DVector::zeros(self.owned[i]);
        let mut found = vec![false; self.owned[i]];
        for (pos, c) in self.entries[j].iter().enumerate() {
            if c.owner == i && c.index < self.owned[i] {
                out[c.index] = z_j[pos];
                found[c.index] = true;
            }
        }
        found.into_iter().all(|f| f).then_some(out)
    }

    /// Dense stacked selector `E = [E_1; …; E_M]` (rows = Σ dim z_i, cols = dim v).
    pub fn dense_stacked(&self) -> DMatrix<f64> {
        let rows: usize = self.entries.iter().map(Vec::len).sum();
        let mut e = DMatrix::zeros(rows, self.global_dim());
        let mut r = 0;
        for row in &self.entries {
            for &c in row {
                e[(r, self.global_index(c))] = 1.0;
                r += 1;
            }
        }
        e
    }

    /// Lists every violated invariant with respect to `graph`.
    pub fn validate(&self, graph: &Graph) -> Vec<String> {
        let mut issues = Vec::new();
        if self.entries.len() != graph.len() || self.owned.len() != graph.len() {
            issues.push(format!(
                "selection map covers {} agents ({} owners), graph has {}",
                self.entries.len(),
                self.owned.len(),
                graph.len()
            ));
            return issues;
        }
        for (i, row) in self.entries.iter().enumerate() {
            for c in row {
                if c.owner >= self.owned.len() || c.index >= self.owned[c.owner] {
                    issues.push(format!("z_{i} references unknown component {c:?}"));
                } else if !graph.neighbors(i).contains(&c.owner) {
                    issues.push(format!(
                        "z_{i} references component of agent {} outside N_{i}",
                        c.owner
                    ));
                }
            }
            let mut sorted = row.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != row.len() {
                issues.push(format!("z_{i} lists a component twice"));
            }
        }
        for i in 0..self.owned.len() {
            if self.owned[i] == 0 {
                continue;
            }
            for &j in graph.neighbors(i) {
                if j < self.entries.len()
                    && self
                        .extract(j, i, &DVector::zeros(self.entries[j].len()))
                        .is_none()
                {
                    issues.push(format!(
                        "z_{j} does not carry all of [v]_{i} although {j} ∈ N_{i}"
                    ));
                }
            }
        }
        issues
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path(m: usize) -> Graph {
        Graph::from_edges(m, (1..m).map(|i| (i - 1, i)))
    }

    #[test]
    fn star_layout_matches_consensus_form() {
        let g = Graph::star(4, 0);
        let s = SelectionMap::neighborhood(&g, &[0, 1, 1, 1]);
        assert_eq!(s.local_dim(0), 3);
        assert_eq!(s.local_dim(2), 1);
        assert_eq!(s.global_dim(), 3);
        assert_eq!(s.owner_of(0), 1);
        assert_eq!(s.owner_of(2), 3);
        assert!(s.validate(&g).is_empty());
    }

    #[test]
    fn missing_entry_is_reported() {
        let g = path(2);
        let s = SelectionMap::from_entries(
            vec![1, 1],
            vec![
                vec![Component { owner: 0, index: 0 }],
                vec![Component { owner: 1, index: 0 }],
            ],
        );
        assert!(!s.validate(&g).is_empty());
    }

    proptest! {
        #[test]
        fn gather_then_extract_round_trips(
            m in 1usize..6,
            dims in proptest::collection::vec(0usize..3, 6),
            vals in proptest::collection::vec(-10.0f64..10.0, 18),
        ) {
            let g = path(m);
            let owned = &dims[..m];
            let s = SelectionMap::neighborhood(&g, owned);
            prop_assert!(s.validate(&g).is_empty());
            let v = DVector::from_iterator(s.global_dim(), vals.iter().copied().chain(std::iter::repeat(0.5)).take(s.global_dim()));
            let e = s.dense_stacked();
            let stacked = &e * &v;
            let mut r = 0;
            for i in 0..m {
                let zi = s.gather(i, &v);
                for t in 0..zi.len() {
                    prop_assert_eq!(zi[t], stacked[r + t]);
                }
                r += zi.len();
                for &j in g.neighbors(i) {
                    let zj = s.gather(j, &v);
                    let back = s.extract(j, i, &zj).unwrap();
                    let off: usize = owned[..i].iter().sum();
                    for t in 0..owned[i] {
                        prop_assert_eq!(back[t], v[off + t]);
                    }
                }
            }
        }
    }
}
