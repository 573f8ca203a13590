use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdjacencyMetric, DistributedProblem, ProblemData};
use crate::error::{Error, Result};

/// Problem instance file: the problem plus optional per-agent adjacency metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(flatten)]
    pub problem: ProblemData,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub adjacency: Vec<AdjacencyMetric>,
}

impl InstanceFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_problem(problem: &DistributedProblem, adjacency: Vec<AdjacencyMetric>) -> Self {
        InstanceFile {
            problem: problem.to_data(),
            adjacency,
        }
    }

    /// Adjacency metric of agent `i`; agents without one use `‖h − h'‖₂`.
    pub fn metric(&self, i: usize) -> AdjacencyMetric {
        self.adjacency
            .get(i)
            .cloned()
            .unwrap_or_else(AdjacencyMetric::linear_only)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_AGENTS: &str = r#"
agents = 2
edges = [[0, 1]]
owned = [1, 1]
bounds = [2.0, 2.0]

[[locals]]
dim = 2
H = [2.0, 0.0, 0.0, 1.0]
h = [0.0, 1.0]
C = [1.0, 0.0]
c = [1.0]

[[locals]]
dim = 2
H = [1.0, 0.0, 0.0, 1.0]
h = [0.5, 0.0]

[[adjacency]]
weights = [0.0, 1.0, 0.0, 0.0]
norm = "l1"
"#;

    #[test]
    fn parses_instance_and_round_trips() {
        let inst = InstanceFile::from_toml(TWO_AGENTS).unwrap();
        let p = inst.problem.to_problem().unwrap();
        assert_eq!(p.agents(), 2);
        assert_eq!(p.local(0).rows(), 1);
        assert_eq!(p.local(1).rows(), 0);
        assert_eq!(inst.metric(0).norm, crate::model::Norm::L1);
        assert_eq!(inst.metric(1), AdjacencyMetric::linear_only());
        let text = inst.to_toml().unwrap();
        let again = InstanceFile::from_toml(&text).unwrap();
        assert_eq!(again.problem.to_problem().unwrap().hash(), p.hash());
        assert_eq!(again.to_toml().unwrap(), text);
    }

    #[test]
    fn malformed_file_is_a_config_error() {
        assert!(matches!(
            InstanceFile::from_toml("agents = "),
            Err(Error::Config(_))
        ));
    }
}
