//! Box coverings, transition graphs and their recurrent structure.

mod covering;
mod cyclic;
mod oracle;
mod scc;

pub use covering::{build_graph, BoxCovering, Cell, GraphParams, Padding, RegionBox, EDGE_TOL, MAX_CELLS};
pub use cyclic::{
    class_period, cyclic_classes, cyclic_classes_from_root, wielandt_bound, CyclicDecomposition,
    MixingCertificate, MIXING_NODE_LIMIT,
};
pub use oracle::{period_oracle, ORACLE_NODE_LIMIT};
pub use scc::{recurrent_classes, strongly_connected_components, trapping_regions, RecurrentClass};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::system::SystemError;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("depth must be at least 1")]
    InvalidDepth,
    #[error("covering would have {cells} cells, limit is {limit}")]
    CoveringTooLarge { cells: usize, limit: usize },
    #[error("region does not intersect the domain")]
    RegionOutsideDomain,
    #[error("region box has dimension {got}, expected {expected}")]
    RegionDimension { expected: usize, got: usize },
    #[error("class is trivial (single node without self-loop)")]
    TrivialClass,
    #[error("class has {size} nodes; the brute-force oracle accepts at most {limit}")]
    ClassTooLarge { size: usize, limit: usize },
    #[error(transparent)]
    System(#[from] SystemError),
}

/// How a graph was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub depth: u32,
    pub samples_per_axis: usize,
    pub padding: f64,
    pub padding_rule: String,
}

/// Directed graph with sorted, duplicate-free successor lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionGraph {
    pub adjacency: Vec<Vec<usize>>,
    pub provenance: Option<Provenance>,
}

impl TransitionGraph {
    /// Builds a graph from an edge list; out-of-range endpoints panic.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            assert!(u < n && v < n, "edge ({u}, {v}) out of range for {n} nodes");
            adjacency[u].push(v);
        }
        Self::from_adjacency(adjacency)
    }

    pub fn from_adjacency(mut adjacency: Vec<Vec<usize>>) -> Self {
        for succ in &mut adjacency {
            succ.sort_unstable();
            succ.dedup();
        }
        Self {
            adjacency,
            provenance: None,
        }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    pub fn successors(&self, u: usize) -> &[usize] {
        &self.adjacency[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Nodes reachable from `start` in one or more steps, plus `start` itself.
    pub fn forward_closure(&self, start: &[usize]) -> Vec<usize> {
        let mut seen = vec![false; self.node_count()];
        let mut stack: Vec<usize> = start.to_vec();
        for &s in start {
            seen[s] = true;
        }
        while let Some(u) = stack.pop() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        (0..seen.len()).filter(|&i| seen[i]).collect()
    }

    /// Graphviz export; nodes are coloured by cyclic class when decompositions are given.
    pub fn to_dot(&self, decompositions: &[CyclicDecomposition]) -> String {
        let mut label = vec![None; self.node_count()];
        for (ci, dec) in decompositions.iter().enumerate() {
            for (k, part) in dec.classes.iter().enumerate() {
                for &u in part {
                    label[u] = Some((ci, k, dec.period));
                }
            }
        }
        let mut out = String::from("digraph transition {\n  node [shape=box, style=filled];\n");
        for (u, l) in label.iter().enumerate() {
            match l {
                Some((ci, k, period)) => {
                    let hue = *k as f64 / *period as f64;
                    out.push_str(&format!(
                        "  n{u} [label=\"{u}\", fillcolor=\"{hue:.3} 0.45 0.95\", class=\"c{ci}_{k}\"];\n"
                    ));
                }
                None => out.push_str(&format!("  n{u} [label=\"{u}\", fillcolor=\"0 0 0.9\"];\n")),
            }
        }
        for (u, succ) in self.adjacency.iter().enumerate() {
            for v in succ {
                out.push_str(&format!("  n{u} -> n{v};\n"));
            }
        }
        out.push_str("}\n");
        out
    }
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}
