use serde::{Deserialize, Serialize};

use super::{gcd, GraphError, RecurrentClass, TransitionGraph};

/// Cyclic classes above this size get a `TooLarge` certificate instead of a search.
pub const MIXING_NODE_LIMIT: usize = 4096;

/// Result of the search for a uniform path length inside one cyclic class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MixingCertificate {
    /// Every ordered pair is joined by a path of length exactly `exponent * period`.
    Exponent { exponent: usize, bound: usize },
    /// No path of length `bound * period` from `from` to `to`.
    Counterexample { from: usize, to: usize, bound: usize },
    TooLarge { size: usize, limit: usize },
}

impl MixingCertificate {
    pub fn exponent(&self) -> Option<usize> {
        match self {
            MixingCertificate::Exponent { exponent, .. } => Some(*exponent),
            _ => None,
        }
    }
}

/// Period `l` and the ordered partition `classes[0..l]`; edges go from
/// `classes[i]` to `classes[(i + 1) % l]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CyclicDecomposition {
    pub class: RecurrentClass,
    pub period: usize,
    pub classes: Vec<Vec<usize>>,
    pub mixing: Vec<MixingCertificate>,
}

pub fn wielandt_bound(m: usize) -> usize {
    (m.max(1) - 1).pow(2) + 1
}

const UNSET: usize = usize::MAX;

/// BFS levels from `root` along edges inside `c`; `UNSET` outside the class.
fn levels(g: &TransitionGraph, c: &RecurrentClass, root: usize) -> Vec<usize> {
    let mut level = vec![UNSET; g.node_count()];
    let mut queue = std::collections::VecDeque::new();
    level[root] = 0;
    queue.push_back(root);
    while let Some(u) = queue.pop_front() {
        for &v in g.successors(u) {
            if level[v] == UNSET && c.contains(v) {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    level
}

fn period_from_levels(g: &TransitionGraph, c: &RecurrentClass, level: &[usize]) -> usize {
    let mut p = 0u64;
    for &u in &c.nodes {
        for &v in g.successors(u) {
            if c.contains(v) {
                let diff = (level[u] as i64 + 1 - level[v] as i64).unsigned_abs();
                p = gcd(p, diff);
            }
        }
    }
    p as usize
}

/// Gcd of all cycle lengths in `c`, from BFS levels rooted at its lowest node.
pub fn class_period(g: &TransitionGraph, c: &RecurrentClass) -> Result<usize, GraphError> {
    if c.trivial || c.is_empty() {
        return Err(GraphError::TrivialClass);
    }
    let level = levels(g, c, c.nodes[0]);
    Ok(period_from_levels(g, c, &level))
}

/// Cyclic decomposition with the first class containing the lowest node.
pub fn cyclic_classes(g: &TransitionGraph, c: &RecurrentClass) -> Result<CyclicDecomposition, GraphError> {
    if c.trivial || c.is_empty() {
        return Err(GraphError::TrivialClass);
    }
    cyclic_classes_from_root(g, c, c.nodes[0])
}

/// Cyclic decomposition with the first class containing `root`.
pub fn cyclic_classes_from_root(
    g: &TransitionGraph,
    c: &RecurrentClass,
    root: usize,
) -> Result<CyclicDecomposition, GraphError> {
    if c.trivial || !c.contains(root) {
        return Err(GraphError::TrivialClass);
    }
    let level = levels(g, c, root);
    let period = period_from_levels(g, c, &level);
    let mut classes = vec![Vec::new(); period];
    for &u in &c.nodes {
        classes[level[u] % period].push(u);
    }
    let mixing = classes
        .iter()
        .map(|part| certify_mixing(g, c, part, period))
        .collect();
    Ok(CyclicDecomposition {
        class: c.clone(),
        period,
        classes,
        mixing,
    })
}

fn words(m: usize) -> usize {
    m.div_ceil(64)
}

fn set_bit(bits: &mut [u64], i: usize) {
    bits[i / 64] |= 1 << (i % 64);
}

fn is_full(bits: &[u64], m: usize) -> bool {
    (0..m).all(|i| bits[i / 64] >> (i % 64) & 1 == 1)
}

/// Smallest `e` within the Wielandt bound such that `period * e`-step paths join all
/// pairs of `part`, stepping along edges of the whole class.
fn certify_mixing(
    g: &TransitionGraph,
    c: &RecurrentClass,
    part: &[usize],
    period: usize,
) -> MixingCertificate {
    let m = part.len();
    if m > MIXING_NODE_LIMIT {
        return MixingCertificate::TooLarge {
            size: m,
            limit: MIXING_NODE_LIMIT,
        };
    }
    let bound = wielandt_bound(m);
    let mut local = vec![UNSET; g.node_count()];
    for (i, &u) in part.iter().enumerate() {
        local[u] = i;
    }
    // step[i]: local indices reachable from part[i] in exactly `period` steps
    let mut mark = vec![0usize; g.node_count()];
    let mut stamp = 0usize;
    let mut step: Vec<Vec<usize>> = Vec::with_capacity(m);
    for &u in part {
        let mut layer = vec![u];
        for _ in 0..period {
            stamp += 1;
            let mut next = Vec::new();
            for &w in &layer {
                for &v in g.successors(w) {
                    if mark[v] != stamp && c.contains(v) {
                        mark[v] = stamp;
                        next.push(v);
                    }
                }
            }
            layer = next;
        }
        let mut row: Vec<usize> = layer.iter().map(|&v| local[v]).filter(|&i| i != UNSET).collect();
        row.sort_unstable();
        step.push(row);
    }
    let w = words(m);
    let mut exponent = 1;
    for (i, row) in step.iter().enumerate() {
        let mut cur = vec![0u64; w];
        for &j in row {
            set_bit(&mut cur, j);
        }
        let mut e = 1;
        while !is_full(&cur, m) {
            if e >= bound {
                let missing = (0..m).find(|&j| cur[j / 64] >> (j % 64) & 1 == 0).unwrap();
                return MixingCertificate::Counterexample {
                    from: part[i],
                    to: part[missing],
                    bound,
                };
            }
            let mut next = vec![0u64; w];
            for j in 0..m {
                if cur[j / 64] >> (j % 64) & 1 == 1 {
                    for &k in &step[j] {
                        set_bit(&mut next, k);
                    }
                }
            }
            cur = next;
            e += 1;
        }
        exponent = exponent.max(e);
    }
    MixingCertificate::Exponent { exponent, bound }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::recurrent_classes;

    fn only_class(g: &TransitionGraph) -> RecurrentClass {
        let mut cs = recurrent_classes(g);
        assert_eq!(cs.len(), 1);
        cs.remove(0)
    }

    #[test]
    fn n_cycle_has_period_n() {
        for n in 1..8 {
            let g = TransitionGraph::from_edges(n, &(0..n).map(|i| (i, (i + 1) % n)).collect::<Vec<_>>());
            assert_eq!(class_period(&g, &only_class(&g)).unwrap(), n);
        }
    }

    #[test]
    fn self_loop_gives_period_one() {
        let g = TransitionGraph::from_edges(3, &[(0, 1), (1, 2), (2, 0), (1, 1)]);
        assert_eq!(class_period(&g, &only_class(&g)).unwrap(), 1);
    }

    #[test]
    fn cycles_of_four_and_six_give_two() {
        // 0-1-2-3 and 0-4-5-6-7-8 share node 0
        let g = TransitionGraph::from_edges(
            9,
            &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (4, 5), (5, 6), (6, 7), (7, 8), (8, 0)],
        );
        assert_eq!(class_period(&g, &only_class(&g)).unwrap(), 2);
    }

    #[test]
    fn four_cycle_decomposition() {
        let g = TransitionGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let dec = cyclic_classes(&g, &only_class(&g)).unwrap();
        assert_eq!(dec.period, 4);
        assert_eq!(dec.classes, vec![vec![0], vec![1], vec![2], vec![3]]);
        for cert in &dec.mixing {
            assert_eq!(cert.exponent(), Some(1));
        }
    }

    #[test]
    fn complete_bidirected_triangle_is_mixing() {
        let g = TransitionGraph::from_edges(3, &[(0, 1), (1, 0), (1, 2), (2, 1), (0, 2), (2, 0)]);
        let dec = cyclic_classes(&g, &only_class(&g)).unwrap();
        assert_eq!(dec.period, 1);
        assert_eq!(dec.classes, vec![vec![0, 1, 2]]);
        // two steps reach everything, one step misses the diagonal
        assert_eq!(dec.mixing[0].exponent(), Some(2));
    }

    #[test]
    fn complete_bipartite_squares_to_complete() {
        let a = [0, 2, 4];
        let b = [1, 3];
        let mut edges = Vec::new();
        for &x in &a {
            for &y in &b {
                edges.push((x, y));
                edges.push((y, x));
            }
        }
        let g = TransitionGraph::from_edges(5, &edges);
        let dec = cyclic_classes(&g, &only_class(&g)).unwrap();
        assert_eq!(dec.period, 2);
        assert_eq!(dec.classes, vec![vec![0, 2, 4], vec![1, 3]]);
        assert_eq!(dec.mixing[0].exponent(), Some(1));
        assert_eq!(dec.mixing[1].exponent(), Some(1));
    }

    #[test]
    fn other_root_gives_rotated_partition() {
        let g = TransitionGraph::from_edges(6, &[(0, 1), (1, 2), (2, 0), (0, 3), (3, 4), (4, 5), (5, 0), (1, 5)]);
        let c = only_class(&g);
        let base = cyclic_classes(&g, &c).unwrap();
        for &root in &c.nodes {
            let other = cyclic_classes_from_root(&g, &c, root).unwrap();
            assert_eq!(other.period, base.period);
            let shift = base.classes.iter().position(|p| p.contains(&root)).unwrap();
            for k in 0..base.period {
                assert_eq!(other.classes[k], base.classes[(k + shift) % base.period]);
            }
        }
    }

    #[test]
    fn trivial_class_is_rejected() {
        let g = TransitionGraph::from_edges(1, &[]);
        let c = RecurrentClass { nodes: vec![0], trivial: true };
        assert!(matches!(class_period(&g, &c), Err(GraphError::TrivialClass)));
        assert!(matches!(cyclic_classes(&g, &c), Err(GraphError::TrivialClass)));
    }

    #[test]
    fn wielandt_values() {
        assert_eq!(wielandt_bound(1), 1);
        assert_eq!(wielandt_bound(3), 5);
    }
}
