use super::{gcd, GraphError, RecurrentClass, TransitionGraph};

pub const ORACLE_NODE_LIMIT: usize = 12;

/// Gcd of the lengths of all simple cycles in `c`, by exhaustive enumeration.
/// Every closed walk decomposes into simple cycles, so this is the class period.
pub fn period_oracle(g: &TransitionGraph, c: &RecurrentClass) -> Result<usize, GraphError> {
    if c.trivial || c.is_empty() {
        return Err(GraphError::TrivialClass);
    }
    if c.len() > ORACLE_NODE_LIMIT {
        return Err(GraphError::ClassTooLarge {
            size: c.len(),
            limit: ORACLE_NODE_LIMIT,
        });
    }
    let nodes = &c.nodes;
    let m = nodes.len();
    let adj: Vec<Vec<usize>> = nodes
        .iter()
        .map(|&u| {
            g.successors(u)
                .iter()
                .filter_map(|v| nodes.binary_search(v).ok())
                .collect()
        })
        .collect();
    let mut acc = 0u64;
    // cycles whose smallest local index is `start`
    for start in 0..m {
        let mut on_path = vec![false; m];
        on_path[start] = true;
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        while let Some(&mut (u, ref mut pos)) = stack.last_mut() {
            if let Some(&v) = adj[u].get(*pos) {
                *pos += 1;
                if v == start {
                    acc = gcd(acc, stack.len() as u64);
                    if acc == 1 {
                        return Ok(1);
                    }
                } else if v > start && !on_path[v] {
                    on_path[v] = true;
                    stack.push((v, 0));
                }
            } else {
                on_path[u] = false;
                stack.pop();
            }
        }
    }
    Ok(acc as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::recurrent_classes;

    #[test]
    fn oracle_examples() {
        let cyc = TransitionGraph::from_edges(5, &(0..5).map(|i| (i, (i + 1) % 5)).collect::<Vec<_>>());
        let c = &recurrent_classes(&cyc)[0];
        assert_eq!(period_oracle(&cyc, c).unwrap(), 5);
        let looped = TransitionGraph::from_edges(2, &[(0, 1), (1, 0), (1, 1)]);
        assert_eq!(period_oracle(&looped, &recurrent_classes(&looped)[0]).unwrap(), 1);
        let g = TransitionGraph::from_edges(
            9,
            &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (4, 5), (5, 6), (6, 7), (7, 8), (8, 0)],
        );
        assert_eq!(period_oracle(&g, &recurrent_classes(&g)[0]).unwrap(), 2);
    }

    #[test]
    fn oracle_refuses_large_classes() {
        let n = 13;
        let g = TransitionGraph::from_edges(n, &(0..n).map(|i| (i, (i + 1) % n)).collect::<Vec<_>>());
        assert!(matches!(
            period_oracle(&g, &recurrent_classes(&g)[0]),
            Err(GraphError::ClassTooLarge { size: 13, .. })
        ));
    }
}
