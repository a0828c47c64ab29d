use serde::{Deserialize, Serialize};

use super::TransitionGraph;

/// Strongly connected node set; `trivial` means a single node without a self-loop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecurrentClass {
    pub nodes: Vec<usize>,
    pub trivial: bool,
}

impl RecurrentClass {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, u: usize) -> bool {
        self.nodes.binary_search(&u).is_ok()
    }
}

/// All strongly connected components in topological order (sources first), each sorted.
pub fn strongly_connected_components(g: &TransitionGraph) -> Vec<RecurrentClass> {
    const UNSEEN: usize = usize::MAX;
    let n = g.node_count();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next = 0usize;
    let mut comps: Vec<RecurrentClass> = Vec::new();
    // (node, position in successor list)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (u, ref mut pos)) = call.last_mut() {
            if let Some(&v) = g.adjacency[u].get(*pos) {
                *pos += 1;
                if index[v] == UNSEEN {
                    index[v] = next;
                    low[v] = next;
                    next += 1;
                    stack.push(v);
                    on_stack[v] = true;
                    call.push((v, 0));
                } else if on_stack[v] {
                    low[u] = low[u].min(index[v]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[u]);
            }
            if low[u] == index[u] {
                let mut nodes = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    nodes.push(w);
                    if w == u {
                        break;
                    }
                }
                nodes.sort_unstable();
                let trivial = nodes.len() == 1 && !g.has_edge(nodes[0], nodes[0]);
                comps.push(RecurrentClass { nodes, trivial });
            }
        }
    }
    // Tarjan emits sinks first.
    comps.reverse();
    comps
}

/// Nontrivial strongly connected components, in topological order.
pub fn recurrent_classes(g: &TransitionGraph) -> Vec<RecurrentClass> {
    strongly_connected_components(g)
        .into_iter()
        .filter(|c| !c.trivial)
        .collect()
}

/// Distinct proper forward closures of the components. Each is nonempty and
/// successor-closed; the list is empty iff the graph is strongly connected.
pub fn trapping_regions(g: &TransitionGraph) -> Vec<Vec<usize>> {
    let n = g.node_count();
    let mut out: Vec<Vec<usize>> = Vec::new();
    for comp in strongly_connected_components(g) {
        let closure = g.forward_closure(&comp.nodes);
        if closure.len() < n && !out.contains(&closure) {
            out.push(closure);
        }
    }
    out
}
