use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::network::{DirectedNetwork, EdgeId, NodeId};

#[derive(PartialEq)]
struct Entry(f64, NodeId);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest distances from every node to `target` under non-negative edge weights,
/// together with the first edge of one shortest path (`None` at the target and at
/// nodes that cannot reach it).
pub fn distances_to(
    net: &DirectedNetwork,
    weights: &[f64],
    target: NodeId,
) -> (Vec<f64>, Vec<Option<EdgeId>>) {
    let n = net.num_nodes();
    let mut dist = vec![f64::INFINITY; n];
    let mut next = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[target] = 0.0;
    heap.push(Entry(0.0, target));
    while let Some(Entry(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &e in net.in_edges(v) {
            let u = net.edge(e).head;
            let nd = d + weights[e];
            if nd < dist[u] {
                dist[u] = nd;
                next[u] = Some(e);
                heap.push(Entry(nd, u));
            }
        }
    }
    (dist, next)
}
