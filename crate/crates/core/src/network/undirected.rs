use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::network::{EdgeId, NodeId};

/// Undirected network with a resistance-like control parameter on each edge.
///
/// Each edge is stored once as `(a, b)`. The flow on that edge is reported as the
/// flow from `b` into `a`, so `x_ab = -x_ba`.
#[derive(Debug, Clone)]
pub struct UndirectedNetwork {
    num_nodes: usize,
    edges: Vec<(NodeId, NodeId)>,
    adjacency: Vec<Vec<(NodeId, EdgeId)>>,
    resources: Vec<f64>,
    reference: NodeId,
}

impl UndirectedNetwork {
    /// `resources` is given for non-reference nodes; the reference entry is
    /// overwritten with minus the total so that the system is balanced.
    pub fn new(
        num_nodes: usize,
        edges: Vec<(NodeId, NodeId)>,
        mut resources: Vec<f64>,
        reference: NodeId,
    ) -> Result<Self> {
        if resources.len() != num_nodes {
            return Err(Error::Validation("resource vector length mismatch".into()));
        }
        if reference >= num_nodes {
            return Err(Error::Validation(format!("reference {reference} is not a node")));
        }
        let mut adjacency = vec![Vec::new(); num_nodes];
        for (e, &(a, b)) in edges.iter().enumerate() {
            if a >= num_nodes || b >= num_nodes || a == b {
                return Err(Error::Validation(format!("edge {e} is invalid")));
            }
            adjacency[a].push((b, e));
            adjacency[b].push((a, e));
        }
        resources[reference] = 0.0;
        let total: f64 = resources.iter().sum();
        resources[reference] = -total;
        let net = Self { num_nodes, edges, adjacency, resources, reference };
        if !net.is_connected() {
            return Err(Error::Validation("undirected network is not connected".into()));
        }
        Ok(net)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> (NodeId, NodeId) {
        self.edges[e]
    }

    pub fn neighbors(&self, i: NodeId) -> &[(NodeId, EdgeId)] {
        &self.adjacency[i]
    }

    pub fn resources(&self) -> &[f64] {
        &self.resources
    }

    pub fn reference(&self) -> NodeId {
        self.reference
    }

    pub fn is_connected(&self) -> bool {
        if self.num_nodes == 0 {
            return true;
        }
        let mut seen = vec![false; self.num_nodes];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &(u, _) in &self.adjacency[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    queue.push_back(u);
                }
            }
        }
        count == self.num_nodes
    }

    /// Same as `is_connected` but ignoring the edges flagged in `removed`.
    pub fn is_connected_without(&self, removed: &[bool]) -> bool {
        let mut seen = vec![false; self.num_nodes];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &(u, e) in &self.adjacency[v] {
                if !removed[e] && !seen[u] {
                    seen[u] = true;
                    count += 1;
                    queue.push_back(u);
                }
            }
        }
        count == self.num_nodes
    }

    /// Recursively removes degree-one nodes, moving their resource (and the
    /// reference role) to the neighbour.
    pub fn trim_leaves(&self) -> Result<Self> {
        let n = self.num_nodes;
        let mut alive = vec![true; n];
        let mut edge_alive = vec![true; self.edges.len()];
        let mut resources = self.resources.clone();
        let mut reference = self.reference;
        loop {
            let mut changed = false;
            for i in 0..n {
                if !alive[i] {
                    continue;
                }
                let live: Vec<(NodeId, EdgeId)> =
                    self.adjacency[i].iter().copied().filter(|&(_, e)| edge_alive[e]).collect();
                if live.len() == 1 {
                    let (j, e) = live[0];
                    resources[j] += resources[i];
                    resources[i] = 0.0;
                    if reference == i {
                        reference = j;
                    }
                    alive[i] = false;
                    edge_alive[e] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let kept: Vec<NodeId> = (0..n).filter(|&i| alive[i]).collect();
        if kept.len() <= 1 {
            return Err(Error::TriviallySolved);
        }
        let mut new_id = vec![usize::MAX; n];
        for (k, &i) in kept.iter().enumerate() {
            new_id[i] = k;
        }
        let edges = self
            .edges
            .iter()
            .enumerate()
            .filter(|(e, _)| edge_alive[*e])
            .map(|(_, &(a, b))| (new_id[a], new_id[b]))
            .collect();
        let res = kept.iter().map(|&i| resources[i]).collect();
        Self::new(kept.len(), edges, res, new_id[reference])
    }
}
