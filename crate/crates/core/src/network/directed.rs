use std::collections::VecDeque;

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type EdgeId = usize;

/// A directed edge. `head` is the node the edge leaves, `tail` the node it enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectedEdge {
    pub head: NodeId,
    pub tail: NodeId,
}

/// Directed routing network with per-node resources and one or more destinations.
///
/// Node and edge ids are dense. Parallel edges are allowed, self-loops are not.
#[derive(Debug, Clone)]
pub struct DirectedNetwork {
    num_nodes: usize,
    edges: Vec<DirectedEdge>,
    in_adj: Vec<Vec<EdgeId>>,
    out_adj: Vec<Vec<EdgeId>>,
    resources: Vec<f64>,
    destinations: Vec<NodeId>,
}

impl DirectedNetwork {
    pub fn new(
        num_nodes: usize,
        edges: Vec<DirectedEdge>,
        resources: Vec<f64>,
        destinations: Vec<NodeId>,
    ) -> Result<Self> {
        if resources.len() != num_nodes {
            return Err(Error::Validation(format!(
                "{} resources given for {} nodes",
                resources.len(),
                num_nodes
            )));
        }
        if destinations.is_empty() {
            return Err(Error::Validation("no destination".into()));
        }
        let mut in_adj = vec![Vec::new(); num_nodes];
        let mut out_adj = vec![Vec::new(); num_nodes];
        for (e, edge) in edges.iter().enumerate() {
            if edge.head >= num_nodes || edge.tail >= num_nodes {
                return Err(Error::Validation(format!("edge {e} references a missing node")));
            }
            if edge.head == edge.tail {
                return Err(Error::Validation(format!("edge {e} is a self-loop")));
            }
            out_adj[edge.head].push(e);
            in_adj[edge.tail].push(e);
        }
        for &d in &destinations {
            if d >= num_nodes {
                return Err(Error::Validation(format!("destination {d} is not a node")));
            }
        }
        for (i, &l) in resources.iter().enumerate() {
            if !l.is_finite() || (l < 0.0 && !destinations.contains(&i)) {
                return Err(Error::Validation(format!("node {i} has invalid resource {l}")));
            }
        }
        Ok(Self { num_nodes, edges, in_adj, out_adj, resources, destinations })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[DirectedEdge] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> DirectedEdge {
        self.edges[e]
    }

    pub fn in_edges(&self, i: NodeId) -> &[EdgeId] {
        &self.in_adj[i]
    }

    pub fn out_edges(&self, i: NodeId) -> &[EdgeId] {
        &self.out_adj[i]
    }

    /// All edges touching `i`, incoming first.
    pub fn incident_edges(&self, i: NodeId) -> impl Iterator<Item = EdgeId> + '_ {
        self.in_adj[i].iter().chain(self.out_adj[i].iter()).copied()
    }

    pub fn degree(&self, i: NodeId) -> usize {
        self.in_adj[i].len() + self.out_adj[i].len()
    }

    /// Incidence operator: +1 if `e` enters `i`, -1 if it leaves `i`, 0 otherwise.
    pub fn incidence(&self, i: NodeId, e: EdgeId) -> i8 {
        let edge = self.edges[e];
        if edge.tail == i {
            1
        } else if edge.head == i {
            -1
        } else {
            0
        }
    }

    pub fn other_end(&self, e: EdgeId, i: NodeId) -> NodeId {
        let edge = self.edges[e];
        if edge.head == i {
            edge.tail
        } else {
            edge.head
        }
    }

    pub fn resources(&self) -> &[f64] {
        &self.resources
    }

    pub fn destinations(&self) -> &[NodeId] {
        &self.destinations
    }

    /// The first destination; single-class solvers use this one.
    pub fn destination(&self) -> NodeId {
        self.destinations[0]
    }

    pub fn is_destination(&self, i: NodeId) -> bool {
        self.destinations.contains(&i)
    }

    pub fn total_resource(&self) -> f64 {
        self.resources
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.is_destination(*i))
            .map(|(_, l)| l)
            .sum()
    }

    pub fn with_resources(&self, resources: Vec<f64>) -> Result<Self> {
        Self::new(self.num_nodes, self.edges.clone(), resources, self.destinations.clone())
    }

    pub fn with_destinations(&self, destinations: Vec<NodeId>) -> Result<Self> {
        Self::new(self.num_nodes, self.edges.clone(), self.resources.clone(), destinations)
    }

    /// Nodes that have a directed path to `target` (reverse BFS).
    pub fn reaches(&self, target: NodeId) -> Vec<bool> {
        let mut seen = vec![false; self.num_nodes];
        let mut queue = VecDeque::from([target]);
        seen[target] = true;
        while let Some(v) = queue.pop_front() {
            for &e in &self.in_adj[v] {
                let u = self.edges[e].head;
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        seen
    }

    /// Every node can reach every destination.
    pub fn is_strongly_usable(&self) -> bool {
        self.destinations.iter().all(|&d| self.reaches(d).iter().all(|&r| r))
    }

    pub fn is_weakly_connected(&self) -> bool {
        if self.num_nodes == 0 {
            return true;
        }
        let mut seen = vec![false; self.num_nodes];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for e in self.incident_edges(v) {
                let u = self.other_end(e, v);
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    queue.push_back(u);
                }
            }
        }
        count == self.num_nodes
    }
}

/// Result of leaf trimming, with maps back to the original ids.
#[derive(Debug, Clone)]
pub struct Reduced {
    pub network: DirectedNetwork,
    /// `kept_nodes[new] = old`
    pub kept_nodes: Vec<NodeId>,
    /// `kept_edges[new] = old`
    pub kept_edges: Vec<EdgeId>,
}

/// Recursively removes leaf nodes.
///
/// A source leaf (one outgoing edge, nothing incoming) hands its resource to its
/// neighbour. A destination with a single incoming edge and no outgoing edge moves
/// to its neighbour. A resource-free sink is dropped.
pub fn preprocess(net: &DirectedNetwork) -> Result<Reduced> {
    if !net.is_weakly_connected() {
        return Err(Error::Validation("network is not connected".into()));
    }
    let n = net.num_nodes();
    let mut node_alive = vec![true; n];
    let mut edge_alive = vec![true; net.num_edges()];
    let mut resources = net.resources.clone();
    let mut destinations = net.destinations.clone();
    let live_in = |i: NodeId, edge_alive: &[bool]| -> Vec<EdgeId> {
        net.in_edges(i).iter().copied().filter(|&e| edge_alive[e]).collect()
    };
    let live_out = |i: NodeId, edge_alive: &[bool]| -> Vec<EdgeId> {
        net.out_edges(i).iter().copied().filter(|&e| edge_alive[e]).collect()
    };
    loop {
        let mut changed = false;
        for i in 0..n {
            if !node_alive[i] {
                continue;
            }
            let ins = live_in(i, &edge_alive);
            let outs = live_out(i, &edge_alive);
            let is_dest = destinations.contains(&i);
            match (ins.len(), outs.len()) {
                (0, 0) => {
                    if node_alive.iter().filter(|&&a| a).count() == 1 {
                        return Err(Error::TriviallySolved);
                    }
                    if is_dest {
                        return Err(Error::Validation(format!("destination {i} is isolated")));
                    }
                    if resources[i] > 0.0 {
                        return Err(Error::Infeasible(format!("node {i} is isolated with resource")));
                    }
                    node_alive[i] = false;
                    changed = true;
                }
                (0, 1) if !is_dest => {
                    let e = outs[0];
                    let to = net.edge(e).tail;
                    resources[to] += resources[i];
                    resources[i] = 0.0;
                    edge_alive[e] = false;
                    node_alive[i] = false;
                    changed = true;
                }
                (0, 1) => {
                    return Err(Error::Infeasible(format!("destination {i} has no incoming edge")));
                }
                (1, 0) if is_dest => {
                    let e = ins[0];
                    let from = net.edge(e).head;
                    resources[from] += resources[i];
                    resources[i] = 0.0;
                    for d in destinations.iter_mut() {
                        if *d == i {
                            *d = from;
                        }
                    }
                    let mut seen = Vec::new();
                    destinations.retain(|d| {
                        let fresh = !seen.contains(d);
                        seen.push(*d);
                        fresh
                    });
                    edge_alive[e] = false;
                    node_alive[i] = false;
                    changed = true;
                }
                (1, 0) => {
                    if resources[i] > 0.0 {
                        return Err(Error::Infeasible(format!("node {i} is a sink with resource")));
                    }
                    edge_alive[ins[0]] = false;
                    node_alive[i] = false;
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            break;
        }
    }
    let kept_nodes: Vec<NodeId> = (0..n).filter(|&i| node_alive[i]).collect();
    if kept_nodes.len() <= 1 {
        return Err(Error::TriviallySolved);
    }
    let mut new_id = vec![usize::MAX; n];
    for (k, &i) in kept_nodes.iter().enumerate() {
        new_id[i] = k;
    }
    let kept_edges: Vec<EdgeId> = (0..net.num_edges()).filter(|&e| edge_alive[e]).collect();
    let edges = kept_edges
        .iter()
        .map(|&e| {
            let edge = net.edge(e);
            DirectedEdge { head: new_id[edge.head], tail: new_id[edge.tail] }
        })
        .collect();
    let res = kept_nodes.iter().map(|&i| resources[i]).collect();
    let dests = destinations.iter().map(|&d| new_id[d]).collect();
    let network = DirectedNetwork::new(kept_nodes.len(), edges, res, dests)?;
    Ok(Reduced { network, kept_nodes, kept_edges })
}
