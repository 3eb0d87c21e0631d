use std::collections::{HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::network::{preprocess, DirectedEdge, DirectedNetwork, NodeId, UndirectedNetwork};
use crate::rng::{fork, Rng};

const MAX_RETRIES: usize = 10_000;

/// Uniform-ish random simple `degree`-regular graph via the configuration model,
/// rejecting multigraphs and disconnected draws.
pub fn random_regular_edges(n: usize, degree: usize, rng: &mut Rng) -> Result<Vec<(NodeId, NodeId)>> {
    if degree < 3 {
        return Err(Error::InvalidArgument(format!("degree must be at least 3, got {degree}")));
    }
    if n <= degree {
        return Err(Error::InvalidArgument(format!("need more than {degree} nodes, got {n}")));
    }
    if (n * degree) % 2 != 0 {
        return Err(Error::InvalidArgument(format!("n*degree = {} is odd", n * degree)));
    }
    let mut stubs: Vec<NodeId> = (0..n).flat_map(|i| std::iter::repeat(i).take(degree)).collect();
    'attempt: for _ in 0..MAX_RETRIES {
        stubs.shuffle(rng);
        let mut seen = HashSet::with_capacity(stubs.len() / 2);
        let mut edges = Vec::with_capacity(stubs.len() / 2);
        for pair in stubs.chunks(2) {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if a == b || !seen.insert((a, b)) {
                continue 'attempt;
            }
            edges.push((a, b));
        }
        if connected(n, &edges) {
            return Ok(edges);
        }
    }
    Err(Error::Generation("no simple connected regular graph found".into()))
}

/// Open-boundary square lattice.
pub fn lattice_edges(side: usize) -> Vec<(NodeId, NodeId)> {
    let mut edges = Vec::with_capacity(2 * side * (side - 1));
    for r in 0..side {
        for c in 0..side {
            let i = r * side + c;
            if c + 1 < side {
                edges.push((i, i + 1));
            }
            if r + 1 < side {
                edges.push((i, i + side));
            }
        }
    }
    edges
}

/// Lattice where each edge is, with probability `p_rw`, rewired to a random shortcut.
pub fn small_world_edges(side: usize, p_rw: f64, rng: &mut Rng) -> Result<Vec<(NodeId, NodeId)>> {
    if side < 3 {
        return Err(Error::InvalidArgument(format!("side must be at least 3, got {side}")));
    }
    if !(0.0..=1.0).contains(&p_rw) {
        return Err(Error::InvalidArgument(format!("rewiring probability {p_rw} outside [0, 1]")));
    }
    let n = side * side;
    let base = lattice_edges(side);
    for _ in 0..MAX_RETRIES {
        let mut edges = base.clone();
        let mut present: HashSet<(NodeId, NodeId)> = edges.iter().copied().collect();
        for k in 0..edges.len() {
            if rng.gen::<f64>() >= p_rw {
                continue;
            }
            let (a, b) = edges[k];
            let keep = if rng.gen::<bool>() { a } else { b };
            let candidates: Vec<NodeId> = (0..n)
                .filter(|&c| c != keep && !present.contains(&(keep.min(c), keep.max(c))))
                .collect();
            if let Some(&c) = candidates.choose(rng) {
                present.remove(&(a, b));
                let new = (keep.min(c), keep.max(c));
                present.insert(new);
                edges[k] = new;
            }
        }
        if connected(n, &edges) {
            return Ok(edges);
        }
    }
    Err(Error::Generation("rewired lattice stayed disconnected".into()))
}

fn connected(n: usize, edges: &[(NodeId, NodeId)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                count += 1;
                queue.push_back(u);
            }
        }
    }
    count == n
}

/// Gives each undirected edge a random direction, then adds reverse edges until
/// every node can reach every destination.
pub fn orient_with_repair(
    n: usize,
    undirected: &[(NodeId, NodeId)],
    destinations: &[NodeId],
    rng: &mut Rng,
) -> Vec<DirectedEdge> {
    let mut edges: Vec<DirectedEdge> = undirected
        .iter()
        .map(|&(a, b)| {
            if rng.gen::<bool>() {
                DirectedEdge { head: a, tail: b }
            } else {
                DirectedEdge { head: b, tail: a }
            }
        })
        .collect();
    for &d in destinations {
        loop {
            let reach = reaches(n, &edges, d);
            // Edges pointing from a node that reaches d into one that does not.
            let mut fixable: Vec<usize> = (0..undirected.len())
                .filter(|&k| reach[edges[k].head] && !reach[edges[k].tail])
                .collect();
            if fixable.is_empty() {
                break;
            }
            fixable.shuffle(rng);
            let mut newly = HashSet::new();
            for k in fixable {
                let DirectedEdge { head, tail } = edges[k];
                if newly.insert(tail) {
                    edges.push(DirectedEdge { head: tail, tail: head });
                }
            }
        }
    }
    edges
}

fn reaches(n: usize, edges: &[DirectedEdge], target: NodeId) -> Vec<bool> {
    let mut rev = vec![Vec::new(); n];
    for e in edges {
        rev[e.tail].push(e.head);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([target]);
    seen[target] = true;
    while let Some(v) = queue.pop_front() {
        for &u in &rev[v] {
            if !seen[u] {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    seen
}

fn uniform_resources(n: usize, destinations: &[NodeId], rng: &mut Rng) -> Vec<f64> {
    (0..n)
        .map(|i| if destinations.contains(&i) { 0.0 } else { rng.gen::<f64>() })
        .collect()
}

/// Directed random regular graph with one random destination and U[0,1] resources.
pub fn generate_rrg(n: usize, degree: usize, seed: u64) -> Result<DirectedNetwork> {
    generate_rrg_multi(n, degree, 1, seed)
}

/// Directed random regular graph with `num_destinations` distinct random destinations.
pub fn generate_rrg_multi(
    n: usize,
    degree: usize,
    num_destinations: usize,
    seed: u64,
) -> Result<DirectedNetwork> {
    let mut rng = fork(seed, "network");
    let undirected = random_regular_edges(n, degree, &mut rng)?;
    if num_destinations == 0 || num_destinations > n {
        return Err(Error::InvalidArgument(format!("bad destination count {num_destinations}")));
    }
    let nodes: Vec<NodeId> = (0..n).collect();
    let destinations: Vec<NodeId> =
        nodes.choose_multiple(&mut rng, num_destinations).copied().collect();
    let edges = orient_with_repair(n, &undirected, &destinations, &mut rng);
    let resources = uniform_resources(n, &destinations, &mut rng);
    DirectedNetwork::new(n, edges, resources, destinations)
}

/// Directed rewired lattice, preprocessed so that it has no leaves.
pub fn generate_small_world(side: usize, p_rw: f64, seed: u64) -> Result<DirectedNetwork> {
    let mut rng = fork(seed, "network");
    let undirected = small_world_edges(side, p_rw, &mut rng)?;
    let n = side * side;
    let dest = rng.gen_range(0..n);
    let edges = orient_with_repair(n, &undirected, &[dest], &mut rng);
    let resources = uniform_resources(n, &[dest], &mut rng);
    let net = DirectedNetwork::new(n, edges, resources, vec![dest])?;
    Ok(preprocess(&net)?.network)
}

fn undirected_with_sources(
    n: usize,
    edges: Vec<(NodeId, NodeId)>,
    sources: usize,
    rng: &mut Rng,
) -> Result<UndirectedNetwork> {
    if sources == 0 || sources >= n {
        return Err(Error::InvalidArgument(format!("bad source count {sources}")));
    }
    let nodes: Vec<NodeId> = (0..n).collect();
    let picked: Vec<NodeId> = nodes.choose_multiple(rng, sources + 1).copied().collect();
    let reference = picked[0];
    let mut resources = vec![0.0; n];
    for &s in &picked[1..] {
        resources[s] = rng.gen::<f64>();
    }
    UndirectedNetwork::new(n, edges, resources, reference)?.trim_leaves()
}

/// Undirected random regular graph with `sources` random source nodes carrying
/// U[0,1] resources and one random reference node.
pub fn generate_rrg_undirected(n: usize, degree: usize, sources: usize, seed: u64) -> Result<UndirectedNetwork> {
    let mut rng = fork(seed, "network");
    let edges = random_regular_edges(n, degree, &mut rng)?;
    undirected_with_sources(n, edges, sources, &mut rng)
}

/// Undirected open square lattice with random sources and reference.
pub fn generate_lattice_undirected(side: usize, sources: usize, seed: u64) -> Result<UndirectedNetwork> {
    if side < 3 {
        return Err(Error::InvalidArgument(format!("side must be at least 3, got {side}")));
    }
    let mut rng = fork(seed, "network");
    undirected_with_sources(side * side, lattice_edges(side), sources, &mut rng)
}
