//! Small reference instances with known answers, and the Sioux Falls network.

use rand::seq::SliceRandom;

use crate::cost_model::{AffineLatency, CostModel};
use crate::error::Result;
use crate::network::{parse_network, DirectedEdge, DirectedNetwork, NetworkFile, NodeId, UndirectedNetwork};
use crate::rng::fork;

const SIOUX_FALLS: &str = include_str!("../data/siouxfalls.txt");

/// Sensitivity used with the shipped Sioux Falls capacities.
pub const SIOUX_FALLS_SENSITIVITY: f64 = 1.0;

fn e(head: usize, tail: usize) -> DirectedEdge {
    DirectedEdge { head, tail }
}

/// Two routes from node 0 to node 3. Route 0→1→3 has latency 1 on its first edge,
/// route 0→2→3 has latency x on its first edge; second edges are free. One unit of
/// demand. Edge order: 0→1, 1→3, 0→2, 2→3.
pub fn pigou_diamond() -> (DirectedNetwork, CostModel) {
    let net = DirectedNetwork::new(
        4,
        vec![e(0, 1), e(1, 3), e(0, 2), e(2, 3)],
        vec![1.0, 0.0, 0.0, 0.0],
        vec![3],
    )
    .expect("valid fixture");
    let cost = CostModel::new(vec![
        AffineLatency { constant: 1.0, slope: 0.0 },
        AffineLatency { constant: 0.0, slope: 0.0 },
        AffineLatency { constant: 0.0, slope: 1.0 },
        AffineLatency { constant: 0.0, slope: 0.0 },
    ]);
    (net, cost)
}

/// Same layout as `pigou_diamond` with latency x on every edge and `demand` units.
pub fn symmetric_diamond(demand: f64) -> (DirectedNetwork, CostModel) {
    let net = DirectedNetwork::new(
        4,
        vec![e(0, 1), e(1, 3), e(0, 2), e(2, 3)],
        vec![demand, 0.0, 0.0, 0.0],
        vec![3],
    )
    .expect("valid fixture");
    let cost = CostModel::new(vec![AffineLatency { constant: 0.0, slope: 1.0 }; 4]);
    (net, cost)
}

/// Triangle with a unit source at node 0 and reference node 2. Edges (0,1), (1,2), (0,2).
pub fn triangle() -> UndirectedNetwork {
    UndirectedNetwork::new(3, vec![(0, 1), (1, 2), (0, 2)], vec![1.0, 0.0, 0.0], 2).expect("valid fixture")
}

/// Sioux Falls, 24 nodes and 76 links, destination node 9 (the tenth node).
pub fn sioux_falls() -> NetworkFile {
    parse_network(SIOUX_FALLS).expect("shipped file parses")
}

pub fn sioux_falls_costs() -> Result<CostModel> {
    CostModel::from_params(&sioux_falls().edge_params, SIOUX_FALLS_SENSITIVITY)
}

/// Integer users per node for the Sioux Falls atomic cases: three random sources
/// with `per_source` users each, routed to the central destination.
pub fn sioux_falls_users(per_source: i64, seed: u64) -> Vec<i64> {
    let file = sioux_falls();
    let dest = file.network.destination();
    let candidates: Vec<NodeId> = (0..file.network.num_nodes()).filter(|&i| i != dest).collect();
    let mut rng = fork(seed, "sioux-falls-sources");
    let mut users = vec![0i64; file.network.num_nodes()];
    for &s in candidates.choose_multiple(&mut rng, 3) {
        users[s] = per_source;
    }
    users
}
