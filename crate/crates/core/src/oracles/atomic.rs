//! Exact references for integer-flow routing games.

use std::collections::BTreeSet;

use crate::cost_model::CostModel;
use crate::error::{Error, Result};
use crate::network::{DirectedNetwork, EdgeId, NodeId};

pub const MAX_USERS: i64 = 8;
pub const MAX_EDGES: usize = 14;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    pub min_potential: f64,
    /// Every flow vector attaining the minimum (within 1e-9), sorted.
    pub argmin: Vec<Vec<i64>>,
    pub evaluated: usize,
}

fn simple_paths(net: &DirectedNetwork, from: NodeId, to: NodeId) -> Vec<Vec<EdgeId>> {
    fn dfs(
        net: &DirectedNetwork,
        v: NodeId,
        to: NodeId,
        on: &mut Vec<bool>,
        path: &mut Vec<EdgeId>,
        out: &mut Vec<Vec<EdgeId>>,
    ) {
        if v == to {
            out.push(path.clone());
            return;
        }
        for &e in net.out_edges(v) {
            let w = net.edge(e).tail;
            if !on[w] {
                on[w] = true;
                path.push(e);
                dfs(net, w, to, on, path, out);
                path.pop();
                on[w] = false;
            }
        }
    }
    let mut on = vec![false; net.num_nodes()];
    on[from] = true;
    let mut out = Vec::new();
    dfs(net, from, to, &mut on, &mut Vec::new(), &mut out);
    out
}

/// Enumerates every way the users can pick simple paths and returns the potential
/// minimizers. Flows containing cycles are never better and are not listed.
pub fn atomic_bruteforce(
    net: &DirectedNetwork,
    cost: &CostModel,
    tolls: &[f64],
    users: &[i64],
    destination: NodeId,
) -> Result<BruteForce> {
    let total: i64 = users.iter().sum();
    if total > MAX_USERS || net.num_edges() > MAX_EDGES {
        return Err(Error::SizeCap(format!(
            "{total} users on {} edges (caps {MAX_USERS} / {MAX_EDGES})",
            net.num_edges()
        )));
    }
    if users.iter().any(|&u| u < 0) {
        return Err(Error::Domain("negative user count".into()));
    }
    // Per source: every multiset of its paths, as edge-flow contributions.
    let mut per_source: Vec<Vec<Vec<i64>>> = Vec::new();
    for (i, &k) in users.iter().enumerate() {
        if k == 0 || i == destination {
            continue;
        }
        let paths = simple_paths(net, i, destination);
        if paths.is_empty() {
            return Err(Error::Infeasible(format!("node {i} has no path to {destination}")));
        }
        let mut options = BTreeSet::new();
        let mut counts = vec![0i64; paths.len()];
        multisets(&paths, k, 0, &mut counts, net.num_edges(), &mut options);
        per_source.push(options.into_iter().collect());
    }
    let mut flows = BTreeSet::new();
    flows.insert(vec![0i64; net.num_edges()]);
    for options in &per_source {
        let mut next = BTreeSet::new();
        for f in &flows {
            for o in options {
                next.insert(f.iter().zip(o).map(|(a, b)| a + b).collect::<Vec<i64>>());
            }
        }
        flows = next;
    }
    let mut best = f64::INFINITY;
    let scored: Vec<(f64, Vec<i64>)> = flows
        .into_iter()
        .map(|f| {
            let p = cost.atomic_potential(&f, tolls).expect("non-negative flows");
            best = best.min(p);
            (p, f)
        })
        .collect();
    let evaluated = scored.len();
    let argmin = scored.into_iter().filter(|(p, _)| *p <= best + 1e-9).map(|(_, f)| f).collect();
    Ok(BruteForce { min_potential: best, argmin, evaluated })
}

fn multisets(
    paths: &[Vec<EdgeId>],
    left: i64,
    start: usize,
    counts: &mut Vec<i64>,
    m: usize,
    out: &mut BTreeSet<Vec<i64>>,
) {
    if left == 0 {
        let mut f = vec![0i64; m];
        for (p, &c) in paths.iter().zip(counts.iter()) {
            for &e in p {
                f[e] += c;
            }
        }
        out.insert(f);
        return;
    }
    for k in start..paths.len() {
        counts[k] += 1;
        multisets(paths, left - 1, k, counts, m, out);
        counts[k] -= 1;
    }
}

/// Integer flow minimizing a separable convex objective given by its per-unit
/// increments `inc(e, x) = f_e(x + 1) - f_e(x)`, by successive shortest paths with
/// unit augmentations.
fn min_convex_integer_flow(
    net: &DirectedNetwork,
    users: &[i64],
    destination: NodeId,
    inc: impl Fn(EdgeId, i64) -> f64,
) -> Result<Vec<i64>> {
    let n = net.num_nodes();
    let mut supply: Vec<i64> = users.to_vec();
    supply[destination] = 0;
    let mut x = vec![0i64; net.num_edges()];
    let total: i64 = supply.iter().sum();
    for _ in 0..total {
        // Bellman-Ford from all nodes with remaining supply.
        let mut dist = vec![f64::INFINITY; n];
        let mut pred: Vec<Option<(EdgeId, bool)>> = vec![None; n];
        for i in 0..n {
            if supply[i] > 0 {
                dist[i] = 0.0;
            }
        }
        for _ in 0..n {
            let mut changed = false;
            for (e, edge) in net.edges().iter().enumerate() {
                let c = inc(e, x[e]);
                if dist[edge.head] + c < dist[edge.tail] - 1e-12 {
                    dist[edge.tail] = dist[edge.head] + c;
                    pred[edge.tail] = Some((e, true));
                    changed = true;
                }
                if x[e] > 0 {
                    let c = -inc(e, x[e] - 1);
                    if dist[edge.tail] + c < dist[edge.head] - 1e-12 {
                        dist[edge.head] = dist[edge.tail] + c;
                        pred[edge.head] = Some((e, false));
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if !dist[destination].is_finite() {
            return Err(Error::Infeasible("destination unreachable from a loaded node".into()));
        }
        let mut v = destination;
        let mut guard = 0;
        while let Some((e, forward)) = pred[v] {
            if forward {
                x[e] += 1;
                v = net.edge(e).head;
            } else {
                x[e] -= 1;
                v = net.edge(e).tail;
            }
            guard += 1;
            if guard > net.num_edges() + n || (supply[v] > 0 && dist[v] == 0.0) {
                break;
            }
        }
        if supply[v] <= 0 {
            return Err(Error::Consistency("augmenting path does not start at a supply node".into()));
        }
        supply[v] -= 1;
    }
    Ok(x)
}

/// Exact integer potential minimizer (a pure Nash equilibrium) under tolls.
pub fn atomic_potential_minimizer(
    net: &DirectedNetwork,
    cost: &CostModel,
    tolls: &[f64],
    users: &[i64],
    destination: NodeId,
) -> Result<Vec<i64>> {
    min_convex_integer_flow(net, users, destination, |e, x| {
        cost.atomic_phi(e, x + 1, tolls[e]) - cost.atomic_phi(e, x, tolls[e])
    })
}

/// Exact integer social-cost minimizer.
pub fn atomic_social_optimum(
    net: &DirectedNetwork,
    cost: &CostModel,
    users: &[i64],
    destination: NodeId,
) -> Result<Vec<i64>> {
    min_convex_integer_flow(net, users, destination, |e, x| {
        cost.atomic_sigma(e, x + 1) - cost.atomic_sigma(e, x)
    })
}
