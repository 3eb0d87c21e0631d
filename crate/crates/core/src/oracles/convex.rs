//! Centralized convex solver for separable quadratic routing objectives.
//!
//! Each class is solved on its dual: node potentials `u` with `u_D = 0` and
//! `x_e = max(u_head - u_tail - lin_e, 0) / quad_e`. A few Frank-Wolfe steps give
//! the starting potentials, then a damped semismooth Newton method drives the
//! conservation residual to round-off. Edges with zero curvature are handled by
//! proximal-point outer iterations. Classes are coupled by block-coordinate passes.

use nalgebra::{DMatrix, DVector};

use crate::cost_model::CostModel;
use crate::error::{Error, Result};
use crate::network::paths::distances_to;
use crate::network::{DirectedNetwork, TrafficClass};

const FW_ITERS: usize = 40;
const NEWTON_ITERS: usize = 500;
const PROX_ITERS: usize = 20_000;
const BLOCK_PASSES: usize = 20_000;
const CERT_FEAS: f64 = 1e-10;
const CERT_WARDROP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    /// Total edge flows.
    pub flows: Vec<f64>,
    /// Flows per class, same order as the input classes.
    pub class_flows: Vec<Vec<f64>>,
    /// Potential for `convex_equilibrium`, social cost for `social_optimum`.
    pub objective: f64,
    pub iterations: usize,
    pub feasibility_residual: f64,
    pub wardrop_residual: f64,
    /// Node potentials per class (cost to reach the class destination).
    pub potentials: Vec<Vec<f64>>,
}

/// Wardrop equilibrium: minimizes the potential `Σ φ_e` under tolls.
pub fn convex_equilibrium(
    net: &DirectedNetwork,
    cost: &CostModel,
    tolls: &[f64],
    classes: &[TrafficClass],
) -> Result<OracleReport> {
    convex_equilibrium_warm(net, cost, tolls, classes, None)
}

/// As `convex_equilibrium`, starting from the potentials of an earlier report.
pub fn convex_equilibrium_warm(
    net: &DirectedNetwork,
    cost: &CostModel,
    tolls: &[f64],
    classes: &[TrafficClass],
    warm: Option<&OracleReport>,
) -> Result<OracleReport> {
    let lin: Vec<f64> = cost
        .latencies
        .iter()
        .enumerate()
        .map(|(e, l)| l.constant + tolls.get(e).copied().unwrap_or(0.0))
        .collect();
    let quad: Vec<f64> = cost.latencies.iter().map(|l| l.slope).collect();
    let mut rep = solve(net, &lin, &quad, classes, warm)?;
    rep.objective = cost.potential(&rep.flows, tolls)?;
    Ok(rep)
}

/// Social optimum: minimizes `Σ x_e ℓ_e(x_e)`.
pub fn social_optimum(net: &DirectedNetwork, cost: &CostModel, classes: &[TrafficClass]) -> Result<OracleReport> {
    let lin: Vec<f64> = cost.latencies.iter().map(|l| l.constant).collect();
    let quad: Vec<f64> = cost.latencies.iter().map(|l| 2.0 * l.slope).collect();
    let mut rep = solve(net, &lin, &quad, classes, None)?;
    rep.objective = cost.social_cost(&rep.flows)?;
    Ok(rep)
}

fn solve(
    net: &DirectedNetwork,
    lin: &[f64],
    quad: &[f64],
    classes: &[TrafficClass],
    warm: Option<&OracleReport>,
) -> Result<OracleReport> {
    let m = net.num_edges();
    if lin.len() != m || quad.len() != m {
        return Err(Error::Validation("cost model does not match the network".into()));
    }
    for c in classes {
        if c.resources.len() != net.num_nodes() {
            return Err(Error::Validation("class resources do not match the network".into()));
        }
        let reach = net.reaches(c.destination);
        if let Some(i) = (0..net.num_nodes()).find(|&i| !reach[i]) {
            return Err(Error::Infeasible(format!("node {i} cannot reach destination {}", c.destination)));
        }
    }
    let k = classes.len();
    let mut xs: Vec<Vec<f64>> = vec![vec![0.0; m]; k];
    let mut us: Vec<Option<Vec<f64>>> = match warm {
        Some(w) if w.potentials.len() == k => w.potentials.iter().cloned().map(Some).collect(),
        _ => vec![None; k],
    };
    let mut total = vec![0.0; m];
    let mut iterations = 0;
    let scale = 1.0 + classes.iter().map(TrafficClass::total).sum::<f64>();
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    for pass in 0..BLOCK_PASSES {
        let mut change = 0.0f64;
        for a in 0..k {
            let shifted: Vec<f64> =
                (0..m).map(|e| lin[e] + quad[e] * (total[e] - xs[a][e])).collect();
            let (x, u, it) = solve_class(net, &shifted, quad, &classes[a], us[a].take())?;
            iterations += it;
            for e in 0..m {
                change = change.max((x[e] - xs[a][e]).abs());
                total[e] += x[e] - xs[a][e];
            }
            xs[a] = x;
            us[a] = Some(u);
        }
        if k == 1 || (pass > 0 && change <= 1e-14 * scale) {
            break;
        }
        // Round-off floor: stop once the change no longer shrinks and let
        // certification judge the result.
        if change < 0.5 * best {
            best = change;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 50 && change <= 1e-10 * scale {
                break;
            }
        }
        if pass + 1 == BLOCK_PASSES {
            return Err(Error::Uncertified(format!("block passes did not settle (change {change:e})")));
        }
    }
    total = (0..m).map(|e| xs.iter().map(|x| x[e]).sum()).collect();
    let (feas, ward) = certify(net, lin, quad, classes, &xs, &total);
    if feas > CERT_FEAS || ward > CERT_WARDROP {
        return Err(Error::Uncertified(format!(
            "feasibility residual {feas:e}, Wardrop residual {ward:e}"
        )));
    }
    Ok(OracleReport {
        flows: total,
        class_flows: xs,
        objective: 0.0,
        iterations,
        feasibility_residual: feas,
        wardrop_residual: ward,
        potentials: us.into_iter().map(|u| u.unwrap_or_default()).collect(),
    })
}

/// Conservation residual and worst reduced-cost violation under marginal weights
/// `lin + quad·x`.
fn certify(
    net: &DirectedNetwork,
    lin: &[f64],
    quad: &[f64],
    classes: &[TrafficClass],
    xs: &[Vec<f64>],
    total: &[f64],
) -> (f64, f64) {
    let weights: Vec<f64> = (0..net.num_edges()).map(|e| lin[e] + quad[e] * total[e]).collect();
    let mut feas = 0.0f64;
    let mut ward = 0.0f64;
    for (c, x) in classes.iter().zip(xs) {
        for &v in x {
            feas = feas.max(-v);
        }
        for (i, r) in residual(net, c, x).into_iter().enumerate() {
            if i != c.destination {
                feas = feas.max(r.abs());
            }
        }
        let (d, _) = distances_to(net, &weights, c.destination);
        for (e, edge) in net.edges().iter().enumerate() {
            if x[e] > 1e-12 {
                ward = ward.max(weights[e] + d[edge.tail] - d[edge.head]);
            }
        }
    }
    (feas, ward)
}

fn residual(net: &DirectedNetwork, class: &TrafficClass, x: &[f64]) -> Vec<f64> {
    let mut r = class.resources.clone();
    for (e, edge) in net.edges().iter().enumerate() {
        r[edge.tail] += x[e];
        r[edge.head] -= x[e];
    }
    r
}

fn solve_class(
    net: &DirectedNetwork,
    lin: &[f64],
    quad: &[f64],
    class: &TrafficClass,
    warm_u: Option<Vec<f64>>,
) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let flat = quad.iter().any(|&q| q <= 1e-14);
    if !flat {
        let u0 = match warm_u {
            Some(u) => u,
            None => {
                let x = frank_wolfe(net, lin, quad, class);
                start_potentials(net, lin, quad, &x, class)
            }
        };
        return newton(net, lin, quad, class, u0);
    }
    // Proximal point: each subproblem adds rho/2 |x - x_k|^2.
    let rho = {
        let pos: Vec<f64> = quad.iter().copied().filter(|&q| q > 1e-14).collect();
        if pos.is_empty() { 1.0 } else { pos.iter().sum::<f64>() / pos.len() as f64 }
    };
    let qk: Vec<f64> = quad.iter().map(|&q| q + rho).collect();
    let mut x = frank_wolfe(net, lin, quad, class);
    let mut u: Option<Vec<f64>> = None;
    let mut iters = 0;
    let scale = 1.0 + class.total();
    for _ in 0..PROX_ITERS {
        let lk: Vec<f64> = (0..lin.len()).map(|e| lin[e] - rho * x[e]).collect();
        let u0 = u.take().unwrap_or_else(|| start_potentials(net, &lk, &qk, &x, class));
        let (nx, nu, it) = newton(net, &lk, &qk, class, u0)?;
        iters += it;
        let change = nx.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = nx;
        u = Some(nu);
        if change <= 1e-15 * scale {
            break;
        }
    }
    // Potentials of the original problem from shortest paths at the final flows.
    let w: Vec<f64> = (0..lin.len()).map(|e| lin[e] + quad[e] * x[e]).collect();
    let (d, _) = distances_to(net, &w, class.destination);
    Ok((x, d, iters))
}

/// All-or-nothing assignment of one class on shortest paths under `weights`.
fn all_or_nothing(net: &DirectedNetwork, weights: &[f64], class: &TrafficClass) -> Vec<f64> {
    let (dist, next) = distances_to(net, weights, class.destination);
    let mut order: Vec<usize> = (0..net.num_nodes()).collect();
    order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]));
    let mut load = class.resources.clone();
    let mut y = vec![0.0; net.num_edges()];
    for i in order {
        if let Some(e) = next[i] {
            y[e] += load[i];
            load[net.edge(e).tail] += load[i];
        }
    }
    y
}

/// Conditional-gradient warm start with exact line search.
fn frank_wolfe(net: &DirectedNetwork, lin: &[f64], quad: &[f64], class: &TrafficClass) -> Vec<f64> {
    let mut x = all_or_nothing(net, lin, class);
    for k in 0..FW_ITERS {
        let w: Vec<f64> = (0..x.len()).map(|e| lin[e] + quad[e] * x[e]).collect();
        let y = all_or_nothing(net, &w, class);
        let num: f64 = (0..x.len()).map(|e| w[e] * (y[e] - x[e])).sum();
        if num >= -1e-14 {
            break;
        }
        let den: f64 = (0..x.len()).map(|e| quad[e] * (y[e] - x[e]).powi(2)).sum();
        let step = if den > 0.0 { (-num / den).min(1.0) } else { 2.0 / (k as f64 + 2.0) };
        for e in 0..x.len() {
            x[e] += step * (y[e] - x[e]);
        }
    }
    x
}

fn start_potentials(net: &DirectedNetwork, lin: &[f64], quad: &[f64], x: &[f64], class: &TrafficClass) -> Vec<f64> {
    let w: Vec<f64> = (0..lin.len()).map(|e| (lin[e] + quad[e] * x[e]).max(0.0)).collect();
    distances_to(net, &w, class.destination).0
}

fn dual_flows(net: &DirectedNetwork, lin: &[f64], quad: &[f64], u: &[f64]) -> Vec<f64> {
    net.edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| ((u[edge.head] - u[edge.tail] - lin[e]).max(0.0)) / quad[e])
        .collect()
}

fn dual_value(net: &DirectedNetwork, lin: &[f64], quad: &[f64], class: &TrafficClass, u: &[f64]) -> f64 {
    let mut d: f64 = class.resources.iter().zip(u).map(|(l, v)| l * v).sum();
    for (e, edge) in net.edges().iter().enumerate() {
        let g = (u[edge.head] - u[edge.tail] - lin[e]).max(0.0);
        d -= g * g / (2.0 * quad[e]);
    }
    d
}

fn newton(
    net: &DirectedNetwork,
    lin: &[f64],
    quad: &[f64],
    class: &TrafficClass,
    mut u: Vec<f64>,
) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let n = net.num_nodes();
    let dest = class.destination;
    let base = u[dest];
    for v in u.iter_mut() {
        *v -= base;
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Infeasible("unreachable destination".into()));
    }
    // Map nodes other than the destination to matrix rows.
    let row: Vec<Option<usize>> = {
        let mut k = 0;
        (0..n)
            .map(|i| {
                if i == dest {
                    None
                } else {
                    k += 1;
                    Some(k - 1)
                }
            })
            .collect()
    };
    let dim = n - 1;
    let scale = 1.0 + class.total();
    let norm = |r: &[f64]| (0..n).filter(|&i| i != dest).map(|i| r[i].abs()).fold(0.0, f64::max);
    let mut x = dual_flows(net, lin, quad, &u);
    let mut r = residual(net, class, &x);
    let mut iters = 0;
    while iters < NEWTON_ITERS {
        let rn = norm(&r);
        if rn <= 1e-13 * scale {
            break;
        }
        iters += 1;
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        for (e, edge) in net.edges().iter().enumerate() {
            if u[edge.head] - u[edge.tail] - lin[e] > 0.0 {
                let g = 1.0 / quad[e];
                let (a, b) = (row[edge.head], row[edge.tail]);
                if let Some(a) = a {
                    h[(a, a)] += g;
                }
                if let Some(b) = b {
                    h[(b, b)] += g;
                }
                if let (Some(a), Some(b)) = (a, b) {
                    h[(a, b)] -= g;
                    h[(b, a)] -= g;
                }
            }
        }
        let diag_max = (0..dim).map(|k| h[(k, k)]).fold(0.0, f64::max).max(1.0);
        for k in 0..dim {
            h[(k, k)] += 1e-11 * diag_max;
        }
        let rhs = DVector::from_iterator(dim, (0..n).filter(|&i| i != dest).map(|i| r[i]));
        let chol = h.cholesky().ok_or_else(|| Error::Singular("dual Newton system".into()))?;
        let step = chol.solve(&rhs);
        let mut delta = vec![0.0; n];
        for i in 0..n {
            if let Some(k) = row[i] {
                delta[i] = step[k];
            }
        }
        let d0 = dual_value(net, lin, quad, class, &u);
        let slope: f64 = (0..n).map(|i| r[i] * delta[i]).sum();
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = (0..n).map(|i| u[i] + t * delta[i]).collect();
            let tx = dual_flows(net, lin, quad, &trial);
            let tr = residual(net, class, &tx);
            let ok = norm(&tr) <= (1.0 - 1e-4 * t) * rn
                || dual_value(net, lin, quad, class, &trial) >= d0 + 1e-4 * t * slope;
            if ok || t < 1e-12 {
                u = trial;
                x = tx;
                r = tr;
                break;
            }
            t *= 0.5;
        }
    }
    Ok((x, u, iters))
}
