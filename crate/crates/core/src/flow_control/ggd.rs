use crate::error::Result;
use crate::network::UndirectedNetwork;
use crate::oracles::ReducedLaplacian;

use super::state::{hinge_slope, ControlState};

/// Exact flows at `control.r` and `∂O/∂r` for every edge, from one factorization
/// and one adjoint solve.
pub fn ggd_gradient(net: &UndirectedNetwork, control: &ControlState) -> Result<(Vec<f64>, Vec<f64>)> {
    let r = &control.r;
    let lap = ReducedLaplacian::new(net, r)?;
    let mu = lap.solve(net.resources());
    let flows: Vec<f64> = net.edges().iter().enumerate().map(|(e, &(a, b))| (mu[b] - mu[a]) / r[e]).collect();
    let mut rhs = vec![0.0; net.num_nodes()];
    let mut slope = vec![0.0; net.num_edges()];
    for (&t, &x0) in control.targets.iter().zip(&control.baseline) {
        let c = hinge_slope(flows[t], x0, control.theta);
        let (a, b) = net.edge(t);
        rhs[b] += c / r[t];
        rhs[a] -= c / r[t];
        slope[t] += c;
    }
    let w = lap.solve(&rhs);
    let grad = net
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(a, b))| (w[a] - w[b]) * (mu[a] - mu[b]) / (r[e] * r[e]) - slope[e] * flows[e] / r[e])
        .collect();
    Ok((flows, grad))
}
