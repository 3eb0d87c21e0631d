//! Latencies, potential and social cost, and Wardrop verification.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::network::paths::distances_to;
use crate::network::{DirectedNetwork, TrafficClass};
use crate::rng::Rng;

/// Nondecreasing, twice differentiable edge latency.
pub trait Latency {
    fn latency(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
    fn second_derivative(&self, _x: f64) -> f64 {
        0.0
    }
}

/// `ℓ(x) = constant + slope·x`. The usual `t(1 + s·x/c)` form maps to
/// `constant = t`, `slope = t·s/c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineLatency {
    pub constant: f64,
    pub slope: f64,
}

impl AffineLatency {
    pub fn new(constant: f64, slope: f64) -> Result<Self> {
        if !(constant >= 0.0) || !(slope >= 0.0) || !constant.is_finite() || !slope.is_finite() {
            return Err(Error::Validation(format!(
                "latency needs non-negative coefficients, got ({constant}, {slope})"
            )));
        }
        Ok(Self { constant, slope })
    }

    /// Free travel time `t`, capacity `c`, sensitivity `s`.
    pub fn from_capacity(t: f64, c: f64, s: f64) -> Result<Self> {
        if !(c > 0.0) || !(s >= 0.0) {
            return Err(Error::Validation(format!("capacity {c} / sensitivity {s} invalid")));
        }
        Self::new(t, t * s / c)
    }
}

impl Latency for AffineLatency {
    fn latency(&self, x: f64) -> f64 {
        self.constant + self.slope * x
    }

    fn derivative(&self, _x: f64) -> f64 {
        self.slope
    }
}

/// Per-edge latencies.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub latencies: Vec<AffineLatency>,
}

fn check_flow(x: f64) -> Result<f64> {
    if x < 0.0 || !x.is_finite() {
        return Err(Error::Domain(format!("flow {x} is not a non-negative number")));
    }
    Ok(x)
}

impl CostModel {
    pub fn new(latencies: Vec<AffineLatency>) -> Self {
        Self { latencies }
    }

    /// Builds latencies from `(t, c)` pairs and a global sensitivity.
    pub fn from_params(params: &[(f64, f64)], sensitivity: f64) -> Result<Self> {
        let latencies = params
            .iter()
            .map(|&(t, c)| AffineLatency::from_capacity(t, c, sensitivity))
            .collect::<Result<_>>()?;
        Ok(Self { latencies })
    }

    /// `t ~ U[1,2]`, `c ~ U[1,2]`, `s = 1` on every edge.
    pub fn random(num_edges: usize, rng: &mut Rng) -> Self {
        let latencies = (0..num_edges)
            .map(|_| {
                let t = rng.gen_range(1.0..2.0);
                let c = rng.gen_range(1.0..2.0);
                AffineLatency { constant: t, slope: t / c }
            })
            .collect();
        Self { latencies }
    }

    pub fn num_edges(&self) -> usize {
        self.latencies.len()
    }

    pub fn latency(&self, e: usize, x: f64) -> f64 {
        self.latencies[e].latency(x)
    }

    /// `φ_e(x) = ∫₀ˣ ℓ_e + τ`.
    pub fn phi(&self, e: usize, x: f64, toll: f64) -> f64 {
        let l = self.latencies[e];
        (l.constant + toll) * x + 0.5 * l.slope * x * x
    }

    pub fn dphi(&self, e: usize, x: f64, toll: f64) -> f64 {
        self.latencies[e].latency(x) + toll
    }

    pub fn ddphi(&self, e: usize, x: f64) -> f64 {
        self.latencies[e].derivative(x)
    }

    /// `σ_e(x) = x·ℓ_e(x)`.
    pub fn sigma(&self, e: usize, x: f64) -> f64 {
        x * self.latencies[e].latency(x)
    }

    pub fn dsigma(&self, e: usize, x: f64) -> f64 {
        let l = self.latencies[e];
        l.latency(x) + x * l.derivative(x)
    }

    pub fn ddsigma(&self, e: usize, x: f64) -> f64 {
        let l = self.latencies[e];
        2.0 * l.derivative(x) + x * l.second_derivative(x)
    }

    /// Integer potential `Σ_{y=1..x} ℓ_e(y) + τ`.
    pub fn atomic_phi(&self, e: usize, x: i64, toll: f64) -> f64 {
        let l = self.latencies[e];
        let xf = x as f64;
        (l.constant + toll) * xf + l.slope * xf * (xf + 1.0) / 2.0
    }

    pub fn atomic_sigma(&self, e: usize, x: i64) -> f64 {
        self.sigma(e, x as f64)
    }

    pub fn potential(&self, flows: &[f64], tolls: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (e, &x) in flows.iter().enumerate() {
            total += self.phi(e, check_flow(x)?, tolls.get(e).copied().unwrap_or(0.0));
        }
        Ok(total)
    }

    /// Social cost; tolls do not enter.
    pub fn social_cost(&self, flows: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (e, &x) in flows.iter().enumerate() {
            total += self.sigma(e, check_flow(x)?);
        }
        Ok(total)
    }

    pub fn atomic_potential(&self, flows: &[i64], tolls: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (e, &x) in flows.iter().enumerate() {
            if x < 0 {
                return Err(Error::Domain(format!("negative integer flow {x} on edge {e}")));
            }
            total += self.atomic_phi(e, x, tolls.get(e).copied().unwrap_or(0.0));
        }
        Ok(total)
    }

    pub fn atomic_social_cost(&self, flows: &[i64]) -> Result<f64> {
        let mut total = 0.0;
        for (e, &x) in flows.iter().enumerate() {
            if x < 0 {
                return Err(Error::Domain(format!("negative integer flow {x} on edge {e}")));
            }
            total += self.atomic_sigma(e, x);
        }
        Ok(total)
    }
}

/// Edge tolls with their upper bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct TollState {
    pub tolls: Vec<f64>,
    pub max: Vec<f64>,
}

impl TollState {
    pub fn zero(num_edges: usize) -> Self {
        Self { tolls: vec![0.0; num_edges], max: vec![0.0; num_edges] }
    }

    pub fn uniform(num_edges: usize, tau_max: f64) -> Self {
        Self { tolls: vec![0.0; num_edges], max: vec![tau_max; num_edges] }
    }

    /// Caps only the edges in `tollable`; the rest stay at zero.
    pub fn restricted(num_edges: usize, tau_max: f64, tollable: &[usize]) -> Self {
        let mut max = vec![0.0; num_edges];
        for &e in tollable {
            max[e] = tau_max;
        }
        Self { tolls: vec![0.0; num_edges], max }
    }

    pub fn set(&mut self, e: usize, tau: f64) {
        self.tolls[e] = tau.clamp(0.0, self.max[e]);
    }

    pub fn nonzero(&self) -> usize {
        self.tolls.iter().filter(|&&t| t > 0.0).count()
    }

    pub fn is_valid(&self) -> bool {
        self.tolls.iter().zip(&self.max).all(|(&t, &m)| (0.0..=m).contains(&t))
    }
}

/// Outcome of a Wardrop check.
#[derive(Debug, Clone, PartialEq)]
pub struct WardropReport {
    /// Largest conservation residual or negative-flow magnitude.
    pub feasibility_residual: f64,
    /// Largest excess cost of a used edge over the shortest-path potential difference.
    pub max_violation: f64,
    pub feasible: bool,
    pub passed: bool,
}

/// Checks conservation and the Wardrop conditions for one class under the given
/// total edge flows (which set the costs).
pub fn verify_wardrop_class(
    net: &DirectedNetwork,
    cost: &CostModel,
    tolls: &[f64],
    class: &TrafficClass,
    class_flows: &[f64],
    total_flows: &[f64],
    tol: f64,
) -> WardropReport {
    let mut feas = 0.0f64;
    for &x in class_flows {
        if x < 0.0 {
            feas = feas.max(-x);
        }
    }
    for i in 0..net.num_nodes() {
        if i == class.destination {
            continue;
        }
        let mut r = class.resources[i];
        for &e in net.in_edges(i) {
            r += class_flows[e];
        }
        for &e in net.out_edges(i) {
            r -= class_flows[e];
        }
        feas = feas.max(r.abs());
    }
    let weights: Vec<f64> = (0..net.num_edges())
        .map(|e| cost.latency(e, total_flows[e].max(0.0)) + tolls.get(e).copied().unwrap_or(0.0))
        .collect();
    let (u, _) = distances_to(net, &weights, class.destination);
    let mut viol = 0.0f64;
    for (e, edge) in net.edges().iter().enumerate() {
        if class_flows[e] > tol {
            let gap = weights[e] + u[edge.tail] - u[edge.head];
            viol = viol.max(if gap.is_nan() { f64::INFINITY } else { gap });
        }
    }
    let feasible = feas <= tol;
    WardropReport { feasibility_residual: feas, max_violation: viol, feasible, passed: feasible && viol <= tol }
}

pub fn verify_wardrop(
    net: &DirectedNetwork,
    cost: &CostModel,
    tolls: &[f64],
    class: &TrafficClass,
    flows: &[f64],
    tol: f64,
) -> WardropReport {
    verify_wardrop_class(net, cost, tolls, class, flows, flows, tol)
}

/// Multi-class check; the worst class determines the report.
pub fn verify_wardrop_multi(
    net: &DirectedNetwork,
    cost: &CostModel,
    tolls: &[f64],
    classes: &[TrafficClass],
    class_flows: &[Vec<f64>],
    tol: f64,
) -> WardropReport {
    let mut total = vec![0.0; net.num_edges()];
    for f in class_flows {
        for (t, x) in total.iter_mut().zip(f) {
            *t += x;
        }
    }
    let mut worst = WardropReport { feasibility_residual: 0.0, max_violation: 0.0, feasible: true, passed: true };
    for (c, f) in classes.iter().zip(class_flows) {
        let r = verify_wardrop_class(net, cost, tolls, c, f, &total, tol);
        worst.feasibility_residual = worst.feasibility_residual.max(r.feasibility_residual);
        worst.max_violation = worst.max_violation.max(r.max_violation);
        worst.feasible &= r.feasible;
        worst.passed &= r.passed;
    }
    worst
}
