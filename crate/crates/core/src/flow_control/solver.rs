use rand::Rng as _;

use crate::error::{Error, Result};
use crate::network::{EdgeId, NodeId, UndirectedNetwork};
use crate::rng::{fork, Rng};

use super::state::{hinge_slope, ControlState};

/// How the reference node enters the message equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceMethod {
    /// Messages out of the reference are zero.
    Grounded,
    /// The reference is balanced like any other node.
    Constrained,
}

/// Quadratic cavity cost `½ α (x - x̂)²` sent along a directed slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UndirectedMessage {
    pub alpha: f64,
    pub xhat: f64,
}

/// Objective gradients with respect to every message, one block per target.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientState {
    pub targets: usize,
    pub d_alpha: Vec<f64>,
    pub d_xhat: Vec<f64>,
}

impl GradientState {
    fn new(targets: usize, slots: usize) -> Self {
        Self { targets, d_alpha: vec![0.0; targets * slots], d_xhat: vec![0.0; targets * slots] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowParams {
    pub method: ReferenceMethod,
    /// Descent step on `r`.
    pub step: f64,
    /// Updates per sweep, in units of `|E|`.
    pub sweep_factor: usize,
    /// Updates between two control steps; `None` means `4|E|/10`.
    pub update_interval: Option<usize>,
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub seed: u64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            method: ReferenceMethod::Constrained,
            step: 0.05,
            sweep_factor: 4,
            update_interval: None,
            tolerance: 1e-12,
            max_sweeps: 5000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
struct Slot {
    edge: EdgeId,
    from: NodeId,
    /// `+1` if the slot runs `a → b` for the stored edge `(a, b)`.
    forward: bool,
    upstream: Vec<usize>,
    downstream: Vec<usize>,
}

/// Value and gradient messages on an undirected network.
pub struct FlowSolver<'a> {
    net: &'a UndirectedNetwork,
    params: FlowParams,
    control: ControlState,
    slots: Vec<Slot>,
    msg: Vec<UndirectedMessage>,
    grad: GradientState,
    rng: Rng,
}

fn slot_from(net: &UndirectedNetwork, e: EdgeId, from: NodeId) -> usize {
    if net.edge(e).0 == from {
        2 * e
    } else {
        2 * e + 1
    }
}

impl<'a> FlowSolver<'a> {
    pub fn new(net: &'a UndirectedNetwork, control: ControlState, params: FlowParams) -> Result<Self> {
        if control.r.len() != net.num_edges() || control.r.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidArgument("r must be positive, one entry per edge".into()));
        }
        if (0..net.num_nodes()).any(|i| net.neighbors(i).len() < 2) {
            return Err(Error::Validation("network has leaves; trim them first".into()));
        }
        let mut slots = Vec::with_capacity(2 * net.num_edges());
        for (e, &(a, b)) in net.edges().iter().enumerate() {
            for (from, to, forward) in [(a, b, true), (b, a, false)] {
                let upstream = net
                    .neighbors(from)
                    .iter()
                    .filter(|&&(_, f)| f != e)
                    .map(|&(k, f)| slot_from(net, f, k))
                    .collect();
                let downstream = net
                    .neighbors(to)
                    .iter()
                    .filter(|&&(_, f)| f != e)
                    .map(|&(_, f)| slot_from(net, f, to))
                    .collect();
                slots.push(Slot { edge: e, from, forward, upstream, downstream });
            }
        }
        let mut rng = fork(params.seed, "flow-control");
        let msg = (0..slots.len())
            .map(|_| UndirectedMessage { alpha: rng.gen_range(1.0..2.0), xhat: rng.gen_range(-0.5..0.5) })
            .collect();
        let grad = GradientState::new(control.targets.len(), slots.len());
        let mut solver = Self { net, params, control, slots, msg, grad, rng };
        if solver.params.method == ReferenceMethod::Grounded {
            let d = net.reference();
            for s in 0..solver.slots.len() {
                if solver.slots[s].from == d {
                    solver.msg[s] = UndirectedMessage { alpha: solver.control.r[solver.slots[s].edge], xhat: 0.0 };
                }
            }
        }
        Ok(solver)
    }

    pub fn control(&self) -> &ControlState {
        &self.control
    }

    pub fn r(&self) -> &[f64] {
        &self.control.r
    }

    pub fn set_r(&mut self, e: EdgeId, r: f64) {
        self.control.r[e] = r;
    }

    pub fn message(&self, s: usize) -> UndirectedMessage {
        self.msg[s]
    }

    pub fn gradient_state(&self) -> &GradientState {
        &self.grad
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn updates_per_sweep(&self) -> usize {
        self.params.sweep_factor * self.net.num_edges()
    }

    pub fn update_interval(&self) -> usize {
        self.params.update_interval.unwrap_or(4 * self.net.num_edges() / 10).max(1)
    }

    fn grounded(&self, s: usize) -> bool {
        self.params.method == ReferenceMethod::Grounded && self.slots[s].from == self.net.reference()
    }

    /// `Σ 1/α` over the upstream slots of `s`.
    fn inverse_sum(&self, s: usize) -> f64 {
        self.slots[s].upstream.iter().map(|&u| 1.0 / self.msg[u].alpha).sum()
    }

    /// Message `s` recomputed from its current upstream messages.
    pub fn value_message(&self, s: usize) -> UndirectedMessage {
        let r = self.control.r[self.slots[s].edge];
        if self.grounded(s) {
            return UndirectedMessage { alpha: r, xhat: 0.0 };
        }
        let sum = self.inverse_sum(s);
        let lam = self.net.resources()[self.slots[s].from];
        let xs: f64 = self.slots[s].upstream.iter().map(|&u| self.msg[u].xhat).sum();
        UndirectedMessage { alpha: 1.0 / sum + r, xhat: (lam + xs) / (1.0 + r * sum) }
    }

    pub fn update_value(&mut self, s: usize) -> f64 {
        let new = self.value_message(s);
        let old = std::mem::replace(&mut self.msg[s], new);
        ((new.alpha - old.alpha).abs() / (1.0 + new.alpha.abs())).max((new.xhat - old.xhat).abs())
    }

    /// Flow on edge `(a, b)` from `b` into `a`, and the denominator of its formula.
    fn flow_parts(&self, e: EdgeId) -> (f64, f64) {
        let ab = self.msg[2 * e];
        let ba = self.msg[2 * e + 1];
        let den = ab.alpha + ba.alpha - self.control.r[e];
        ((ba.alpha * ba.xhat - ab.alpha * ab.xhat) / den, den)
    }

    pub fn flow(&self, e: EdgeId) -> Result<f64> {
        let (x, den) = self.flow_parts(e);
        if !(den > 0.0) {
            return Err(Error::Consistency(format!("edge {e}: non-positive flow denominator {den}")));
        }
        Ok(x)
    }

    pub fn flows(&self) -> Result<Vec<f64>> {
        (0..self.net.num_edges()).map(|e| self.flow(e)).collect()
    }

    pub fn set_message(&mut self, s: usize, m: UndirectedMessage) {
        self.msg[s] = m;
    }

    /// Partials of the flow on the slot's edge with respect to `(α_s, x̂_s)`.
    pub fn flow_partials(&self, s: usize) -> (f64, f64) {
        let e = self.slots[s].edge;
        let (x, den) = self.flow_parts(e);
        let m = self.msg[s];
        if self.slots[s].forward {
            ((-m.xhat - x) / den, -m.alpha / den)
        } else {
            ((m.xhat - x) / den, m.alpha / den)
        }
    }

    /// `(∂α_d/∂α_s, ∂x̂_d/∂α_s, ∂x̂_d/∂x̂_s)` for a downstream slot `d` of `s`.
    pub fn propagation(&self, d: usize, s: usize) -> (f64, f64, f64) {
        if self.grounded(d) {
            return (0.0, 0.0, 0.0);
        }
        let sum = self.inverse_sum(d);
        let a = self.msg[s].alpha;
        let r = self.control.r[self.slots[d].edge];
        let xhat = self.value_message(d).xhat;
        let inv2 = 1.0 / (a * a);
        let denom = 1.0 + r * sum;
        (inv2 / (sum * sum), xhat * r * inv2 / denom, 1.0 / denom)
    }

    /// Recomputes the gradient messages of slot `s` for every target.
    pub fn update_gradient(&mut self, s: usize) -> f64 {
        let n = self.slots.len();
        let mut change = 0.0f64;
        let props: Vec<(usize, (f64, f64, f64))> =
            self.slots[s].downstream.iter().map(|&d| (d, self.propagation(d, s))).collect();
        let direct = self.flow_partials(s);
        let x = self.flow_parts(self.slots[s].edge).0;
        for t in 0..self.grad.targets {
            let (mut ga, mut gx) = (0.0, 0.0);
            if self.control.targets[t] == self.slots[s].edge {
                let c = hinge_slope(x, self.control.baseline[t], self.control.theta);
                ga += c * direct.0;
                gx += c * direct.1;
            }
            for &(d, (aa, xa, xx)) in &props {
                let da = self.grad.d_alpha[t * n + d];
                let dx = self.grad.d_xhat[t * n + d];
                ga += da * aa + dx * xa;
                gx += dx * xx;
            }
            let k = t * n + s;
            change = change.max((ga - self.grad.d_alpha[k]).abs()).max((gx - self.grad.d_xhat[k]).abs());
            self.grad.d_alpha[k] = ga;
            self.grad.d_xhat[k] = gx;
        }
        change
    }

    /// `(∂α_s/∂r, ∂x̂_s/∂r)` for the slot's own edge.
    pub fn message_r_partials(&self, s: usize) -> (f64, f64) {
        if self.grounded(s) {
            return (1.0, 0.0);
        }
        let sum = self.inverse_sum(s);
        let r = self.control.r[self.slots[s].edge];
        (1.0, -self.value_message(s).xhat * sum / (1.0 + r * sum))
    }

    /// `∂O_t/∂r_e` for target index `t`.
    pub fn target_gradient(&self, t: usize, e: EdgeId) -> f64 {
        let n = self.slots.len();
        let mut g = 0.0;
        for s in [2 * e, 2 * e + 1] {
            let (ra, rx) = self.message_r_partials(s);
            g += self.grad.d_alpha[t * n + s] * ra + self.grad.d_xhat[t * n + s] * rx;
        }
        if self.control.targets[t] == e {
            let (x, den) = self.flow_parts(e);
            g += hinge_slope(x, self.control.baseline[t], self.control.theta) * x / den;
        }
        g
    }

    pub fn edge_gradient(&self, e: EdgeId) -> f64 {
        (0..self.grad.targets).map(|t| self.target_gradient(t, e)).sum()
    }

    pub fn gradient(&self) -> Vec<f64> {
        (0..self.net.num_edges()).map(|e| self.edge_gradient(e)).collect()
    }

    pub fn random_slot(&mut self) -> usize {
        self.rng.gen_range(0..self.slots.len())
    }

    /// One value update and one gradient update on a random slot.
    pub fn step(&mut self, gradients: bool) -> f64 {
        let s = self.random_slot();
        let mut change = self.update_value(s);
        if gradients {
            change = change.max(self.update_gradient(s));
        }
        change
    }

    pub fn sweep(&mut self, gradients: bool) -> f64 {
        let mut change = 0.0f64;
        for _ in 0..self.updates_per_sweep() {
            change = change.max(self.step(gradients));
        }
        change
    }

    /// Sweeps at fixed `r` until messages (and gradients, if asked) stop changing.
    /// Returns whether that happened within the budget, and the sweeps used.
    pub fn solve(&mut self, gradients: bool) -> (bool, usize) {
        for k in 1..=self.params.max_sweeps {
            if self.sweep(gradients) < self.params.tolerance {
                return (true, k);
            }
        }
        (false, self.params.max_sweeps)
    }

    pub fn objective(&self) -> Result<(f64, Vec<f64>)> {
        let flows = self.flows()?;
        Ok(self.control.objective(&flows))
    }

    /// Descent step on a random edge using the current gradient messages.
    pub fn control_step(&mut self) -> (EdgeId, f64) {
        let e = self.rng.gen_range(0..self.net.num_edges());
        let g = self.edge_gradient(e);
        let r = self.control.clamp(self.control.r[e] - self.params.step * g);
        self.control.r[e] = r;
        (e, r)
    }
}

/// Equilibrium flows at fixed `r` by message passing.
pub fn mp_flows(net: &UndirectedNetwork, r: &[f64], params: FlowParams) -> Result<(Vec<f64>, bool)> {
    let control = ControlState {
        r: r.to_vec(),
        r_min: f64::MIN_POSITIVE,
        r_max: f64::MAX,
        targets: Vec::new(),
        baseline: Vec::new(),
        theta: 0.0,
    };
    let mut solver = FlowSolver::new(net, control, params)?;
    let (converged, _) = solver.solve(false);
    Ok((solver.flows()?, converged))
}
