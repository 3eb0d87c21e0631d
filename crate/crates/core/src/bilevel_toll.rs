//! Toll optimization on top of the equilibrium messages.
//!
//! A second message layer tracks the social cost with the lower layer's working
//! points. Each toll update steers the edge's toll-dependent equilibrium flow
//! toward the flow that minimizes the edge's full social-cost energy.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::cost_model::{CostModel, TollState};
use crate::error::{Error, Result};
use crate::mp_equilibrium::{
    Branch, EquilibriumSolver, MpParams, Scratch, Shape, SocialLayer,
};
use crate::network::{DirectedNetwork, EdgeId, TrafficClass};
use crate::oracles::{convex_equilibrium_warm, social_optimum, OracleReport};
use crate::piecewise::ConvexPiecewise;
use crate::rng::{fork, Rng};

/// Equilibrium flow on one edge as a function of its toll, all classes summed.
#[derive(Debug, Clone, PartialEq)]
pub struct TollResponse {
    /// Toll already contained in `energies`.
    base: f64,
    energies: Vec<ConvexPiecewise>,
}

impl TollResponse {
    pub fn new(base: f64, energies: Vec<ConvexPiecewise>) -> Self {
        Self { base, energies }
    }

    pub fn flow(&self, tau: f64) -> f64 {
        self.energies.iter().map(|f| f.inverse_derivative(self.base - tau)).sum()
    }

    /// `(τ, x^N(τ))` at every slope change inside `[lo, hi]`, plus both ends.
    pub fn breakpoints(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let mut knots = Vec::new();
        for f in &self.energies {
            f.derivative_knots(&mut knots);
        }
        let mut taus: Vec<f64> = knots.iter().map(|k| self.base - k).filter(|t| *t > lo && *t < hi).collect();
        taus.push(lo);
        taus.push(hi);
        taus.sort_by(f64::total_cmp);
        taus.dedup();
        taus.into_iter().map(|t| (t, self.flow(t))).collect()
    }
}

/// Smallest toll in `[0, τ_max]` bringing the equilibrium flow closest to `target`.
pub fn optimal_toll(response: &TollResponse, target: f64, tau_max: f64) -> f64 {
    if tau_max <= 0.0 {
        return 0.0;
    }
    let pts = response.breakpoints(0.0, tau_max);
    if pts[0].1 <= target {
        return 0.0;
    }
    for w in pts.windows(2) {
        let ((a, fa), (b, fb)) = (w[0], w[1]);
        if fb <= target {
            if !fa.is_finite() || fa == fb {
                return b;
            }
            return (a + (fa - target) / (fa - fb) * (b - a)).clamp(a, b);
        }
    }
    tau_max
}

/// Social-cost messages sharing the working points of an equilibrium solver.
#[derive(Debug, Clone)]
pub struct UpperLayer {
    shapes: Vec<Vec<Shape>>,
    failures: usize,
}

impl UpperLayer {
    pub fn new(solver: &EquilibriumSolver, rng: &mut Rng) -> Self {
        let slots = solver.topology().slots.len();
        let shapes = (0..solver.num_classes())
            .map(|_| {
                (0..slots)
                    .map(|_| Shape::Smooth(Branch { slope: rng.gen_range(-0.1..0.1), curvature: rng.gen_range(0.5..1.5) }))
                    .collect()
            })
            .collect();
        Self { shapes, failures: 0 }
    }

    pub fn shapes(&self, class: usize) -> &[Shape] {
        &self.shapes[class]
    }

    pub fn failed_updates(&self) -> usize {
        self.failures
    }

    /// Updates one slot; working points are left to the lower layer.
    pub fn update(&mut self, solver: &EquilibriumSolver, class: usize, s: usize, scratch: &mut Scratch) -> f64 {
        let layer = SocialLayer { cost: solver.cost() };
        let view = solver.view(class, &layer, &self.shapes[class]);
        match view.update(s, scratch) {
            Ok((shape, _)) => {
                let change = self.shapes[class][s].distance(&shape);
                self.shapes[class][s] = shape;
                change
            }
            Err(_) => {
                self.failures += 1;
                f64::INFINITY
            }
        }
    }

    /// Full social-cost energy of edge `e` for `class`.
    pub fn full_energy(&self, solver: &EquilibriumSolver, class: usize, e: EdgeId) -> Result<ConvexPiecewise> {
        let layer = SocialLayer { cost: solver.cost() };
        solver.view(class, &layer, &self.shapes[class]).marginal_energy(e)
    }

    /// Flow minimizing the full social-cost energy of `e`, summed over classes.
    pub fn target_flow(&self, solver: &EquilibriumSolver, e: EdgeId) -> Result<f64> {
        (0..solver.num_classes()).map(|c| Ok(self.full_energy(solver, c, e)?.argmin())).sum()
    }
}

pub fn toll_response(solver: &EquilibriumSolver, e: EdgeId) -> Result<TollResponse> {
    let energies = (0..solver.num_classes()).map(|c| solver.marginal_energy(c, e)).collect::<Result<_>>()?;
    Ok(TollResponse::new(solver.tolls()[e], energies))
}

pub fn optimize_edge_toll(solver: &EquilibriumSolver, upper: &UpperLayer, e: EdgeId, tau_max: f64) -> Result<f64> {
    let target = upper.target_flow(solver, e)?;
    Ok(optimal_toll(&toll_response(solver, e)?, target, tau_max))
}

/// How often a random tollable edge gets a new toll.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TollCadence {
    /// Every `f·N_d·|E|` message updates.
    EdgeFraction(f64),
    /// A fixed number of toll updates per sweep.
    PerSweep(usize),
}

impl TollCadence {
    pub fn interval(&self, classes: usize, edges: usize, sweep_len: usize) -> usize {
        let k = match *self {
            TollCadence::EdgeFraction(f) => (f * (classes * edges) as f64).round() as usize,
            TollCadence::PerSweep(n) => sweep_len / n.max(1),
        };
        k.max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilevelParams {
    pub mp: MpParams,
    /// Sweeps with frozen tolls before the first toll update.
    pub warmup_sweeps: usize,
    /// Sweeps with toll updates.
    pub sweeps: usize,
    pub cadence: TollCadence,
}

impl Default for BilevelParams {
    fn default() -> Self {
        Self { mp: MpParams::default(), warmup_sweeps: 10, sweeps: 50, cadence: TollCadence::EdgeFraction(0.4) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilevelRecord {
    /// Counted from the first warm-up sweep.
    pub sweep: usize,
    pub warmup: bool,
    /// Social cost of the exact equilibrium under the current tolls.
    pub cost: f64,
    /// Social cost of the best toll vector so far.
    pub best_cost: f64,
    /// `(H - H_S)/(H_N - H_S)` for `cost` and `best_cost`.
    pub fraction: f64,
    pub best_fraction: f64,
    pub nonzero_tolls: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilevelReport {
    pub records: Vec<BilevelRecord>,
    pub best_tolls: Vec<f64>,
    pub final_tolls: Vec<f64>,
    pub nash_cost: f64,
    pub optimal_cost: f64,
    pub failed_updates: usize,
}

impl BilevelReport {
    pub fn final_record(&self) -> &BilevelRecord {
        self.records.last().expect("at least one sweep")
    }
}

/// Oracle-backed evaluation of the social cost at equilibrium under given tolls.
pub struct CostEvaluator<'a> {
    net: &'a DirectedNetwork,
    cost: &'a CostModel,
    classes: &'a [TrafficClass],
    warm: Option<OracleReport>,
    last: Option<(Vec<f64>, f64)>,
}

impl<'a> CostEvaluator<'a> {
    pub fn new(net: &'a DirectedNetwork, cost: &'a CostModel, classes: &'a [TrafficClass]) -> Self {
        Self { net, cost, classes, warm: None, last: None }
    }

    pub fn social_cost(&mut self, tolls: &[f64]) -> Result<f64> {
        if let Some((t, h)) = &self.last {
            if t.as_slice() == tolls {
                return Ok(*h);
            }
        }
        let rep = convex_equilibrium_warm(self.net, self.cost, tolls, self.classes, self.warm.as_ref())?;
        let h = self.cost.social_cost(&rep.flows)?;
        self.warm = Some(rep);
        self.last = Some((tolls.to_vec(), h));
        Ok(h)
    }
}

fn fraction(h: f64, hn: f64, hs: f64) -> f64 {
    if hn - hs > 0.0 { (h - hs) / (hn - hs) } else { 0.0 }
}

pub fn run_bilevel(
    net: &DirectedNetwork,
    cost: &CostModel,
    classes: &[TrafficClass],
    tolls: &TollState,
    params: &BilevelParams,
) -> Result<BilevelReport> {
    if !tolls.is_valid() || tolls.tolls.len() != net.num_edges() {
        return Err(Error::InvalidArgument("initial tolls outside their bounds".into()));
    }
    let mut eval = CostEvaluator::new(net, cost, classes);
    let hn = eval.social_cost(&vec![0.0; net.num_edges()])?;
    let hs = social_optimum(net, cost, classes)?.objective;
    let mut state = tolls.clone();
    let mut solver = EquilibriumSolver::new(net, cost, &state.tolls, classes, params.mp.clone())?;
    let mut rng = fork(params.mp.seed, "bilevel");
    let mut upper = UpperLayer::new(&solver, &mut rng);
    let tollable: Vec<EdgeId> = (0..net.num_edges()).filter(|&e| state.max[e] > 0.0).collect();
    let sweep_len = solver.updates_per_sweep();
    let interval = params.cadence.interval(classes.len(), net.num_edges(), sweep_len);
    let mut scratch = Scratch::default();

    let mut best_tolls = state.tolls.clone();
    let mut best = eval.social_cost(&best_tolls)?;
    let mut records = Vec::new();
    let mut counter = 0usize;
    for sweep in 1..=params.warmup_sweeps + params.sweeps {
        let warmup = sweep <= params.warmup_sweeps;
        for _ in 0..sweep_len {
            let (class, s) = solver.random_slot();
            solver.update_slot(class, s);
            upper.update(&solver, class, s, &mut scratch);
            counter += 1;
            if !warmup && !tollable.is_empty() && counter % interval == 0 {
                let e = *tollable.choose(&mut rng).expect("non-empty");
                if let Ok(tau) = optimize_edge_toll(&solver, &upper, e, state.max[e]) {
                    state.set(e, tau);
                    solver.set_toll(e, state.tolls[e]);
                }
            }
        }
        let h = eval.social_cost(&state.tolls)?;
        if h < best {
            best = h;
            best_tolls.clone_from(&state.tolls);
        }
        records.push(BilevelRecord {
            sweep,
            warmup,
            cost: h,
            best_cost: best,
            fraction: fraction(h, hn, hs),
            best_fraction: fraction(best, hn, hs),
            nonzero_tolls: state.nonzero(),
        });
    }
    Ok(BilevelReport {
        records,
        best_tolls,
        final_tolls: state.tolls,
        nash_cost: hn,
        optimal_cost: hs,
        failed_updates: solver.failed_updates() + upper.failed_updates(),
    })
}

/// Converges the no-toll lower and upper layers, then ranks edges by how much
/// their full social-cost energy drops when the toll steers flow to its target.
/// Returns the top `fraction` of edges, ties broken by edge id.
pub fn select_tollable_edges(
    net: &DirectedNetwork,
    cost: &CostModel,
    classes: &[TrafficClass],
    tau_max: f64,
    fraction: f64,
    params: &MpParams,
) -> Result<Vec<EdgeId>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("tollable fraction {fraction} outside (0, 1]")));
    }
    let m = net.num_edges();
    let mut solver = EquilibriumSolver::new(net, cost, &vec![0.0; m], classes, params.clone())?;
    let mut rng = fork(params.seed, "bilevel");
    let mut upper = UpperLayer::new(&solver, &mut rng);
    let mut scratch = Scratch::default();
    for _ in 0..params.max_sweeps {
        let mut change = 0.0f64;
        for _ in 0..solver.updates_per_sweep() {
            let (class, s) = solver.random_slot();
            change = change.max(solver.update_slot(class, s));
            change = change.max(upper.update(&solver, class, s, &mut scratch));
        }
        if change < params.tolerance {
            break;
        }
    }
    let gains = edge_gains(&solver, &upper, tau_max)?;
    Ok(top_edges(&gains, fraction))
}

/// Drop of the full social-cost energy per edge under its optimal toll.
pub fn edge_gains(solver: &EquilibriumSolver, upper: &UpperLayer, tau_max: f64) -> Result<Vec<f64>> {
    (0..solver.network().num_edges())
        .map(|e| {
            let tau = optimize_edge_toll(solver, upper, e, tau_max)?;
            let mut gain = 0.0;
            let mut scale = 0.0f64;
            for c in 0..solver.num_classes() {
                let lower = solver.marginal_energy(c, e)?;
                let h = upper.full_energy(solver, c, e)?;
                let base = solver.tolls()[e];
                let (x0, x1) = (lower.inverse_derivative(base), lower.inverse_derivative(base - tau));
                gain += h.value(x0) - h.value(x1);
                scale = scale.max(h.value(x0).abs());
            }
            // Round-off level gains count as none so that ties fall back to edge order.
            Ok(if gain.is_finite() && gain > 1e-12 * (1.0 + scale) { gain } else { 0.0 })
        })
        .collect()
}

pub fn top_edges(gains: &[f64], fraction: f64) -> Vec<EdgeId> {
    let k = ((fraction * gains.len() as f64).round() as usize).clamp(1, gains.len());
    let mut order: Vec<EdgeId> = (0..gains.len()).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

/// `τ_e = x_S ℓ'_e(x_S)` at the social optimum.
pub fn marginal_cost_tolls(net: &DirectedNetwork, cost: &CostModel, classes: &[TrafficClass]) -> Result<Vec<f64>> {
    let so = social_optimum(net, cost, classes)?;
    Ok(so.flows.iter().zip(&cost.latencies).map(|(x, l)| x * l.slope).collect())
}
