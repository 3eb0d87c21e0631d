//! Min-sum message passing for atomic routing games, where every user moves one
//! unit of flow. Messages are cavity energies tabulated on a small integer window
//! around each slot's working point.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::bilevel_toll::TollCadence;
use crate::cost_model::{CostModel, TollState};
use crate::error::{Error, Result};
use crate::mp_equilibrium::Topology;
use crate::network::{DirectedNetwork, EdgeId, NodeId};
use crate::oracles::atomic_potential_minimizer;
use crate::rng::{fork, Rng};

/// Grid entry: total conservation violation in the cavity subtree, then cost.
/// Entries compare lexicographically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridValue {
    pub violation: i64,
    pub cost: f64,
}

impl GridValue {
    pub const ZERO: GridValue = GridValue { violation: 0, cost: 0.0 };
    /// Marks flows outside the domain (negative).
    pub const INVALID: GridValue = GridValue { violation: i64::MAX / 4, cost: f64::INFINITY };

    pub fn is_valid(&self) -> bool {
        self.cost.is_finite()
    }

    fn add(self, o: GridValue) -> GridValue {
        GridValue { violation: self.violation + o.violation, cost: self.cost + o.cost }
    }

    fn less(&self, o: &GridValue) -> bool {
        self.violation < o.violation || (self.violation == o.violation && self.cost < o.cost)
    }
}

/// Cavity energy on the window `x̃ - M ..= x̃ + M`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMessage {
    pub working_point: i64,
    pub values: Vec<GridValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    /// Among tied minima prefer the flow that best balances both endpoints.
    Residual,
    /// Add a tiny random linear cost per edge.
    Bias,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicParams {
    pub window: usize,
    pub sweep_factor: usize,
    pub max_sweeps: usize,
    pub tie_break: TieBreak,
    pub seed: u64,
    /// Sweeps with unchanged, feasible marginal flows that count as converged.
    pub patience: usize,
}

impl Default for AtomicParams {
    fn default() -> Self {
        Self { window: 1, sweep_factor: 40, max_sweeps: 200, tie_break: TieBreak::Residual, seed: 0, patience: 5 }
    }
}

/// Integer edge cost seen by a grid layer.
pub trait GridLayer {
    fn cost(&self, e: EdgeId, x: i64) -> f64;
}

pub struct AtomicPotential<'a> {
    pub cost: &'a CostModel,
    pub tolls: &'a [f64],
}

impl GridLayer for AtomicPotential<'_> {
    fn cost(&self, e: EdgeId, x: i64) -> f64 {
        self.cost.atomic_phi(e, x, self.tolls[e])
    }
}

pub struct AtomicSocial<'a> {
    pub cost: &'a CostModel,
}

impl GridLayer for AtomicSocial<'_> {
    fn cost(&self, e: EdgeId, x: i64) -> f64 {
        self.cost.atomic_sigma(e, x)
    }
}

/// Message tables for one layer; working points live in [`AtomicSolver`].
#[derive(Debug, Clone)]
struct GridTables {
    values: Vec<GridValue>,
}

impl GridTables {
    fn new(slots: usize, width: usize) -> Self {
        Self { values: vec![GridValue::ZERO; slots * width] }
    }
}

pub struct AtomicSolver<'a> {
    net: &'a DirectedNetwork,
    cost: &'a CostModel,
    topo: Topology,
    users: Vec<i64>,
    destination: NodeId,
    tolls: Vec<f64>,
    params: AtomicParams,
    working: Vec<i64>,
    lower: GridTables,
    bias: Vec<f64>,
    rng: Rng,
    dp: Vec<GridValue>,
    next: Vec<GridValue>,
}

impl<'a> AtomicSolver<'a> {
    pub fn new(
        net: &'a DirectedNetwork,
        cost: &'a CostModel,
        tolls: &[f64],
        users: &[i64],
        params: AtomicParams,
    ) -> Result<Self> {
        if users.len() != net.num_nodes() || users.iter().any(|&u| u < 0) {
            return Err(Error::InvalidArgument("users must be non-negative, one entry per node".into()));
        }
        if tolls.len() != net.num_edges() || cost.num_edges() != net.num_edges() {
            return Err(Error::InvalidArgument("cost and toll vectors must match the edge count".into()));
        }
        if params.window == 0 {
            return Err(Error::InvalidArgument("window half-width must be at least 1".into()));
        }
        let destination = net.destination();
        let mut users = users.to_vec();
        users[destination] = 0;
        let topo = Topology::new(net);
        let slots = topo.slots.len();
        let mut rng = fork(params.seed, "atomic");
        let total: i64 = users.iter().sum();
        let hi = ((total as f64 / net.num_edges() as f64).round() as i64).max(1);
        let working = (0..slots).map(|_| rng.gen_range(0..=hi)).collect();
        let bias = match params.tie_break {
            TieBreak::Bias => (0..net.num_edges()).map(|_| rng.gen_range(0.0..1e-6)).collect(),
            TieBreak::Residual => vec![0.0; net.num_edges()],
        };
        let width = 2 * params.window + 1;
        Ok(Self {
            net,
            cost,
            topo,
            users,
            destination,
            tolls: tolls.to_vec(),
            lower: GridTables::new(slots, width),
            params,
            working,
            bias,
            rng,
            dp: Vec::new(),
            next: Vec::new(),
        })
    }

    fn width(&self) -> usize {
        2 * self.params.window + 1
    }

    pub fn message(&self, s: usize) -> GridMessage {
        let w = self.width();
        GridMessage {
            working_point: self.working[s],
            values: self.lower.values[s * w..(s + 1) * w].to_vec(),
        }
    }

    pub fn tolls(&self) -> &[f64] {
        &self.tolls
    }

    pub fn set_toll(&mut self, e: EdgeId, tau: f64) {
        self.tolls[e] = tau;
    }

    pub fn updates_per_sweep(&self) -> usize {
        self.params.sweep_factor * self.net.num_edges()
    }

    /// Conservation residual at the node of slot `s` if its edge carried `x` and
    /// every upstream edge sat at its working point.
    fn residual(&self, s: usize, x: i64) -> i64 {
        let info = &self.topo.slots[s];
        if info.node == self.destination {
            return 0;
        }
        let up: i64 = info.upstream.iter().map(|&(u, b)| i64::from(b) * self.working[u]).sum();
        self.users[info.node] + i64::from(info.sign) * x + up
    }

    /// Recomputes the table of slot `s` on `layer`. Returns the largest change.
    fn compute<L: GridLayer>(&mut self, layer: &L, tables: &mut GridTables, s: usize) -> f64 {
        let m = self.params.window as i64;
        let w = self.width();
        let info = &self.topo.slots[s];
        let mut out = vec![GridValue::INVALID; w];
        if info.node == self.destination {
            for (k, v) in out.iter_mut().enumerate() {
                if self.working[s] + k as i64 - m >= 0 {
                    *v = GridValue::ZERO;
                }
            }
        } else {
            let k = info.upstream.len() as i64;
            let span = (2 * k * m + 1) as usize;
            self.dp.clear();
            self.dp.resize(span, GridValue::INVALID);
            self.dp[(k * m) as usize] = GridValue::ZERO;
            let mut base = 0i64;
            for &(u, b) in &info.upstream {
                let b = i64::from(b);
                base += b * self.working[u];
                let e = self.topo.slots[u].edge;
                self.next.clear();
                self.next.resize(span, GridValue::INVALID);
                for d in -m..=m {
                    let x = self.working[u] + d;
                    let h = tables.values[u * w + (d + m) as usize];
                    if x < 0 || !h.is_valid() {
                        continue;
                    }
                    let val = GridValue { violation: h.violation, cost: h.cost + layer.cost(e, x) };
                    if !val.is_valid() {
                        continue;
                    }
                    for j in 0..span {
                        if !self.dp[j].is_valid() {
                            continue;
                        }
                        let t = j as i64 + b * d;
                        if (0..span as i64).contains(&t) {
                            let cand = self.dp[j].add(val);
                            if cand.less(&self.next[t as usize]) {
                                self.next[t as usize] = cand;
                            }
                        }
                    }
                }
                std::mem::swap(&mut self.dp, &mut self.next);
            }
            let sign = i64::from(info.sign);
            let lam = self.users[info.node];
            for (idx, v) in out.iter_mut().enumerate() {
                let x = self.working[s] + idx as i64 - m;
                if x < 0 {
                    continue;
                }
                for (j, d) in self.dp.iter().enumerate() {
                    if !d.is_valid() {
                        continue;
                    }
                    let r = lam + sign * x + base + j as i64 - k * m;
                    let cand = d.add(GridValue { violation: r.abs(), cost: 0.0 });
                    if cand.less(v) {
                        *v = cand;
                    }
                }
            }
        }
        if let Some(min) = out.iter().copied().filter(GridValue::is_valid).reduce(|a, b| if b.less(&a) { b } else { a }) {
            for v in out.iter_mut().filter(|v| v.is_valid()) {
                v.violation -= min.violation;
                v.cost -= min.cost;
            }
        }
        let old = &tables.values[s * w..(s + 1) * w];
        let mut change = 0.0f64;
        for (a, b) in old.iter().zip(&out) {
            if a.is_valid() != b.is_valid() || a.violation != b.violation {
                change = f64::INFINITY;
            } else if a.is_valid() {
                change = change.max((a.cost - b.cost).abs());
            }
        }
        tables.values[s * w..(s + 1) * w].copy_from_slice(&out);
        change
    }

    /// Minimizer of the full edge energy over the overlap of both endpoint windows,
    /// or `None` when the windows share no feasible flow.
    fn marginal<L: GridLayer>(&self, layer: &L, tables: &GridTables, e: EdgeId, bias: bool) -> Option<i64> {
        let m = self.params.window as i64;
        let w = self.width();
        let (a, b) = (2 * e, 2 * e + 1);
        let lo = (self.working[a] - m).max(self.working[b] - m).max(0);
        let hi = (self.working[a] + m).min(self.working[b] + m);
        let entry = |s: usize, x: i64| tables.values[s * w + (x - self.working[s] + m) as usize];
        let mut cands: Vec<(i64, GridValue)> = (lo..=hi)
            .map(|x| {
                let mut f = entry(a, x).add(entry(b, x));
                f.cost += layer.cost(e, x);
                if bias {
                    f.cost += self.bias[e] * x as f64;
                }
                (x, f)
            })
            .filter(|(_, f)| f.is_valid())
            .collect();
        let best = cands.iter().map(|c| c.1).reduce(|a, b| if b.less(&a) { b } else { a })?;
        cands.retain(|c| c.1.violation == best.violation && c.1.cost <= best.cost + 1e-9 * (1.0 + best.cost.abs()));
        cands
            .into_iter()
            .min_by_key(|&(x, _)| (self.residual(a, x).abs() + self.residual(b, x).abs(), x))
            .map(|c| c.0)
    }

    fn lower_marginal(&self, e: EdgeId) -> Option<i64> {
        let layer = AtomicPotential { cost: self.cost, tolls: &self.tolls };
        self.marginal(&layer, &self.lower, e, self.params.tie_break == TieBreak::Bias)
    }

    fn refresh_lower(&mut self, s: usize) -> f64 {
        let mut tables = std::mem::replace(&mut self.lower, GridTables::new(0, 0));
        let cost = self.cost;
        let tolls = std::mem::take(&mut self.tolls);
        let change = self.compute(&AtomicPotential { cost, tolls: &tolls }, &mut tables, s);
        self.tolls = tolls;
        self.lower = tables;
        change
    }

    /// Updates slot `s` and moves its working point one unit toward the marginal
    /// optimum (or toward the opposite window when they do not overlap).
    pub fn update_slot(&mut self, s: usize) -> f64 {
        let mut change = self.refresh_lower(s);
        let e = self.topo.slots[s].edge;
        let target = self.lower_marginal(e).unwrap_or(self.working[s ^ 1]);
        let step = (target - self.working[s]).signum();
        if step != 0 {
            self.working[s] += step;
            self.refresh_lower(s);
            change = f64::INFINITY;
        }
        change
    }

    pub fn random_slot(&mut self) -> usize {
        self.rng.gen_range(0..self.topo.slots.len())
    }

    pub fn sweep(&mut self) -> f64 {
        let mut change = 0.0f64;
        for _ in 0..self.updates_per_sweep() {
            let s = self.random_slot();
            change = change.max(self.update_slot(s));
        }
        change
    }

    /// Marginal flows; edges whose windows do not overlap fall back to the mean
    /// working point.
    pub fn marginal_flows(&self) -> Vec<i64> {
        (0..self.net.num_edges())
            .map(|e| self.lower_marginal(e).unwrap_or((self.working[2 * e] + self.working[2 * e + 1]) / 2))
            .collect()
    }

    pub fn run(&mut self) -> Result<AtomicReport> {
        let mut converged = false;
        let mut sweeps = 0;
        let mut last = self.marginal_flows();
        let mut stable = 0;
        while sweeps < self.params.max_sweeps {
            sweeps += 1;
            let change = self.sweep();
            let flows = self.marginal_flows();
            stable = if flows == last { stable + 1 } else { 0 };
            last = flows;
            if change < 1e-12 || (stable >= self.params.patience && self.is_feasible(&last)) {
                converged = true;
                break;
            }
        }
        self.report(converged, sweeps)
    }

    pub fn is_feasible(&self, flows: &[i64]) -> bool {
        let mut r = self.users.clone();
        for (e, edge) in self.net.edges().iter().enumerate() {
            if flows[e] < 0 {
                return false;
            }
            r[edge.head] -= flows[e];
            r[edge.tail] += flows[e];
        }
        r[self.destination] = 0;
        r.iter().all(|&v| v == 0)
    }

    fn report(&self, converged: bool, sweeps: usize) -> Result<AtomicReport> {
        let marginal = self.marginal_flows();
        let flows = repair(self.net, &self.users, self.destination, &marginal)?;
        let potential = self.cost.atomic_potential(&flows, &self.tolls)?;
        let repaired = flows != marginal;
        Ok(AtomicReport { flows, marginal_flows: marginal, potential, converged, sweeps, repaired })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicReport {
    /// Feasible integer flows.
    pub flows: Vec<i64>,
    /// Flows read off the messages before repair.
    pub marginal_flows: Vec<i64>,
    pub potential: f64,
    pub converged: bool,
    pub sweeps: usize,
    /// Whether the marginal flows had to be changed to become feasible.
    pub repaired: bool,
}

pub fn run_atomic_equilibrium(
    net: &DirectedNetwork,
    cost: &CostModel,
    tolls: &[f64],
    users: &[i64],
    params: AtomicParams,
) -> Result<AtomicReport> {
    AtomicSolver::new(net, cost, tolls, users, params)?.run()
}

/// Closest feasible integer flow to `target` in total absolute deviation, found by
/// unit augmentations along cheapest residual paths.
pub fn repair(net: &DirectedNetwork, users: &[i64], destination: NodeId, target: &[i64]) -> Result<Vec<i64>> {
    let n = net.num_nodes();
    let mut x: Vec<i64> = target.iter().map(|&t| t.max(0)).collect();
    let mut r = vec![0i64; n];
    for i in 0..n {
        r[i] = users[i];
    }
    for (e, edge) in net.edges().iter().enumerate() {
        r[edge.head] -= x[e];
        r[edge.tail] += x[e];
    }
    r[destination] = 0;
    let limit = 4 * (r.iter().map(|v| v.abs()).sum::<i64>() as usize + 1);
    for _ in 0..limit {
        let Some(i) = (0..n).find(|&i| r[i] != 0) else {
            return Ok(x);
        };
        let forward = r[i] > 0;
        let (path, end) = cheapest_path(net, &x, target, i, forward, |t| {
            t == destination || if forward { r[t] < 0 } else { r[t] > 0 }
        })
        .ok_or_else(|| Error::Infeasible(format!("no residual path to rebalance node {i}")))?;
        for (e, up) in path {
            x[e] += if up { 1 } else { -1 };
        }
        let unit = if forward { 1 } else { -1 };
        r[i] -= unit;
        if end != destination {
            r[end] += unit;
        }
    }
    Err(Error::Consistency("flow repair did not terminate".into()))
}

/// Bellman-Ford over unit moves. `forward` searches paths leaving `start`; otherwise
/// paths arriving at it. Returns the arcs as (edge, increase?) and the far end.
fn cheapest_path(
    net: &DirectedNetwork,
    x: &[i64],
    target: &[i64],
    start: NodeId,
    forward: bool,
    is_end: impl Fn(NodeId) -> bool,
) -> Option<(Vec<(EdgeId, bool)>, NodeId)> {
    let n = net.num_nodes();
    let step_cost = |e: EdgeId, up: bool| -> f64 {
        let away = if up { x[e] >= target[e] } else { x[e] <= target[e] };
        if away { 1.0 } else { -1.0 }
    };
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<(EdgeId, bool, NodeId)>> = vec![None; n];
    dist[start] = 0.0;
    for _ in 0..n {
        let mut moved = false;
        for (e, edge) in net.edges().iter().enumerate() {
            // Raising x_e moves a unit head → tail; lowering moves it tail → head.
            let mut arcs = [(edge.head, edge.tail, true), (edge.tail, edge.head, false)];
            if !forward {
                for a in &mut arcs {
                    std::mem::swap(&mut a.0, &mut a.1);
                }
            }
            for (from, to, up) in arcs {
                if !up && x[e] == 0 {
                    continue;
                }
                let d = dist[from] + step_cost(e, up);
                if dist[from].is_finite() && d < dist[to] - 1e-12 {
                    dist[to] = d;
                    pred[to] = Some((e, up, from));
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }
    let end = (0..n)
        .filter(|&t| t != start && is_end(t) && dist[t].is_finite())
        .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)))?;
    let mut path = Vec::new();
    let mut v = end;
    while v != start {
        let (e, up, from) = pred[v]?;
        path.push((e, up));
        v = from;
        if path.len() > net.num_edges() {
            return None;
        }
    }
    Some((path, end))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicBilevelParams {
    pub atomic: AtomicParams,
    pub warmup_sweeps: usize,
    pub sweeps: usize,
    pub cadence: TollCadence,
    /// Toll step as a fraction of the edge's cap.
    pub increment: f64,
    pub trials: usize,
}

impl Default for AtomicBilevelParams {
    fn default() -> Self {
        Self {
            atomic: AtomicParams::default(),
            warmup_sweeps: 5,
            sweeps: 30,
            cadence: TollCadence::EdgeFraction(0.4),
            increment: 0.1,
            trials: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicTrial {
    pub seed: u64,
    /// `(sweep, social cost under current tolls, best so far)`.
    pub trajectory: Vec<(usize, f64, f64)>,
    pub best_tolls: Vec<f64>,
    pub best_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicBilevelReport {
    pub trials: Vec<AtomicTrial>,
    pub best_tolls: Vec<f64>,
    pub best_cost: f64,
    pub nash_cost: f64,
}

/// Social cost of the potential-minimizing integer equilibrium under `tolls`.
pub fn equilibrium_social_cost(net: &DirectedNetwork, cost: &CostModel, tolls: &[f64], users: &[i64]) -> Result<f64> {
    let x = atomic_potential_minimizer(net, cost, tolls, users, net.destination())?;
    cost.atomic_social_cost(&x)
}

pub fn run_atomic_bilevel(
    net: &DirectedNetwork,
    cost: &CostModel,
    users: &[i64],
    tolls: &TollState,
    params: &AtomicBilevelParams,
) -> Result<AtomicBilevelReport> {
    if !tolls.is_valid() || tolls.tolls.len() != net.num_edges() {
        return Err(Error::InvalidArgument("initial tolls outside their bounds".into()));
    }
    let nash_cost = equilibrium_social_cost(net, cost, &vec![0.0; net.num_edges()], users)?;
    let mut trials = Vec::with_capacity(params.trials);
    for k in 0..params.trials.max(1) {
        let seed = params.atomic.seed.wrapping_add(k as u64);
        trials.push(atomic_trial(net, cost, users, tolls, params, seed)?);
    }
    let best = trials
        .iter()
        .min_by(|a, b| a.best_cost.total_cmp(&b.best_cost))
        .expect("at least one trial");
    Ok(AtomicBilevelReport {
        best_tolls: best.best_tolls.clone(),
        best_cost: best.best_cost,
        nash_cost,
        trials,
    })
}

fn atomic_trial(
    net: &DirectedNetwork,
    cost: &CostModel,
    users: &[i64],
    tolls: &TollState,
    params: &AtomicBilevelParams,
    seed: u64,
) -> Result<AtomicTrial> {
    let mut state = tolls.clone();
    let atomic = AtomicParams { seed, ..params.atomic.clone() };
    let mut solver = AtomicSolver::new(net, cost, &state.tolls, users, atomic)?;
    let slots = solver.topo.slots.len();
    let mut upper = GridTables::new(slots, solver.width());
    let mut rng = fork(seed, "atomic-bilevel");
    let tollable: Vec<EdgeId> = (0..net.num_edges()).filter(|&e| state.max[e] > 0.0).collect();
    let sweep_len = solver.updates_per_sweep();
    let interval = params.cadence.interval(1, net.num_edges(), sweep_len);
    let mut best_tolls = state.tolls.clone();
    let mut best_cost = equilibrium_social_cost(net, cost, &best_tolls, users)?;
    let mut trajectory = Vec::new();
    let mut counter = 0usize;
    for sweep in 1..=params.warmup_sweeps + params.sweeps {
        let warmup = sweep <= params.warmup_sweeps;
        for _ in 0..sweep_len {
            let s = solver.random_slot();
            solver.update_slot(s);
            solver.compute(&AtomicSocial { cost }, &mut upper, s);
            counter += 1;
            if !warmup && !tollable.is_empty() && counter % interval == 0 {
                let e = *tollable.choose(&mut rng).expect("non-empty");
                let social = solver.marginal(&AtomicSocial { cost }, &upper, e, false);
                if let (Some(xs), Some(xn)) = (social, solver.lower_marginal(e)) {
                    let step = params.increment * state.max[e];
                    let tau = match xn.cmp(&xs) {
                        std::cmp::Ordering::Greater => state.tolls[e] + step,
                        std::cmp::Ordering::Less => state.tolls[e] - step,
                        std::cmp::Ordering::Equal => state.tolls[e],
                    };
                    state.set(e, tau);
                    solver.set_toll(e, state.tolls[e]);
                }
            }
        }
        let h = equilibrium_social_cost(net, cost, &state.tolls, users)?;
        if h < best_cost {
            best_cost = h;
            best_tolls.clone_from(&state.tolls);
        }
        trajectory.push((sweep, h, best_cost));
    }
    Ok(AtomicTrial { seed, trajectory, best_tolls, best_cost })
}

/// Drops tolls below `epsilon` and keeps the thinned vector only if the social cost
/// does not rise. Returns the kept tolls and their cost.
pub fn threshold_tolls(
    net: &DirectedNetwork,
    cost: &CostModel,
    users: &[i64],
    tolls: &[f64],
    epsilon: f64,
) -> Result<(Vec<f64>, f64)> {
    let full = equilibrium_social_cost(net, cost, tolls, users)?;
    let thin: Vec<f64> = tolls.iter().map(|&t| if t >= epsilon { t } else { 0.0 }).collect();
    let h = equilibrium_social_cost(net, cost, &thin, users)?;
    Ok(if h <= full { (thin, h) } else { (tolls.to_vec(), full) })
}

/// `per_source` users on each of `sources` distinct non-destination nodes.
pub fn random_sources(net: &DirectedNetwork, sources: usize, per_source: i64, rng: &mut Rng) -> Vec<i64> {
    let dest = net.destination();
    let candidates: Vec<NodeId> = (0..net.num_nodes()).filter(|&i| i != dest).collect();
    let mut users = vec![0i64; net.num_nodes()];
    for &s in candidates.choose_multiple(rng, sources) {
        users[s] = per_source;
    }
    users
}

/// Small brute-forceable game: an RRG(6, 3) with at most `max_edges` directed edges
/// after orientation and 1 to `max_users` users on random non-destination nodes.
/// Seeds whose network is too large are skipped, so the result records the seed used.
pub fn small_instance(seed: u64, max_edges: usize, max_users: i64) -> Result<(u64, DirectedNetwork, CostModel, Vec<i64>)> {
    for s in seed.. {
        let net = crate::network::generate_rrg(6, 3, s)?;
        if net.num_edges() > max_edges {
            continue;
        }
        let mut rng = fork(s, "atomic-instance");
        let cost = CostModel::random(net.num_edges(), &mut rng);
        let dest = net.destination();
        let mut users = vec![0i64; net.num_nodes()];
        for _ in 0..rng.gen_range(1..=max_users) {
            let i = loop {
                let i = rng.gen_range(0..net.num_nodes());
                if i != dest {
                    break i;
                }
            };
            users[i] += 1;
        }
        return Ok((s, net, cost, users));
    }
    unreachable!()
}
