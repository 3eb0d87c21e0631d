use rand::Rng as _;

use crate::cost_model::CostModel;
use crate::error::{Error, Result};
use crate::network::{DirectedNetwork, EdgeId, NodeId, TrafficClass};
use crate::piecewise::ConvexPiecewise;
use crate::rng::{fork, Rng};

use super::cavity::{CavityView, EdgeLayer, LeafRule, PotentialLayer, Scratch, Topology};
use super::message::{Branch, LowerMessage, Shape};

/// How the destination enters the message equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DestinationMethod {
    /// Destination absorbs any amount of flow; its messages are zero.
    Grounded,
    /// Destination is balanced like any other node with `Λ_D = -Σ Λ_i`.
    Constrained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpParams {
    pub learning_rate: f64,
    pub tolerance: f64,
    /// Updates per sweep, in units of `N_d·|E|`.
    pub sweep_factor: usize,
    pub max_sweeps: usize,
    pub leaf: LeafRule,
    pub method: DestinationMethod,
    pub seed: u64,
    /// Reference flows for the per-sweep error trace.
    pub reference: Option<Vec<f64>>,
}

impl Default for MpParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            tolerance: 1e-8,
            sweep_factor: 40,
            max_sweeps: 5000,
            leaf: LeafRule::default(),
            method: DestinationMethod::Grounded,
            seed: 0,
            reference: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub sweep: usize,
    /// Largest message or working-point change during the sweep.
    pub message_change: f64,
    /// L∞ distance of current flows to the reference, if one was given.
    pub flow_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport {
    pub flows: Vec<f64>,
    pub class_flows: Vec<Vec<f64>>,
    pub converged: bool,
    pub sweeps: usize,
    pub trace: Vec<SweepRecord>,
    /// Local updates skipped because the cavity problem had no solution.
    pub failed_updates: usize,
}

#[derive(Debug, Clone)]
struct ClassState {
    resources: Vec<f64>,
    grounded: Option<NodeId>,
    shapes: Vec<Shape>,
    working: Vec<f64>,
}

/// Message state for one equilibrium problem, possibly with several classes.
pub struct EquilibriumSolver<'a> {
    net: &'a DirectedNetwork,
    cost: &'a CostModel,
    topo: Topology,
    params: MpParams,
    tolls: Vec<f64>,
    classes: Vec<ClassState>,
    total_working: Vec<f64>,
    rng: Rng,
    scratch: Scratch,
    failed: usize,
}

fn random_shape(rng: &mut Rng) -> Shape {
    Shape::Smooth(Branch { slope: rng.gen_range(-0.1..0.1), curvature: rng.gen_range(0.5..1.5) })
}

impl<'a> EquilibriumSolver<'a> {
    pub fn new(
        net: &'a DirectedNetwork,
        cost: &'a CostModel,
        tolls: &[f64],
        classes: &[TrafficClass],
        params: MpParams,
    ) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::InvalidArgument("at least one class is required".into()));
        }
        if cost.num_edges() != net.num_edges() || tolls.len() != net.num_edges() {
            return Err(Error::InvalidArgument("cost and toll vectors must match the edge count".into()));
        }
        if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
            return Err(Error::InvalidArgument(format!("learning rate {} outside (0, 1]", params.learning_rate)));
        }
        let topo = Topology::new(net);
        let mut rng = fork(params.seed, "mp");
        let m = net.num_edges();
        let states: Vec<ClassState> = classes
            .iter()
            .map(|c| {
                let mut resources = c.resources.clone();
                let grounded = match params.method {
                    DestinationMethod::Grounded => Some(c.destination),
                    DestinationMethod::Constrained => {
                        resources[c.destination] = -c.total();
                        None
                    }
                };
                let hi = c.total() / m as f64;
                let shapes = (0..2 * m).map(|_| random_shape(&mut rng)).collect();
                let working = (0..2 * m).map(|_| if hi > 0.0 { rng.gen_range(0.0..=hi) } else { 0.0 }).collect();
                ClassState { resources, grounded, shapes, working }
            })
            .collect();
        let mut total_working = vec![0.0; 2 * m];
        for c in &states {
            for (t, w) in total_working.iter_mut().zip(&c.working) {
                *t += w;
            }
        }
        Ok(Self {
            net,
            cost,
            topo,
            params,
            tolls: tolls.to_vec(),
            classes: states,
            total_working,
            rng,
            scratch: Scratch::default(),
            failed: 0,
        })
    }

    pub fn network(&self) -> &DirectedNetwork {
        self.net
    }

    pub fn cost(&self) -> &CostModel {
        self.cost
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn params(&self) -> &MpParams {
        &self.params
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn tolls(&self) -> &[f64] {
        &self.tolls
    }

    pub fn set_toll(&mut self, e: EdgeId, tau: f64) {
        self.tolls[e] = tau;
    }

    pub fn failed_updates(&self) -> usize {
        self.failed
    }

    pub fn updates_per_sweep(&self) -> usize {
        self.params.sweep_factor * self.classes.len() * self.net.num_edges()
    }

    pub fn message(&self, class: usize, slot: usize) -> LowerMessage {
        let c = &self.classes[class];
        LowerMessage { working_point: c.working[slot], shape: c.shapes[slot] }
    }

    pub fn working_points(&self, class: usize) -> &[f64] {
        &self.classes[class].working
    }

    /// A cavity view of `class` on an arbitrary layer with its own shapes, sharing
    /// this solver's working points.
    pub fn view<'b, L: EdgeLayer>(&'b self, class: usize, layer: &'b L, shapes: &'b [Shape]) -> CavityView<'b, L> {
        let c = &self.classes[class];
        CavityView {
            topo: &self.topo,
            shapes,
            working: &c.working,
            total_working: (self.classes.len() > 1).then_some(&self.total_working[..]),
            layer,
            resources: &c.resources,
            grounded: c.grounded,
            leaf: &self.params.leaf,
        }
    }

    pub fn lower_shapes(&self, class: usize) -> &[Shape] {
        &self.classes[class].shapes
    }

    /// Full lower-layer energy of edge `e` for `class`.
    pub fn marginal_energy(&self, class: usize, e: EdgeId) -> Result<ConvexPiecewise> {
        let layer = PotentialLayer { cost: self.cost, tolls: &self.tolls };
        self.view(class, &layer, &self.classes[class].shapes).marginal_energy(e)
    }

    /// Draws a random (class, slot) pair and updates it. Returns the size of the change.
    pub fn step(&mut self) -> f64 {
        let (class, slot) = self.random_slot();
        self.update_slot(class, slot)
    }

    /// Draws the (class, slot) pair for the next update.
    pub fn random_slot(&mut self) -> (usize, usize) {
        let class = self.rng.gen_range(0..self.classes.len());
        let slot = self.rng.gen_range(0..self.topo.slots.len());
        (class, slot)
    }

    pub fn update_slot(&mut self, class: usize, s: usize) -> f64 {
        let layer = PotentialLayer { cost: self.cost, tolls: &self.tolls };
        let mut scratch = std::mem::take(&mut self.scratch);
        let outcome = {
            let view = self.view(class, &layer, &self.classes[class].shapes);
            view.update(s, &mut scratch)
        };
        self.scratch = scratch;
        let (shape, leaf) = match outcome {
            Ok(r) => r,
            Err(_) => {
                self.failed += 1;
                return f64::INFINITY;
            }
        };
        let old_shape = self.classes[class].shapes[s];
        self.classes[class].shapes[s] = shape;
        let x_old = self.classes[class].working[s];
        let mut change_floor = 0.0;
        let target = match leaf {
            Some(b) => Some(b),
            None => {
                let e = self.topo.slots[s].edge;
                match self.marginal_energy(class, e) {
                    Ok(f) => {
                        let x = f.argmin();
                        let lr = self.params.learning_rate;
                        Some(lr * x + (1.0 - lr) * x_old)
                    }
                    Err(_) => {
                        self.failed += 1;
                        change_floor = f64::INFINITY;
                        None
                    }
                }
            }
        };
        let mut change = old_shape.distance(&shape).max(change_floor);
        if let Some(x_new) = target.filter(|x| x.is_finite()) {
            let x_new = x_new.max(0.0);
            let c = &mut self.classes[class];
            c.working[s] = x_new;
            if let Shape::Smooth(b) = &mut c.shapes[s] {
                b.slope += b.curvature * (x_new - x_old);
            }
            self.total_working[s] += x_new - x_old;
            change = change.max((x_new - x_old).abs());
        }
        change
    }

    /// One sweep of random updates; returns the largest change seen.
    pub fn sweep(&mut self) -> f64 {
        let mut change = 0.0f64;
        for _ in 0..self.updates_per_sweep() {
            change = change.max(self.step());
        }
        change
    }

    /// Per-class edge flows from the current marginals.
    pub fn class_flows(&self) -> Result<Vec<Vec<f64>>> {
        (0..self.classes.len())
            .map(|c| (0..self.net.num_edges()).map(|e| Ok(self.marginal_energy(c, e)?.argmin())).collect())
            .collect()
    }

    pub fn flows(&self) -> Result<Vec<f64>> {
        Ok(sum_flows(&self.class_flows()?, self.net.num_edges()))
    }

    /// Sweeps until the message change falls below tolerance or the budget runs out.
    pub fn run(&mut self) -> Result<EquilibriumReport> {
        let mut trace = Vec::new();
        let mut converged = false;
        let mut sweeps = 0;
        while sweeps < self.params.max_sweeps {
            let change = self.sweep();
            sweeps += 1;
            let flow_error = match &self.params.reference {
                Some(r) => Some(linf(&self.flows()?, r)),
                None => None,
            };
            trace.push(SweepRecord { sweep: sweeps, message_change: change, flow_error });
            if change < self.params.tolerance {
                converged = true;
                break;
            }
        }
        let class_flows = self.class_flows()?;
        let flows = sum_flows(&class_flows, self.net.num_edges());
        Ok(EquilibriumReport { flows, class_flows, converged, sweeps, trace, failed_updates: self.failed })
    }
}

fn sum_flows(class_flows: &[Vec<f64>], m: usize) -> Vec<f64> {
    let mut total = vec![0.0; m];
    for f in class_flows {
        for (t, x) in total.iter_mut().zip(f) {
            *t += x;
        }
    }
    total
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Single-class equilibrium for the network's own resources and first destination.
pub fn run_equilibrium(
    net: &DirectedNetwork,
    cost: &CostModel,
    tolls: &[f64],
    params: MpParams,
) -> Result<EquilibriumReport> {
    let class = TrafficClass::from_network(net)?;
    EquilibriumSolver::new(net, cost, tolls, &[class], params)?.run()
}

pub fn run_equilibrium_multidest(
    net: &DirectedNetwork,
    cost: &CostModel,
    tolls: &[f64],
    classes: &[TrafficClass],
    params: MpParams,
) -> Result<EquilibriumReport> {
    EquilibriumSolver::new(net, cost, tolls, classes, params)?.run()
}
