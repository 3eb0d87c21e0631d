//! Resistance tuning on undirected flow networks.
//!
//! Flows minimize `Σ ½ r x²` under conservation. Value messages solve for the flows;
//! gradient messages carry the objective's sensitivity back toward every edge, so a
//! descent step on one `r` needs only local information.

mod ggd;
mod solver;
mod state;

pub use ggd::ggd_gradient;
pub use solver::{mp_flows, FlowParams, FlowSolver, GradientState, ReferenceMethod, UndirectedMessage};
pub use state::{hinge_slope, relative_margin, select_targets, ControlState, HINGE_EPS};

use crate::error::Result;
use crate::network::UndirectedNetwork;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlRecord {
    /// Message-passing updates (or descent iterations for the global baseline).
    pub step: usize,
    pub objective: f64,
    pub min_rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowControlReport {
    pub r: Vec<f64>,
    pub success: bool,
    pub objective: f64,
    pub rho: Vec<f64>,
    pub trajectory: Vec<ControlRecord>,
    /// Every `r` written during the run stayed inside the box.
    pub bounds_respected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowControlParams {
    pub flow: FlowParams,
    /// Cap on joint value/gradient sweeps at fixed `r` before the first control step.
    pub warmup_sweeps: usize,
    /// Budget; ten control steps per sweep at the default interval.
    pub control_sweeps: usize,
}

impl Default for FlowControlParams {
    fn default() -> Self {
        Self { flow: FlowParams::default(), warmup_sweeps: 5000, control_sweeps: 10_000 }
    }
}

fn min_rho(rho: &[f64]) -> f64 {
    rho.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Interleaved value, gradient and control updates.
pub fn run_flow_control(
    net: &UndirectedNetwork,
    control: &ControlState,
    params: &FlowControlParams,
) -> Result<FlowControlReport> {
    let mut solver = FlowSolver::new(net, control.clone(), params.flow.clone())?;
    for _ in 0..params.warmup_sweeps {
        if solver.sweep(true) < params.flow.tolerance {
            break;
        }
    }
    let interval = solver.update_interval();
    let per_sweep = solver.updates_per_sweep();
    let mut trajectory = Vec::new();
    let mut bounds_respected = solver.control().in_bounds();
    let mut steps = 0usize;
    let mut success = false;
    let (obj, rho) = solver.objective()?;
    trajectory.push(ControlRecord { step: 0, objective: obj, min_rho: min_rho(&rho) });
    if obj == 0.0 {
        solver.solve(false);
        success = solver.objective()?.0 == 0.0;
    }
    for _ in 0..if success { 0 } else { params.control_sweeps } {
        for _ in 0..per_sweep {
            solver.step(true);
            steps += 1;
            if steps % interval == 0 {
                let (_, r) = solver.control_step();
                bounds_respected &= (control.r_min..=control.r_max).contains(&r);
            }
        }
        let (obj, rho) = solver.objective()?;
        trajectory.push(ControlRecord { step: steps, objective: obj, min_rho: min_rho(&rho) });
        if obj == 0.0 {
            solver.solve(false);
            if solver.objective()?.0 == 0.0 {
                success = true;
                break;
            }
        }
    }
    solver.solve(false);
    let (objective, rho) = solver.objective()?;
    Ok(FlowControlReport {
        r: solver.r().to_vec(),
        success: success || objective == 0.0,
        objective,
        rho,
        trajectory,
        bounds_respected,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GgdParams {
    pub step: f64,
    pub max_iters: usize,
}

impl Default for GgdParams {
    fn default() -> Self {
        Self { step: 0.05, max_iters: 300 }
    }
}

/// Global gradient descent: exact gradient, all edges stepped at once.
pub fn run_ggd(net: &UndirectedNetwork, control: &ControlState, params: &GgdParams) -> Result<FlowControlReport> {
    let mut state = control.clone();
    let mut trajectory = Vec::new();
    let mut bounds_respected = state.in_bounds();
    for it in 0..=params.max_iters {
        let (flows, grad) = ggd_gradient(net, &state)?;
        let (obj, rho) = state.objective(&flows);
        trajectory.push(ControlRecord { step: it, objective: obj, min_rho: min_rho(&rho) });
        if obj == 0.0 || it == params.max_iters {
            return Ok(FlowControlReport {
                r: state.r,
                success: obj == 0.0,
                objective: obj,
                rho,
                trajectory,
                bounds_respected,
            });
        }
        for (r, g) in state.r.iter_mut().zip(&grad) {
            *r = (*r - params.step * g).clamp(control.r_min, control.r_max);
        }
        bounds_respected &= state.in_bounds();
    }
    unreachable!()
}
