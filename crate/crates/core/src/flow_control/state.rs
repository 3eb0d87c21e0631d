use crate::error::{Error, Result};
use crate::network::{EdgeId, UndirectedNetwork};

/// Control parameters, targets and the flows they are measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlState {
    pub r: Vec<f64>,
    pub r_min: f64,
    pub r_max: f64,
    pub targets: Vec<EdgeId>,
    /// Flow on each target before tuning, same order as `targets`.
    pub baseline: Vec<f64>,
    pub theta: f64,
}

impl ControlState {
    /// Starts from `r ≡ 1` with `baseline_flows` (one entry per edge) as the reference.
    pub fn new(
        net: &UndirectedNetwork,
        baseline_flows: &[f64],
        targets: &[EdgeId],
        theta: f64,
        bounds: (f64, f64),
    ) -> Result<Self> {
        let (r_min, r_max) = bounds;
        if !(r_min > 0.0 && r_min <= 1.0 && 1.0 <= r_max) {
            return Err(Error::InvalidArgument(format!("bounds [{r_min}, {r_max}] must be positive and contain 1")));
        }
        if baseline_flows.len() != net.num_edges() {
            return Err(Error::InvalidArgument("one baseline flow per edge is required".into()));
        }
        let mut baseline = Vec::with_capacity(targets.len());
        for &t in targets {
            if t >= net.num_edges() {
                return Err(Error::InvalidArgument(format!("target {t} is not an edge")));
            }
            if baseline_flows[t].abs() <= 1e-12 {
                return Err(Error::InvalidArgument(format!("target {t} carries no baseline flow")));
            }
            baseline.push(baseline_flows[t]);
        }
        Ok(Self { r: vec![1.0; net.num_edges()], r_min, r_max, targets: targets.to_vec(), baseline, theta })
    }

    pub fn clamp(&self, r: f64) -> f64 {
        r.clamp(self.r_min, self.r_max)
    }

    pub fn in_bounds(&self) -> bool {
        self.r.iter().all(|&v| (self.r_min..=self.r_max).contains(&v))
    }

    /// Relative increment minus threshold for every target.
    pub fn rho(&self, flows: &[f64]) -> Vec<f64> {
        self.targets.iter().zip(&self.baseline).map(|(&t, &x0)| relative_margin(flows[t], x0, self.theta)).collect()
    }

    /// Hinge objective and the per-target margins.
    pub fn objective(&self, flows: &[f64]) -> (f64, Vec<f64>) {
        let rho = self.rho(flows);
        (rho.iter().map(|&p| if p < -HINGE_EPS { -p } else { 0.0 }).sum(), rho)
    }
}

/// Margins within this of zero count as satisfied.
pub const HINGE_EPS: f64 = 1e-12;

pub fn relative_margin(x: f64, x0: f64, theta: f64) -> f64 {
    (x.abs() - x0.abs()) / x0.abs() - theta
}

/// Derivative of one hinge term with respect to the target flow. Zero at the boundary.
pub fn hinge_slope(x: f64, x0: f64, theta: f64) -> f64 {
    if relative_margin(x, x0, theta) < -HINGE_EPS {
        -x.signum() / x0.abs()
    } else {
        0.0
    }
}

/// Random targets among edges whose flow is not negligible.
pub fn select_targets(flows: &[f64], count: usize, rng: &mut crate::rng::Rng) -> Result<Vec<EdgeId>> {
    use rand::seq::SliceRandom;
    let scale = flows.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let candidates: Vec<EdgeId> = (0..flows.len()).filter(|&e| flows[e].abs() > 1e-6 * scale.max(1e-300)).collect();
    if candidates.len() < count {
        return Err(Error::InvalidArgument(format!("only {} edges carry flow, {count} targets asked", candidates.len())));
    }
    let mut picked: Vec<EdgeId> = candidates.choose_multiple(rng, count).copied().collect();
    picked.sort_unstable();
    Ok(picked)
}
