use crate::cost_model::CostModel;
use crate::error::{Error, Result};
use crate::network::{DirectedNetwork, EdgeId, NodeId};
use crate::piecewise::ConvexPiecewise;

use super::message::{Branch, Shape};

/// A (node, edge) pair. Slot `2e` sits at the head of edge `e`, slot `2e + 1` at
/// its tail, so `s ^ 1` is the opposite end.
#[derive(Debug, Clone)]
pub struct SlotInfo {
    pub node: NodeId,
    pub edge: EdgeId,
    /// Incidence of `edge` at `node`.
    pub sign: i8,
    /// Upstream slots `(k, e')` for `e' ∈ ∂node \ edge`, with the incidence of `e'` at `node`.
    pub upstream: Vec<(usize, i8)>,
}

#[derive(Debug, Clone)]
pub struct Topology {
    pub slots: Vec<SlotInfo>,
}

impl Topology {
    pub fn new(net: &DirectedNetwork) -> Self {
        let slots = (0..2 * net.num_edges())
            .map(|s| {
                let e = s / 2;
                let edge = net.edge(e);
                let (node, sign) = if s % 2 == 0 { (edge.head, -1) } else { (edge.tail, 1) };
                let upstream = net
                    .incident_edges(node)
                    .filter(|&f| f != e)
                    .map(|f| {
                        let other = net.other_end(f, node);
                        let slot = if net.edge(f).head == other { 2 * f } else { 2 * f + 1 };
                        (slot, net.incidence(node, f))
                    })
                    .collect();
                SlotInfo { node, edge: e, sign, upstream }
            })
            .collect();
        Self { slots }
    }

    pub fn slot(net: &DirectedNetwork, node: NodeId, edge: EdgeId) -> usize {
        if net.edge(edge).head == node { 2 * edge } else { 2 * edge + 1 }
    }
}

/// Edge cost seen by a message layer: first and second derivative at a flow.
pub trait EdgeLayer {
    fn derivatives(&self, e: EdgeId, x: f64) -> (f64, f64);
}

/// `φ_e` with tolls: the equilibrium (lower) layer.
pub struct PotentialLayer<'a> {
    pub cost: &'a CostModel,
    pub tolls: &'a [f64],
}

impl EdgeLayer for PotentialLayer<'_> {
    fn derivatives(&self, e: EdgeId, x: f64) -> (f64, f64) {
        (self.cost.dphi(e, x, self.tolls[e]), self.cost.ddphi(e, x))
    }
}

/// `σ_e = x ℓ_e(x)`: the social-cost (upper) layer.
pub struct SocialLayer<'a> {
    pub cost: &'a CostModel,
}

impl EdgeLayer for SocialLayer<'_> {
    fn derivatives(&self, e: EdgeId, x: f64) -> (f64, f64) {
        (self.cost.dsigma(e, x), self.cost.ddsigma(e, x))
    }
}

/// Root of the cavity conservation residual `R(μ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CavityRoot {
    Regular { mu: f64, slope: f64 },
    /// `R ≡ 0` on `[lo, hi]`; slopes of `R` just outside the plateau.
    Plateau { lo: f64, hi: f64, slope_below: f64, slope_above: f64 },
}

impl CavityRoot {
    pub fn is_degenerate(&self) -> bool {
        matches!(self, CavityRoot::Plateau { .. })
    }

    /// Message shape for a slot with incidence `sign`, held at edge flow `x_e`.
    pub fn shape(&self, sign: i8, x_e: f64) -> Shape {
        let b = f64::from(sign);
        let branch = |mu: f64, s: f64| {
            if mu.is_finite() && s != 0.0 {
                Some(Branch { slope: b * mu, curvature: -1.0 / s })
            } else {
                None
            }
        };
        match *self {
            CavityRoot::Regular { mu, slope } => Shape::Smooth(Branch { slope: b * mu, curvature: -1.0 / slope }),
            CavityRoot::Plateau { lo, hi, slope_below, slope_above } => {
                let (left, right) = if sign < 0 {
                    (branch(hi, slope_above), branch(lo, slope_below))
                } else {
                    (branch(lo, slope_below), branch(hi, slope_above))
                };
                Shape::Kinked { breakpoint: x_e, left, right }
            }
        }
    }
}

const ZERO_SLOPE: f64 = 1e-12;

/// Outcome of a root search: a root, or the residual that no multiplier can cancel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RootSearch {
    Found(CavityRoot),
    /// `R` never crosses zero; the value is its limit closest to zero.
    Excess(f64),
}

/// As [`search_root`], with an unreachable residual reported as infeasible.
pub fn solve_root(terms: &[(i8, ConvexPiecewise)], constant: f64, knots: &mut Vec<f64>) -> Result<CavityRoot> {
    match search_root(terms, constant, knots)? {
        RootSearch::Found(r) => Ok(r),
        RootSearch::Excess(r) => Err(Error::Infeasible(format!("cavity residual bounded away from zero by {r}"))),
    }
}

/// Solves `constant + Σ B·x_B(-B·μ) = 0` where each `x_B` is the inverse
/// derivative of a convex term. `R` is piecewise linear and non-increasing, so
/// the root is located exactly by scanning its breakpoints.
pub fn search_root(terms: &[(i8, ConvexPiecewise)], constant: f64, knots: &mut Vec<f64>) -> Result<RootSearch> {
    let eval = |mu: f64| -> f64 {
        let mut r = constant;
        for (b, f) in terms {
            let b = f64::from(*b);
            r += b * f.inverse_derivative(-b * mu);
        }
        r
    };
    let slope_at = |mu: f64| -> f64 {
        -terms.iter().map(|(b, f)| f.inverse_slope(-f64::from(*b) * mu)).sum::<f64>()
    };
    knots.clear();
    for (b, f) in terms {
        let start = knots.len();
        f.derivative_knots(knots);
        for k in &mut knots[start..] {
            *k *= -f64::from(*b);
        }
    }
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let tol = 1e-12 * (1.0 + constant.abs());
    if knots.is_empty() {
        let r = eval(0.0);
        if r.abs() <= tol {
            return Ok(RootSearch::Found(CavityRoot::Plateau {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
                slope_below: 0.0,
                slope_above: 0.0,
            }));
        }
        return Ok(RootSearch::Excess(r));
    }
    let vals: Vec<f64> = knots.iter().map(|&m| eval(m)).collect();
    if vals.iter().any(|v| v.is_nan()) {
        return Err(Error::Consistency("cavity residual undefined".into()));
    }
    let n = knots.len();
    let tail_below = || {
        let d = 1.0 + knots[0].abs();
        (vals[0] - eval(knots[0] - d)) / d
    };
    let tail_above = || {
        let d = 1.0 + knots[n - 1].abs();
        (eval(knots[n - 1] + d) - vals[n - 1]) / d
    };
    let segment = |k: usize| -> f64 {
        if vals[k].is_infinite() || vals[k + 1].is_infinite() {
            return f64::NEG_INFINITY;
        }
        let s = slope_at(0.5 * (knots[k] + knots[k + 1]));
        if s != 0.0 { s } else { (vals[k + 1] - vals[k]) / (knots[k + 1] - knots[k]) }
    };
    let first_nonpos = vals.iter().position(|&v| v <= tol);
    let last_nonneg = vals.iter().rposition(|&v| v >= -tol);
    match (first_nonpos, last_nonneg) {
        (None, _) => {
            let s = tail_above();
            if s < -ZERO_SLOPE {
                let mu = if s.is_infinite() { knots[n - 1] } else { knots[n - 1] - vals[n - 1] / s };
                Ok(RootSearch::Found(CavityRoot::Regular { mu, slope: s }))
            } else {
                Ok(RootSearch::Excess(vals[n - 1]))
            }
        }
        (_, None) => {
            let s = tail_below();
            if s < -ZERO_SLOPE {
                let mu = if s.is_infinite() { knots[0] } else { knots[0] - vals[0] / s };
                Ok(RootSearch::Found(CavityRoot::Regular { mu, slope: s }))
            } else {
                Ok(RootSearch::Excess(vals[0]))
            }
        }
        (Some(a), Some(b)) if a > b => {
            // Sign change strictly inside segment (b, a).
            let (ka, kb) = (knots[a], knots[b]);
            let mu = if vals[b] == f64::INFINITY {
                ka
            } else if vals[a] == f64::NEG_INFINITY {
                kb
            } else {
                (kb + vals[b] * (ka - kb) / (vals[b] - vals[a])).clamp(kb, ka)
            };
            Ok(RootSearch::Found(CavityRoot::Regular { mu, slope: segment(b) }))
        }
        (Some(a), Some(b)) => {
            let slope_below = if a == 0 { tail_below() } else { segment(a - 1) };
            let slope_above = if b == n - 1 { tail_above() } else { segment(b) };
            let below_flat = slope_below.abs() <= ZERO_SLOPE || slope_below.is_nan();
            let above_flat = slope_above.abs() <= ZERO_SLOPE || slope_above.is_nan();
            let lo = if a == 0 && below_flat { f64::NEG_INFINITY } else { knots[a] };
            let hi = if b == n - 1 && above_flat { f64::INFINITY } else { knots[b] };
            if lo < hi {
                Ok(RootSearch::Found(CavityRoot::Plateau {
                    lo,
                    hi,
                    slope_below: if lo.is_finite() { slope_below } else { 0.0 },
                    slope_above: if hi.is_finite() { slope_above } else { 0.0 },
                }))
            } else {
                // Isolated zero at a breakpoint: average the stiffness of both sides.
                let alpha = 0.5 * (-1.0 / slope_below - 1.0 / slope_above);
                Ok(RootSearch::Found(CavityRoot::Regular { mu: knots[a], slope: -1.0 / alpha }))
            }
        }
    }
}

/// Reusable buffers for cavity solves.
#[derive(Debug, Default)]
pub struct Scratch {
    terms: Vec<(i8, ConvexPiecewise)>,
    knots: Vec<f64>,
}

/// Everything one class needs to update its messages on one layer.
pub struct CavityView<'a, L: EdgeLayer> {
    pub topo: &'a Topology,
    pub shapes: &'a [Shape],
    pub working: &'a [f64],
    /// Sum of all classes' working points per slot, when there is more than one class.
    pub total_working: Option<&'a [f64]>,
    pub layer: &'a L,
    pub resources: &'a [f64],
    /// Grounded destination, if any.
    pub grounded: Option<NodeId>,
    pub leaf: &'a LeafRule,
}

/// How effective leaves are detected.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafRule {
    /// Relative proximity threshold between working point and effective resource.
    pub threshold: f64,
    /// Accept a leaf only if its breakpoint minimizes the full edge energy.
    pub confirm: bool,
    /// Probe a leaf when either criterion holds (`true`) or only when both hold.
    pub either: bool,
}

impl Default for LeafRule {
    fn default() -> Self {
        Self { threshold: 1e-3, confirm: true, either: true }
    }
}

impl<L: EdgeLayer> CavityView<'_, L> {
    fn offset(&self, s: usize) -> f64 {
        self.total_working.map_or(0.0, |t| t[s] - self.working[s])
    }

    /// Cavity energy of slot `s` plus its own edge cost, expanded at the slot's center.
    pub fn energy_with_edge(&self, s: usize, edge_weight: f64) -> Result<ConvexPiecewise> {
        let shape = self.shapes[s];
        let c = shape.center(self.working[s]);
        let mut f = shape.function(self.working[s])?;
        let (d1, d2) = self.layer.derivatives(self.topo.slots[s].edge, self.offset(s) + c);
        f.add_quadratic(c, edge_weight * d1, edge_weight * d2);
        Ok(f)
    }

    pub fn effective_resource(&self, s: usize) -> f64 {
        let info = &self.topo.slots[s];
        let mut l = self.resources[info.node];
        for &(u, b) in &info.upstream {
            if let Shape::Kinked { breakpoint, .. } = self.shapes[u] {
                l += f64::from(b) * breakpoint;
            }
        }
        l
    }

    fn fill_terms(&self, s: usize, terms: &mut Vec<(i8, ConvexPiecewise)>) -> Result<()> {
        terms.clear();
        for &(u, b) in &self.topo.slots[s].upstream {
            terms.push((b, self.energy_with_edge(u, 1.0)?));
        }
        Ok(())
    }

    /// Root of the cavity problem of slot `s` with its edge flow held at `x_e`.
    pub fn solve_cavity_root(&self, s: usize, x_e: f64, scratch: &mut Scratch) -> Result<CavityRoot> {
        let info = &self.topo.slots[s];
        self.fill_terms(s, &mut scratch.terms)?;
        solve_root(&scratch.terms, self.resources[info.node] + f64::from(info.sign) * x_e, &mut scratch.knots)
    }

    /// Full energy of edge `e`: both cavity energies plus the edge cost split
    /// evenly between the two expansion centers.
    pub fn marginal_energy(&self, e: EdgeId) -> Result<ConvexPiecewise> {
        let f = self.energy_with_edge(2 * e, 0.5)?;
        let g = self.energy_with_edge(2 * e + 1, 0.5)?;
        let h = f.add(&g)?;
        h.check_convex()?;
        Ok(h)
    }

    /// New shape for slot `s`, and the breakpoint if an effective leaf was accepted.
    pub fn update(&self, s: usize, scratch: &mut Scratch) -> Result<(Shape, Option<f64>)> {
        let info = &self.topo.slots[s];
        if self.grounded == Some(info.node) {
            return Ok((Shape::ZERO, None));
        }
        self.fill_terms(s, &mut scratch.terms)?;
        let Scratch { terms, knots } = scratch;
        let sign = f64::from(info.sign);
        let lam = self.resources[info.node];
        let x_tilde = self.working[s];

        let lam_eff = self.effective_resource(s);
        let candidate = -sign * lam_eff;
        if candidate >= 0.0 {
            let thr = self.leaf.threshold * candidate.max(1.0);
            let clamped = info
                .upstream
                .iter()
                .all(|&(u, _)| self.shapes[u].is_kinked() || self.working[u] <= thr);
            let near = (x_tilde - candidate).abs() <= thr;
            let probe = if self.leaf.either { clamped || near } else { clamped && near };
            if probe {
                let root = solve_root(terms, lam + sign * candidate, knots)?;
                if root.is_degenerate() {
                    let shape = root.shape(info.sign, candidate);
                    if !self.leaf.confirm || self.confirms(s, shape, candidate)? {
                        return Ok((shape, Some(candidate)));
                    }
                }
            }
        }
        match search_root(terms, lam + sign * x_tilde, knots)? {
            RootSearch::Found(root) => Ok((root.shape(info.sign, x_tilde), None)),
            RootSearch::Excess(r) => {
                // Held flow is outside the cavity's feasible range: move to its edge,
                // where the root is a half-infinite plateau and the message gets a wall.
                let bound = x_tilde - sign * r;
                if bound < 0.0 {
                    return Err(Error::Infeasible(format!("cavity needs negative flow {bound}")));
                }
                let root = solve_root(terms, lam + sign * bound, knots)?;
                Ok((root.shape(info.sign, bound), None))
            }
        }
    }

    /// Whether `b` minimizes the full edge energy when slot `s` carries `shape`.
    fn confirms(&self, s: usize, shape: Shape, b: f64) -> Result<bool> {
        let mut f = shape.function(self.working[s])?;
        let (d1, d2) = self.layer.derivatives(self.topo.slots[s].edge, self.offset(s) + b);
        f.add_quadratic(b, 0.5 * d1, 0.5 * d2);
        let g = self.energy_with_edge(s ^ 1, 0.5)?;
        let h = match f.add(&g) {
            Ok(h) => h,
            Err(_) => return Ok(false),
        };
        let tol = 1e-9 * (1.0 + d1.abs());
        let left = h.derivative_left(b);
        let right = h.derivative_right(b);
        Ok(left <= tol && right >= -tol)
    }
}
