use crate::error::Result;
use crate::piecewise::ConvexPiecewise;

/// Local quadratic model of a cavity energy: slope and curvature at its center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub slope: f64,
    pub curvature: f64,
}

/// Shape of a cavity energy `Φ_{i→e}(x_e)` around its center.
///
/// `Smooth` is centered at the slot's working point. `Kinked` has its own
/// breakpoint with one branch per side; a missing branch means flows on that side
/// of the breakpoint are infeasible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Smooth(Branch),
    Kinked { breakpoint: f64, left: Option<Branch>, right: Option<Branch> },
}

impl Shape {
    pub const ZERO: Shape = Shape::Smooth(Branch { slope: 0.0, curvature: 0.0 });

    pub fn is_kinked(&self) -> bool {
        matches!(self, Shape::Kinked { .. })
    }

    /// Expansion center given the slot's working point.
    pub fn center(&self, working_point: f64) -> f64 {
        match *self {
            Shape::Smooth(_) => working_point,
            Shape::Kinked { breakpoint, .. } => breakpoint,
        }
    }

    /// The energy as a function of the edge flow on `[0, ∞)`.
    pub fn function(&self, working_point: f64) -> Result<ConvexPiecewise> {
        match *self {
            Shape::Smooth(b) => Ok(ConvexPiecewise::quadratic(
                working_point,
                b.slope,
                b.curvature,
                0.0,
                f64::INFINITY,
            )),
            Shape::Kinked { breakpoint, left, right } => ConvexPiecewise::kinked(
                breakpoint,
                left.map(|b| (b.slope, b.curvature)),
                right.map(|b| (b.slope, b.curvature)),
                0.0,
            ),
        }
    }

    /// Largest coefficient change between two shapes; infinite if their kind or
    /// wall pattern differs.
    pub fn distance(&self, other: &Shape) -> f64 {
        fn branch(a: &Option<Branch>, b: &Option<Branch>) -> f64 {
            match (a, b) {
                (None, None) => 0.0,
                (Some(a), Some(b)) => (a.slope - b.slope).abs().max((a.curvature - b.curvature).abs()),
                _ => f64::INFINITY,
            }
        }
        match (self, other) {
            (Shape::Smooth(a), Shape::Smooth(b)) => {
                (a.slope - b.slope).abs().max((a.curvature - b.curvature).abs())
            }
            (
                Shape::Kinked { breakpoint: p, left: l1, right: r1 },
                Shape::Kinked { breakpoint: q, left: l2, right: r2 },
            ) => (p - q).abs().max(branch(l1, l2)).max(branch(r1, r2)),
            _ => f64::INFINITY,
        }
    }
}

/// Lower-layer message of one (node, edge) slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerMessage {
    pub working_point: f64,
    pub shape: Shape,
}
