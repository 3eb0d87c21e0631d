//! Convex piecewise-quadratic functions of one variable with at most a few pieces.

use crate::error::{Error, Result};

const CAPACITY: usize = 4;

/// One quadratic piece on `[start, end]`, described by its value and right
/// derivative at `start` and its constant curvature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub value: f64,
    pub slope: f64,
    pub curvature: f64,
}

impl Piece {
    fn end_slope(&self) -> f64 {
        if self.end.is_infinite() {
            if self.curvature > 0.0 { f64::INFINITY } else { self.slope }
        } else {
            self.slope + self.curvature * (self.end - self.start)
        }
    }

    fn value_at(&self, x: f64) -> f64 {
        let d = x - self.start;
        self.value + self.slope * d + 0.5 * self.curvature * d * d
    }

    fn slope_at(&self, x: f64) -> f64 {
        self.slope + self.curvature * (x - self.start)
    }
}

/// Convex function on a closed interval (possibly a single point or unbounded
/// above), stored as contiguous quadratic pieces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexPiecewise {
    pieces: [Piece; CAPACITY],
    len: usize,
}

const EMPTY: Piece = Piece { start: 0.0, end: 0.0, value: 0.0, slope: 0.0, curvature: 0.0 };

impl ConvexPiecewise {
    fn from_slice(ps: &[Piece]) -> Self {
        assert!(!ps.is_empty() && ps.len() <= CAPACITY, "piece count {} out of range", ps.len());
        let mut pieces = [EMPTY; CAPACITY];
        pieces[..ps.len()].copy_from_slice(ps);
        Self { pieces, len: ps.len() }
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces[..self.len]
    }

    /// `slope·(x - center) + curvature/2·(x - center)²` on `[lo, hi]`.
    pub fn quadratic(center: f64, slope: f64, curvature: f64, lo: f64, hi: f64) -> Self {
        let d = lo - center;
        Self::from_slice(&[Piece {
            start: lo,
            end: hi,
            value: slope * d + 0.5 * curvature * d * d,
            slope: slope + curvature * d,
            curvature,
        }])
    }

    /// Two quadratic branches meeting at `breakpoint` (value 0 there), restricted
    /// to `[lo, ∞)`. A missing branch is a wall: the domain stops at the breakpoint.
    pub fn kinked(
        breakpoint: f64,
        left: Option<(f64, f64)>,
        right: Option<(f64, f64)>,
        lo: f64,
    ) -> Result<Self> {
        if let (Some((ls, _)), Some((rs, _))) = (left, right) {
            if ls > rs + 1e-9 * (1.0 + ls.abs().max(rs.abs())) {
                return Err(Error::Consistency(format!(
                    "branch slopes out of order at breakpoint {breakpoint}: left {ls}, right {rs}"
                )));
            }
        }
        let mut ps = Vec::with_capacity(2);
        if breakpoint > lo {
            if let Some((s, k)) = left {
                let d = lo - breakpoint;
                ps.push(Piece { start: lo, end: breakpoint, value: s * d + 0.5 * k * d * d, slope: s + k * d, curvature: k });
            }
        }
        let b = breakpoint.max(lo);
        match right {
            Some((s, k)) => {
                let d = b - breakpoint;
                ps.push(Piece { start: b, end: f64::INFINITY, value: s * d + 0.5 * k * d * d, slope: s + k * d, curvature: k });
            }
            None if ps.is_empty() => {
                if breakpoint < lo {
                    return Err(Error::Infeasible(format!("breakpoint {breakpoint} below domain start {lo}")));
                }
                ps.push(Piece { start: b, end: b, value: 0.0, slope: 0.0, curvature: 0.0 });
            }
            None => {}
        }
        if ps.is_empty() {
            // Left branch only but breakpoint at or below lo.
            ps.push(Piece { start: b, end: b, value: 0.0, slope: 0.0, curvature: 0.0 });
        }
        Ok(Self::from_slice(&ps))
    }

    pub fn lower(&self) -> f64 {
        self.pieces[0].start
    }

    pub fn upper(&self) -> f64 {
        self.pieces[self.len - 1].end
    }

    /// Adds `slope·(x - center) + curvature/2·(x - center)²` in place.
    pub fn add_quadratic(&mut self, center: f64, slope: f64, curvature: f64) {
        for p in &mut self.pieces[..self.len] {
            let d = p.start - center;
            p.value += slope * d + 0.5 * curvature * d * d;
            p.slope += slope + curvature * d;
            p.curvature += curvature;
        }
    }

    /// Adds `t·x` in place.
    pub fn add_linear(&mut self, t: f64) {
        for p in &mut self.pieces[..self.len] {
            p.value += t * p.start;
            p.slope += t;
        }
    }

    fn piece_index(&self, x: f64) -> usize {
        let ps = self.pieces();
        ps.iter().position(|p| x < p.end).unwrap_or(ps.len() - 1)
    }

    pub fn value(&self, x: f64) -> f64 {
        if x < self.lower() || x > self.upper() {
            return f64::INFINITY;
        }
        self.pieces[self.piece_index(x)].value_at(x)
    }

    /// Right derivative; `+∞` at or beyond the upper end of a bounded domain.
    pub fn derivative_right(&self, x: f64) -> f64 {
        if x >= self.upper() {
            return f64::INFINITY;
        }
        if x < self.lower() {
            return f64::NEG_INFINITY;
        }
        self.pieces[self.piece_index(x)].slope_at(x)
    }

    /// Left derivative; `-∞` at or below the lower end.
    pub fn derivative_left(&self, x: f64) -> f64 {
        if x <= self.lower() {
            return f64::NEG_INFINITY;
        }
        if x > self.upper() {
            return f64::INFINITY;
        }
        let ps = self.pieces();
        let k = ps.iter().position(|p| x <= p.end).unwrap_or(ps.len() - 1);
        ps[k].slope_at(x)
    }

    /// Sum of two functions on the intersection of their domains.
    pub fn add(&self, other: &Self) -> Result<Self> {
        let lo = self.lower().max(other.lower());
        let hi = self.upper().min(other.upper());
        if lo > hi {
            return Err(Error::Infeasible(format!("empty domain [{lo}, {hi}]")));
        }
        if lo == hi {
            let v = self.value(lo) + other.value(lo);
            return Ok(Self::from_slice(&[Piece { start: lo, end: hi, value: v, slope: 0.0, curvature: 0.0 }]));
        }
        let mut knots = [0.0; 2 * CAPACITY + 2];
        let mut n = 0;
        knots[n] = lo;
        n += 1;
        for p in self.pieces().iter().chain(other.pieces()) {
            for x in [p.start, p.end] {
                if x > lo && x < hi {
                    knots[n] = x;
                    n += 1;
                }
            }
        }
        knots[..n].sort_by(f64::total_cmp);
        let mut out = [EMPTY; CAPACITY];
        let mut len = 0;
        for k in 0..n {
            let a = knots[k];
            if k > 0 && a == knots[k - 1] {
                continue;
            }
            let b = knots[k + 1..n].iter().copied().find(|&x| x > a).unwrap_or(hi);
            let (pa, pb) = (&self.pieces[self.piece_index(a)], &other.pieces[other.piece_index(a)]);
            assert!(len < CAPACITY, "too many pieces in sum");
            out[len] = Piece {
                start: a,
                end: b,
                value: pa.value_at(a) + pb.value_at(a),
                slope: pa.slope_at(a) + pb.slope_at(a),
                curvature: pa.curvature + pb.curvature,
            };
            len += 1;
        }
        Ok(Self { pieces: out, len })
    }

    /// Checks that derivatives never decrease across knots.
    pub fn check_convex(&self) -> Result<()> {
        let ps = self.pieces();
        for w in ps.windows(2) {
            let (l, r) = (w[0].end_slope(), w[1].slope);
            if l > r + 1e-9 * (1.0 + l.abs().max(r.abs())) {
                return Err(Error::Consistency(format!("non-convex energy at {}: {l} > {r}", w[1].start)));
            }
        }
        if ps.iter().any(|p| p.curvature < -1e-12) {
            return Err(Error::Consistency("negative curvature".into()));
        }
        Ok(())
    }

    /// Smallest minimizer of `f(x) - λx`, i.e. the inverse of the subdifferential.
    /// May be `+∞` when the function is unbounded above with flat slope below `λ`.
    pub fn inverse_derivative(&self, lambda: f64) -> f64 {
        for p in self.pieces() {
            if lambda <= p.slope {
                return p.start;
            }
            let d1 = p.end_slope();
            if lambda <= d1 {
                return if p.curvature > 0.0 { p.start + (lambda - p.slope) / p.curvature } else { p.start };
            }
        }
        self.upper()
    }

    /// `d/dλ` of `inverse_derivative` away from its kinks.
    pub fn inverse_slope(&self, lambda: f64) -> f64 {
        for p in self.pieces() {
            if lambda <= p.slope {
                return 0.0;
            }
            if lambda < p.end_slope() {
                return if p.curvature > 0.0 { 1.0 / p.curvature } else { 0.0 };
            }
        }
        0.0
    }

    /// Values of `λ` where `inverse_derivative` changes slope.
    pub fn derivative_knots(&self, out: &mut Vec<f64>) {
        for p in self.pieces() {
            out.push(p.slope);
            let d1 = p.end_slope();
            if d1.is_finite() {
                out.push(d1);
            }
        }
    }

    pub fn argmin(&self) -> f64 {
        self.inverse_derivative(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_argmin_clamps() {
        let f = ConvexPiecewise::quadratic(1.0, 0.0, 2.0, 0.0, f64::INFINITY);
        assert!((f.argmin() - 1.0).abs() < 1e-15);
        let g = ConvexPiecewise::quadratic(1.0, 5.0, 2.0, 0.0, f64::INFINITY);
        assert_eq!(g.argmin(), 0.0);
    }

    #[test]
    fn kink_holds_a_range_of_prices() {
        let f = ConvexPiecewise::kinked(2.0, Some((-1.0, 1.0)), Some((1.0, 1.0)), 0.0).unwrap();
        for l in [-1.0, -0.5, 0.0, 0.9, 1.0] {
            assert_eq!(f.inverse_derivative(l), 2.0);
        }
        assert!((f.inverse_derivative(2.0) - 3.0).abs() < 1e-15);
        assert!((f.inverse_derivative(-2.0) - 1.0).abs() < 1e-15);
        assert_eq!(f.inverse_derivative(-10.0), 0.0);
    }

    #[test]
    fn walls_bound_the_domain() {
        let f = ConvexPiecewise::kinked(1.5, None, None, 0.0).unwrap();
        assert_eq!(f.inverse_derivative(-1e9), 1.5);
        assert_eq!(f.inverse_derivative(1e9), 1.5);
        let g = ConvexPiecewise::kinked(1.5, Some((0.0, 1.0)), None, 0.0).unwrap();
        assert_eq!(g.upper(), 1.5);
        assert_eq!(g.inverse_derivative(5.0), 1.5);
    }

    #[test]
    fn out_of_order_branches_rejected() {
        assert!(ConvexPiecewise::kinked(1.0, Some((2.0, 1.0)), Some((1.0, 1.0)), 0.0).is_err());
    }

    #[test]
    fn sum_matches_pointwise() {
        let f = ConvexPiecewise::kinked(1.0, Some((-1.0, 2.0)), Some((0.5, 1.0)), 0.0).unwrap();
        let g = ConvexPiecewise::kinked(2.0, Some((-0.3, 0.0)), Some((0.2, 3.0)), 0.0).unwrap();
        let h = f.add(&g).unwrap();
        h.check_convex().unwrap();
        for k in 0..40 {
            let x = k as f64 * 0.1;
            assert!((h.value(x) - f.value(x) - g.value(x)).abs() < 1e-12);
        }
    }
}
