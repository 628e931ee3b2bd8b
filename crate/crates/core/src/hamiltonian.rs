//! Hamiltonians `H(p, p₀) = sup_{(v,w) ∈ F} p·v + p₀w − L(v,w)` for the
//! quadratic running cost `L = ½|v|² + ½δ²w²`, and the Euclidean projection
//! onto `K_H = {(a, b, c) : a + H(b, c) ≤ 0}`.
//!
//! Every supported variant is separable: `H(b, c) = Σᵢ h(bᵢ) + h₀(c)` with
//! one-dimensional convex pieces, which keeps the proximal map of `s·H`
//! closed-form and the projection a scalar root-find.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UdotError};
use crate::grid::{SpatialBox, MAX_DIM};

/// Tolerance used by [`feasible_f`].
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Absolute tolerance on the KKT residual of the projection (scaled up for
/// points of large magnitude).
const PROJECTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum HamiltonianSpec {
    /// Wasserstein–Fisher–Rao: unconstrained `(v, w)`.
    Wfr { delta: f64 },
    /// Mass-conserving transport: `w = 0`.
    Balanced,
    /// `|vᵢ| ≤ v_max` componentwise and `w ∈ [w_min, w_max]`.
    #[serde(rename = "box")]
    BoxConstrained { delta: f64, v_max: f64, w_min: f64, w_max: f64 },
}

impl HamiltonianSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(UdotError::InvalidHamiltonian(m.to_string()));
        match *self {
            HamiltonianSpec::Wfr { delta } if !(delta > 0.0 && delta.is_finite()) => {
                bad("delta must be positive")
            }
            HamiltonianSpec::BoxConstrained { delta, v_max, w_min, w_max } => {
                if !(delta > 0.0 && delta.is_finite()) {
                    bad("delta must be positive")
                } else if !(v_max > 0.0 && v_max.is_finite()) {
                    bad("v_max must be positive")
                } else if !(w_min.is_finite() && w_max.is_finite() && w_min <= w_max) {
                    bad("need finite w_min <= w_max")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Whether the constraint set forces `w = 0`.
    pub fn conserves_mass(&self) -> bool {
        match *self {
            HamiltonianSpec::Balanced => true,
            HamiltonianSpec::BoxConstrained { w_min, w_max, .. } => w_min == 0.0 && w_max == 0.0,
            HamiltonianSpec::Wfr { .. } => false,
        }
    }

    /// Whether mass balance is enforced as a hard precondition of a solve.
    pub fn is_balanced(&self) -> bool {
        matches!(self, HamiltonianSpec::Balanced)
    }

    fn b_piece(&self) -> Piece {
        match *self {
            HamiltonianSpec::Wfr { .. } | HamiltonianSpec::Balanced => Piece::Quad { k: 1.0 },
            HamiltonianSpec::BoxConstrained { v_max, .. } => Piece::Huber { v_max },
        }
    }

    fn c_piece(&self) -> Piece {
        match *self {
            HamiltonianSpec::Wfr { delta } => Piece::Quad { k: 1.0 / (delta * delta) },
            HamiltonianSpec::Balanced => Piece::Zero,
            HamiltonianSpec::BoxConstrained { delta, w_min, w_max, .. } => {
                Piece::ClampQuad { delta2: delta * delta, w_min, w_max }
            }
        }
    }
}

/// One-dimensional convex building blocks of a separable Hamiltonian.
#[derive(Debug, Clone, Copy)]
enum Piece {
    /// `½ k p²`
    Quad { k: f64 },
    Zero,
    /// Conjugate of `½v²` restricted to `|v| ≤ v_max`.
    Huber { v_max: f64 },
    /// Conjugate of `½δ²w²` restricted to `w ∈ [w_min, w_max]`.
    ClampQuad { delta2: f64, w_min: f64, w_max: f64 },
}

impl Piece {
    fn value(self, p: f64) -> f64 {
        match self {
            Piece::Quad { k } => 0.5 * k * p * p,
            Piece::Zero => 0.0,
            Piece::Huber { v_max } => {
                if p.abs() <= v_max {
                    0.5 * p * p
                } else {
                    v_max * p.abs() - 0.5 * v_max * v_max
                }
            }
            Piece::ClampQuad { delta2, w_min, w_max } => {
                let w = (p / delta2).clamp(w_min, w_max);
                p * w - 0.5 * delta2 * w * w
            }
        }
    }

    fn deriv(self, p: f64) -> f64 {
        match self {
            Piece::Quad { k } => k * p,
            Piece::Zero => 0.0,
            Piece::Huber { v_max } => p.clamp(-v_max, v_max),
            Piece::ClampQuad { delta2, w_min, w_max } => (p / delta2).clamp(w_min, w_max),
        }
    }

    fn second(self, p: f64) -> f64 {
        match self {
            Piece::Quad { k } => k,
            Piece::Zero => 0.0,
            Piece::Huber { v_max } => {
                if p.abs() < v_max {
                    1.0
                } else {
                    0.0
                }
            }
            Piece::ClampQuad { delta2, w_min, w_max } => {
                let w = p / delta2;
                if w > w_min && w < w_max {
                    1.0 / delta2
                } else {
                    0.0
                }
            }
        }
    }

    /// `argmin_p ½(p − y)² + s·h(p)`, `s ≥ 0`.
    fn prox(self, y: f64, s: f64) -> f64 {
        match self {
            Piece::Quad { k } => y / (1.0 + s * k),
            Piece::Zero => y,
            Piece::Huber { v_max } => {
                if y.abs() <= v_max * (1.0 + s) {
                    y / (1.0 + s)
                } else {
                    y - s * v_max * y.signum()
                }
            }
            Piece::ClampQuad { delta2, w_min, w_max } => {
                if y <= w_min * (delta2 + s) {
                    y - s * w_min
                } else if y >= w_max * (delta2 + s) {
                    y - s * w_max
                } else {
                    y * delta2 / (delta2 + s)
                }
            }
        }
    }
}

/// A pointwise sample `(a, b, c)` of a stacked field. Unused trailing
/// entries of `b` are zero, which every Hamiltonian maps to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KPoint {
    pub a: f64,
    pub b: [f64; MAX_DIM],
    pub c: f64,
}

impl KPoint {
    pub fn new(a: f64, b: &[f64], c: f64) -> Self {
        let mut bb = [0.0; MAX_DIM];
        bb[..b.len()].copy_from_slice(b);
        KPoint { a, b: bb, c }
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.c.is_finite() && self.b.iter().all(|v| v.is_finite())
    }

    pub fn dist(&self, other: &KPoint) -> f64 {
        let mut s = (self.a - other.a).powi(2) + (self.c - other.c).powi(2);
        for i in 0..MAX_DIM {
            s += (self.b[i] - other.b[i]).powi(2);
        }
        s.sqrt()
    }

    /// `a + H(b, c)`; non-positive exactly on `K_H`.
    pub fn constraint(&self, spec: &HamiltonianSpec) -> f64 {
        self.a + evaluate(spec, &self.b, self.c)
    }
}

/// `H(b, c)`.
pub fn evaluate(spec: &HamiltonianSpec, b: &[f64], c: f64) -> f64 {
    let bp = spec.b_piece();
    b.iter().map(|&p| bp.value(p)).sum::<f64>() + spec.c_piece().value(c)
}

/// Running cost `L(v, w) = ½|v|² + ½δ²w²` (the `w` term is dropped when
/// `w` is pinned to zero).
pub fn lagrangian_cost(spec: &HamiltonianSpec, v: &[f64], w: f64) -> f64 {
    let kinetic = 0.5 * v.iter().map(|x| x * x).sum::<f64>();
    match *spec {
        HamiltonianSpec::Wfr { delta } | HamiltonianSpec::BoxConstrained { delta, .. } => {
            kinetic + 0.5 * delta * delta * w * w
        }
        HamiltonianSpec::Balanced => kinetic,
    }
}

/// Membership of `(v, w)` in the constraint set `F`, up to
/// [`FEASIBILITY_TOL`]. The Wasserstein–Fisher–Rao set is all of `R^{d+1}`.
pub fn feasible_f(spec: &HamiltonianSpec, v: &[f64], w: f64) -> bool {
    match *spec {
        HamiltonianSpec::Wfr { .. } => true,
        HamiltonianSpec::Balanced => w.abs() <= FEASIBILITY_TOL,
        HamiltonianSpec::BoxConstrained { v_max, w_min, w_max, .. } => {
            v.iter().all(|x| x.abs() <= v_max + FEASIBILITY_TOL)
                && w >= w_min - FEASIBILITY_TOL
                && w <= w_max + FEASIBILITY_TOL
        }
    }
}

/// Clamp `(v, w)` into `F`.
pub fn clamp_into_f(spec: &HamiltonianSpec, v: &mut [f64], w: &mut f64) {
    match *spec {
        HamiltonianSpec::Wfr { .. } => {}
        HamiltonianSpec::Balanced => *w = 0.0,
        HamiltonianSpec::BoxConstrained { v_max, w_min, w_max, .. } => {
            v.iter_mut().for_each(|x| *x = x.clamp(-v_max, v_max));
            *w = w.clamp(w_min, w_max);
        }
    }
}

/// Compact box `Ω ⊇ F` in which all admissible controls live.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub v_max: f64,
    pub w_min: f64,
    pub w_max: f64,
}

/// `Ω` for a problem on `domain` with total masses `m0`, `m1`. Unbounded
/// directions of `F` are truncated to `|vᵢ| ≤ 10·diam(X)` and
/// `|w| ≤ 10·max(1, |ln(m1/m0)|)`.
pub fn control_bounds(spec: &HamiltonianSpec, domain: &SpatialBox, m0: f64, m1: f64) -> ControlBounds {
    let v_trunc = 10.0 * domain.diameter();
    let log_ratio = if m0 > 0.0 && m1 > 0.0 { (m1 / m0).ln().abs() } else { 0.0 };
    let w_trunc = 10.0 * log_ratio.max(1.0);
    match *spec {
        HamiltonianSpec::Wfr { .. } => ControlBounds { v_max: v_trunc, w_min: -w_trunc, w_max: w_trunc },
        HamiltonianSpec::Balanced => ControlBounds { v_max: v_trunc, w_min: 0.0, w_max: 0.0 },
        HamiltonianSpec::BoxConstrained { v_max, w_min, w_max, .. } => {
            ControlBounds { v_max, w_min, w_max }
        }
    }
}

/// Euclidean projection of `y` onto `K_H`.
///
/// Outside `K_H` the projection is `(y_a − s, prox_{sH}(y_b, y_c))` where the
/// multiplier `s > 0` is the root of the strictly decreasing
/// `g(s) = y_a − s + H(prox_{sH}(y_b, y_c))` on `[0, y_a + H(y_b, y_c)]`,
/// found by Newton steps safeguarded with bisection.
pub fn project_kh(spec: &HamiltonianSpec, y: KPoint) -> Result<KPoint> {
    if !y.is_finite() {
        return Err(UdotError::InvalidPoint);
    }
    let h_y = evaluate(spec, &y.b, y.c);
    let g0 = y.a + h_y;
    if g0 <= 0.0 {
        return Ok(y);
    }
    let bp = spec.b_piece();
    let cp = spec.c_piece();

    // g(s) and g'(s) = −1 − Σ h'(p)² / (1 + s h''(p)) at the prox point
    let eval = |s: f64| -> (f64, f64) {
        let mut h = 0.0;
        let mut dg = -1.0;
        for &yb in &y.b {
            let p = bp.prox(yb, s);
            h += bp.value(p);
            let d = bp.deriv(p);
            dg -= d * d / (1.0 + s * bp.second(p));
        }
        let p = cp.prox(y.c, s);
        h += cp.value(p);
        let d = cp.deriv(p);
        dg -= d * d / (1.0 + s * cp.second(p));
        (y.a - s + h, dg)
    };

    let tol = PROJECTION_TOL * (y.a.abs() + h_y).max(1.0);
    let (mut lo, mut hi) = (0.0_f64, g0);
    let (mut s, mut g, mut dg) = (0.0, g0, eval(0.0).1);
    for _ in 0..200 {
        let mut next = s - g / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        s = next;
        (g, dg) = eval(s);
        if g.abs() <= tol {
            break;
        }
        if g > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }

    let mut out = KPoint { a: 0.0, b: [0.0; MAX_DIM], c: cp.prox(y.c, s) };
    for (o, &yb) in out.b.iter_mut().zip(&y.b) {
        *o = bp.prox(yb, s);
    }
    // land exactly on the boundary; differs from y_a − s by |g(s)| ≤ tol
    out.a = -evaluate(spec, &out.b, out.c);
    Ok(out)
}
