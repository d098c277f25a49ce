//! Margin functions `φ` (convex, nondecreasing, `φ(0) = 0`) and their convex
//! conjugates `φ*(x) = sup_{y ≥ 0} {x y − φ(y)}`.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// Number of points of the geometric `y`-grid used to conjugate tabulated
/// margin functions; the grid runs from [`CONJUGATE_GRID_MIN`] to
/// [`CONJUGATE_GRID_MAX`] and `y = 0` is always included.
pub const CONJUGATE_GRID_POINTS: usize = 2000;
pub const CONJUGATE_GRID_MIN: f64 = 1e-6;
pub const CONJUGATE_GRID_MAX: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarginFunction {
    /// `φ(y) = (h y²)^κ`. `h = +∞` encodes the empty constraint
    /// (`φ = 0` at 0 and `+∞` elsewhere), whose conjugate vanishes; `h = 0`
    /// is the trivial `φ ≡ 0`, whose conjugate is `+∞` off the origin.
    Power { h: f64, kappa: f64 },
    /// Piecewise linear through `knots`, starting at `(0, 0)`, extended
    /// linearly past the last knot.
    Tabulated { knots: Vec<(f64, f64)> },
}

impl MarginFunction {
    pub fn power(h: f64, kappa: f64) -> Result<Self> {
        if !(h > 0.0) {
            return param(format!("margin curvature h = {h} must be positive"));
        }
        if !(kappa >= 1.0) || !kappa.is_finite() {
            return param(format!("margin exponent κ = {kappa} must be ≥ 1"));
        }
        Ok(MarginFunction::Power { h, kappa })
    }

    /// Quadratic `φ(y) = h y²`.
    pub fn quadratic(h: f64) -> Result<Self> {
        Self::power(h, 1.0)
    }

    pub fn tabulated(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return param("tabulated margin needs at least two knots");
        }
        if knots[0] != (0.0, 0.0) {
            return param("tabulated margin must start at (0, 0)");
        }
        let mut last_slope = 0.0;
        for w in knots.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if !(x1 > x0) || !y1.is_finite() {
                return param("tabulated knots must have increasing finite abscissae");
            }
            let slope = (y1 - y0) / (x1 - x0);
            if slope < -1e-12 {
                return param("tabulated margin must be nondecreasing");
            }
            if slope < last_slope - 1e-12 {
                return param("tabulated margin must be convex");
            }
            last_slope = slope;
        }
        Ok(MarginFunction::Tabulated { knots })
    }

    pub fn eval(&self, y: f64) -> f64 {
        match self {
            MarginFunction::Power { h, kappa } => {
                if y <= 0.0 {
                    0.0
                } else if h.is_infinite() {
                    f64::INFINITY
                } else {
                    (h * y * y).powf(*kappa)
                }
            }
            MarginFunction::Tabulated { knots } => {
                let y = y.max(0.0);
                let i = knots.partition_point(|k| k.0 <= y);
                let (a, b) = if i >= knots.len() {
                    (knots[knots.len() - 2], knots[knots.len() - 1])
                } else {
                    (knots[i - 1], knots[i])
                };
                a.1 + (b.1 - a.1) * (y - a.0) / (b.0 - a.0)
            }
        }
    }

    /// The convex conjugate at `x ≥ 0` (negative `x` is treated as 0).
    ///
    /// Power kind: closed form. With `A = h^κ` and `p = 2κ`,
    /// `φ*(x) = (1 − 1/p) x (x / (A p))^{1/(p−1)}`, which is `x²/(4h)` for
    /// `κ = 1`. Tabulated kind: maximum over `y = 0` and a geometric grid of
    /// [`CONJUGATE_GRID_POINTS`] points on `[1e-6, 1e3]`.
    pub fn conjugate(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            MarginFunction::Power { h, kappa } => {
                if h.is_infinite() {
                    return 0.0;
                }
                let p = 2.0 * kappa;
                let a = h.powf(*kappa);
                (1.0 - 1.0 / p) * x * (x / (a * p)).powf(1.0 / (p - 1.0))
            }
            MarginFunction::Tabulated { .. } => {
                let ratio = (CONJUGATE_GRID_MAX / CONJUGATE_GRID_MIN)
                    .powf(1.0 / (CONJUGATE_GRID_POINTS - 1) as f64);
                (0..CONJUGATE_GRID_POINTS)
                    .map(|i| CONJUGATE_GRID_MIN * ratio.powi(i as i32))
                    .map(|y| x * y - self.eval(y))
                    .fold(0.0, f64::max)
            }
        }
    }
}

/// Free-function form of [`MarginFunction::conjugate`].
pub fn conjugate(phi: &MarginFunction, x: f64) -> f64 {
    phi.conjugate(x)
}
