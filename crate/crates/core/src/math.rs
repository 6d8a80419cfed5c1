//! Scalar and planar kernels shared by the controller and the potentials.
//!
//! Every function here is pure. Piecewise functions pick their branch with the
//! lower interval closed on the right (`x <= d1` takes the first branch), and
//! the branches agree at every breakpoint so the choice only matters for the
//! derivatives.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::DomainError;

/// A planar vector. Used for positions (m), velocities (m/s) and errors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    /// Builds a vector from finite components.
    ///
    /// Non-finite input is a programming error and trips a debug assertion;
    /// use [`Vec2::try_new`] for untrusted data.
    #[inline]
    pub fn new(x: f64, y: f64) -> Self {
        debug_assert!(x.is_finite() && y.is_finite(), "non-finite Vec2 ({x}, {y})");
        Vec2 { x, y }
    }

    pub fn try_new(x: f64, y: f64) -> Result<Self, DomainError> {
        if x.is_finite() && y.is_finite() {
            Ok(Vec2 { x, y })
        } else {
            Err(DomainError::NonFinite {
                what: "vector component",
            })
        }
    }

    #[inline]
    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 0.0).then(|| self / n)
    }

    /// Counter-clockwise rotation by `angle` radians.
    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Counter-clockwise quarter turn.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2 {
            x: self.x + rhs.x,
            y: self.y + rhs.y,
        }
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2 {
            x: self.x - rhs.x,
            y: self.y - rhs.y,
        }
    }
}

impl SubAssign for Vec2 {
    #[inline]
    fn sub_assign(&mut self, rhs: Vec2) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2 {
            x: self.x * rhs,
            y: self.y * rhs,
        }
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    #[inline]
    fn mul(self, rhs: Vec2) -> Vec2 {
        rhs * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn div(self, rhs: f64) -> Vec2 {
        Vec2 {
            x: self.x / rhs,
            y: self.y / rhs,
        }
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2 {
            x: -self.x,
            y: -self.y,
        }
    }
}

/// Scale factor applied by [`saturate`]: 1 inside the ball, `v_max/‖v‖` outside.
#[inline]
pub fn kappa(v: Vec2, v_max: f64) -> f64 {
    let n = v.norm();
    if n <= v_max {
        1.0
    } else {
        v_max / n
    }
}

/// Clamps the norm of `v` to `v_max` without changing its direction.
#[inline]
pub fn saturate(v: Vec2, v_max: f64) -> Vec2 {
    v * kappa(v, v_max)
}

/// Thresholds of the smooth cutoff [`sigma`]. Always `0 < d1 < d2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaParams {
    d1: f64,
    d2: f64,
}

impl SigmaParams {
    pub fn new(d1: f64, d2: f64) -> Result<Self, DomainError> {
        if d1.is_finite() && d2.is_finite() && 0.0 < d1 && d1 < d2 {
            Ok(SigmaParams { d1, d2 })
        } else {
            Err(DomainError::InvalidThresholds { d1, d2 })
        }
    }

    pub fn d1(&self) -> f64 {
        self.d1
    }

    pub fn d2(&self) -> f64 {
        self.d2
    }

    /// Coefficients `[A, B, C, D]` of the transition cubic.
    fn cubic(&self) -> [f64; 4] {
        let (d1, d2) = (self.d1, self.d2);
        let den = (d1 - d2).powi(3);
        [
            -2.0 / den,
            3.0 * (d1 + d2) / den,
            -6.0 * d1 * d2 / den,
            d2 * d2 * (3.0 * d1 - d2) / den,
        ]
    }
}

/// Smooth cutoff: 1 up to `d1`, 0 from `d2` on, cubic in between. C¹ everywhere.
pub fn sigma(x: f64, params: SigmaParams) -> f64 {
    if x <= params.d1 {
        1.0
    } else if x >= params.d2 {
        0.0
    } else {
        let [a, b, c, d] = params.cubic();
        ((a * x + b) * x + c) * x + d
    }
}

/// Derivative of [`sigma`]; never positive.
pub fn sigma_prime(x: f64, params: SigmaParams) -> f64 {
    if x <= params.d1 || x >= params.d2 {
        0.0
    } else {
        let [a, b, c, _] = params.cubic();
        (3.0 * a * x + 2.0 * b) * x + c
    }
}

/// `1 / tan 67.5°`, which is exactly `√2 − 1`.
const COT_67_5: f64 = SQRT_2 - 1.0;
/// `sin 45°`.
const SIN_45: f64 = FRAC_1_SQRT_2;

/// Breakpoints `(x1, x2)` of [`blend_s`] for a given `eps_s`.
///
/// The arc is the circle of radius `eps_s` centred at `(x2, 1 - eps_s)`; it is
/// tangent to the identity at `x1` and to the constant 1 at `x2`.
#[inline]
pub fn blend_breakpoints(eps_s: f64) -> (f64, f64) {
    let x2 = 1.0 + COT_67_5 * eps_s;
    let x1 = x2 - SIN_45 * eps_s;
    (x1, x2)
}

/// Smooth blend between the identity and the constant 1.
pub fn blend_s(x: f64, eps_s: f64) -> f64 {
    let (x1, x2) = blend_breakpoints(eps_s);
    if x <= x1 {
        x
    } else if x >= x2 {
        1.0
    } else {
        let dx = x - x2;
        (1.0 - eps_s) + (eps_s * eps_s - dx * dx).sqrt()
    }
}

/// Derivative of [`blend_s`]. Taken as 0 at `x2` itself (right-hand limit).
pub fn blend_s_prime(x: f64, eps_s: f64) -> f64 {
    let (x1, x2) = blend_breakpoints(eps_s);
    if x <= x1 {
        1.0
    } else if x >= x2 {
        0.0
    } else {
        let dx = x - x2;
        -dx / (eps_s * eps_s - dx * dx).sqrt()
    }
}
