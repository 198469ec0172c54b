//! Forward-mode automatic differentiation.
//!
//! [`DiffScalar`] carries a value together with its partial derivatives with
//! respect to a fixed set of decision variables. Arithmetic follows the usual
//! dual-number rules; a genuine domain violation (for example `sqrt` of a
//! negative number) produces a NaN value that poisons everything downstream,
//! which the solver's line search treats as a rejected step.
//!
//! Two operations deliberately do *not* poison: [`Scalar::acos_clipped`]
//! clamps its argument slightly inside `[-1, 1]` and [`Scalar::ln_clipped`]
//! clamps below by `eps`. Inside the clip interval they differentiate
//! normally; in the clipped region (boundary included) the derivative is
//! zero. Clipping keeps iterates evaluable everywhere so that inequality
//! constraints on the *pre-clip* arguments, not NaNs, steer the solver back
//! into the valid domain.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Default clip margin for [`clipped_arccos`] and [`safe_log`].
pub const DEFAULT_CLIP_EPS: f64 = 1e-6;

/// Scalar arithmetic shared by `f64` and [`DiffScalar`].
///
/// Kinematics, IK maps, and constraints are written against this trait so a
/// single implementation serves both plain evaluation and differentiation.
pub trait Scalar:
    Clone
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;

    /// The underlying value, ignoring derivatives.
    fn val(&self) -> f64;

    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn abs(&self) -> Self;
    fn exp(&self) -> Self;

    /// Four-quadrant arctangent; `self` is `y`, the argument is `x`.
    fn atan2(&self, x: &Self) -> Self;

    /// `arccos` with the argument clamped to `[-1 + eps, 1 - eps]`.
    ///
    /// Strictly inside the interval the derivative is `-1/sqrt(1 - t^2)`;
    /// on and beyond the boundary it is zero.
    fn acos_clipped(&self, eps: f64) -> Self;

    /// Natural log with the argument clamped to `[eps, inf)`.
    ///
    /// Derivative `1/t` strictly above `eps`, zero otherwise.
    fn ln_clipped(&self, eps: f64) -> Self;

    /// Value-wise maximum; ties keep `self`.
    fn maximum(&self, other: &Self) -> Self;

    /// Value-wise minimum; ties keep `self`.
    fn minimum(&self, other: &Self) -> Self;

    /// Shift by a multiple of `2*pi` into `(-pi, pi]`, keeping derivatives.
    fn wrap_angle(&self) -> Self;
}

fn wrap_value(v: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = v - TAU * ((v + PI) / TAU).floor();
    if w <= -PI {
        w += TAU;
    }
    w
}

impl Scalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }

    fn val(&self) -> f64 {
        *self
    }

    fn sin(&self) -> Self {
        f64::sin(*self)
    }

    fn cos(&self) -> Self {
        f64::cos(*self)
    }

    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }

    fn abs(&self) -> Self {
        f64::abs(*self)
    }

    fn exp(&self) -> Self {
        f64::exp(*self)
    }

    fn atan2(&self, x: &Self) -> Self {
        f64::atan2(*self, *x)
    }

    fn acos_clipped(&self, eps: f64) -> Self {
        self.clamp(-1.0 + eps, 1.0 - eps).acos()
    }

    fn ln_clipped(&self, eps: f64) -> Self {
        self.max(eps).ln()
    }

    fn maximum(&self, other: &Self) -> Self {
        if *self >= *other {
            *self
        } else {
            *other
        }
    }

    fn minimum(&self, other: &Self) -> Self {
        if *self <= *other {
            *self
        } else {
            *other
        }
    }

    fn wrap_angle(&self) -> Self {
        wrap_value(*self)
    }
}

/// A value plus its gradient with respect to the seeded variables.
///
/// An empty partials vector denotes a constant; binary operations broadcast
/// constants against seeded operands, so constants never need to know the
/// variable count.
#[derive(Clone, Debug, Default)]
pub struct DiffScalar {
    value: f64,
    partials: Vec<f64>,
}

impl DiffScalar {
    /// A constant with zero gradient.
    pub fn constant(value: f64) -> Self {
        DiffScalar {
            value,
            partials: Vec::new(),
        }
    }

    /// The `index`-th of `num_vars` decision variables.
    pub fn variable(value: f64, index: usize, num_vars: usize) -> Self {
        assert!(index < num_vars, "variable index out of range");
        let mut partials = vec![0.0; num_vars];
        partials[index] = 1.0;
        DiffScalar { value, partials }
    }

    /// Seeds every entry of `x` as an independent variable.
    pub fn seed(x: &[f64]) -> Vec<Self> {
        let n = x.len();
        x.iter()
            .enumerate()
            .map(|(i, &v)| DiffScalar::variable(v, i, n))
            .collect()
    }

    /// Wraps every entry of `x` as a constant (plain evaluation).
    pub fn constants(x: &[f64]) -> Vec<Self> {
        x.iter().copied().map(DiffScalar::constant).collect()
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Raw partials; empty for constants.
    pub fn partials(&self) -> &[f64] {
        &self.partials
    }

    /// Partial with respect to variable `i`; zero for constants.
    pub fn partial(&self, i: usize) -> f64 {
        self.partials.get(i).copied().unwrap_or(0.0)
    }

    /// Gradient padded to `num_vars` entries.
    pub fn gradient(&self, num_vars: usize) -> Vec<f64> {
        let mut g = vec![0.0; num_vars];
        for (gi, pi) in g.iter_mut().zip(self.partials.iter()) {
            *gi = *pi;
        }
        g
    }

    /// True when the value and all partials are finite.
    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.partials.iter().all(|p| p.is_finite())
    }

    fn unary(&self, value: f64, factor: f64) -> Self {
        DiffScalar {
            value,
            partials: self.partials.iter().map(|p| p * factor).collect(),
        }
    }

    fn binary(&self, other: &Self, value: f64, da: f64, db: f64) -> Self {
        let partials = if self.partials.is_empty() {
            other.partials.iter().map(|p| p * db).collect()
        } else if other.partials.is_empty() {
            self.partials.iter().map(|p| p * da).collect()
        } else {
            debug_assert_eq!(
                self.partials.len(),
                other.partials.len(),
                "operands seeded for different variable counts"
            );
            self.partials
                .iter()
                .zip(other.partials.iter())
                .map(|(a, b)| a * da + b * db)
                .collect()
        };
        DiffScalar { value, partials }
    }
}

impl From<f64> for DiffScalar {
    fn from(value: f64) -> Self {
        DiffScalar::constant(value)
    }
}

impl Add for DiffScalar {
    type Output = DiffScalar;
    fn add(self, rhs: Self) -> Self {
        self.binary(&rhs, self.value + rhs.value, 1.0, 1.0)
    }
}

impl Sub for DiffScalar {
    type Output = DiffScalar;
    fn sub(self, rhs: Self) -> Self {
        self.binary(&rhs, self.value - rhs.value, 1.0, -1.0)
    }
}

impl Mul for DiffScalar {
    type Output = DiffScalar;
    fn mul(self, rhs: Self) -> Self {
        self.binary(&rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl Div for DiffScalar {
    type Output = DiffScalar;
    fn div(self, rhs: Self) -> Self {
        // The value uses true division (not reciprocal-multiply) so plain
        // and differentiated evaluations agree bit-for-bit.
        let inv = 1.0 / rhs.value;
        self.binary(&rhs, self.value / rhs.value, inv, -self.value * inv * inv)
    }
}

impl Neg for DiffScalar {
    type Output = DiffScalar;
    fn neg(self) -> Self {
        self.unary(-self.value, -1.0)
    }
}

impl Add<f64> for DiffScalar {
    type Output = DiffScalar;
    fn add(self, rhs: f64) -> Self {
        self.unary(self.value + rhs, 1.0)
    }
}

impl Sub<f64> for DiffScalar {
    type Output = DiffScalar;
    fn sub(self, rhs: f64) -> Self {
        self.unary(self.value - rhs, 1.0)
    }
}

impl Mul<f64> for DiffScalar {
    type Output = DiffScalar;
    fn mul(self, rhs: f64) -> Self {
        self.unary(self.value * rhs, rhs)
    }
}

impl Div<f64> for DiffScalar {
    type Output = DiffScalar;
    fn div(self, rhs: f64) -> Self {
        self.unary(self.value / rhs, 1.0 / rhs)
    }
}

impl Mul<DiffScalar> for f64 {
    type Output = DiffScalar;
    fn mul(self, rhs: DiffScalar) -> DiffScalar {
        rhs.unary(self * rhs.value, self)
    }
}

impl Scalar for DiffScalar {
    fn constant(c: f64) -> Self {
        DiffScalar::constant(c)
    }

    fn val(&self) -> f64 {
        self.value
    }

    fn sin(&self) -> Self {
        self.unary(self.value.sin(), self.value.cos())
    }

    fn cos(&self) -> Self {
        self.unary(self.value.cos(), -self.value.sin())
    }

    fn sqrt(&self) -> Self {
        let r = self.value.sqrt();
        self.unary(r, 0.5 / r)
    }

    fn abs(&self) -> Self {
        // Subgradient 1 at zero keeps iterates moving off the kink.
        let s = if self.value < 0.0 { -1.0 } else { 1.0 };
        self.unary(self.value.abs(), s)
    }

    fn exp(&self) -> Self {
        let e = self.value.exp();
        self.unary(e, e)
    }

    fn atan2(&self, x: &Self) -> Self {
        let denom = self.value * self.value + x.value * x.value;
        self.binary(
            x,
            self.value.atan2(x.value),
            x.value / denom,
            -self.value / denom,
        )
    }

    fn acos_clipped(&self, eps: f64) -> Self {
        let t = self.value;
        let (lo, hi) = (-1.0 + eps, 1.0 - eps);
        let clipped = t.clamp(lo, hi);
        let factor = if t > lo && t < hi {
            -1.0 / (1.0 - t * t).sqrt()
        } else {
            0.0
        };
        self.unary(clipped.acos(), factor)
    }

    fn ln_clipped(&self, eps: f64) -> Self {
        let t = self.value;
        let factor = if t > eps { 1.0 / t } else { 0.0 };
        self.unary(t.max(eps).ln(), factor)
    }

    fn maximum(&self, other: &Self) -> Self {
        if self.value >= other.value {
            self.clone()
        } else {
            other.clone()
        }
    }

    fn minimum(&self, other: &Self) -> Self {
        if self.value <= other.value {
            self.clone()
        } else {
            other.clone()
        }
    }

    fn wrap_angle(&self) -> Self {
        DiffScalar {
            value: wrap_value(self.value),
            partials: self.partials.clone(),
        }
    }
}

/// `arccos` clamped to `[-1 + eps, 1 - eps]`; see [`Scalar::acos_clipped`].
pub fn clipped_arccos<T: Scalar>(t: &T, eps: f64) -> T {
    t.acos_clipped(eps)
}

/// Natural log clamped below by `eps`; see [`Scalar::ln_clipped`].
pub fn safe_log<T: Scalar>(t: &T, eps: f64) -> T {
    t.ln_clipped(eps)
}
