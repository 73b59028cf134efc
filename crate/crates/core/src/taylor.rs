//! Scalars for the deterministic-equivalent formulas: plain `f64`, or a
//! power series truncated after `eps^2` in one small parameter.
//!
//! The asymptotic formulas are evaluated on a system whose stream being
//! deformed carries weight `eps` in every normalized trace. `eps = 1` is the
//! system as given. Expanding in `eps` instead separates the orders in `1/M`:
//! the coefficient of `eps^j` is the `M^{-j}` part of the same quantity on a
//! self-similarly enlarged system.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Send
    + Sync
{
    fn constant(v: f64) -> Self;
    fn value(self) -> f64;
    fn ln(self) -> Self;
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }

    fn value(self) -> f64 {
        self
    }

    fn ln(self) -> Self {
        f64::ln(self)
    }
}

/// `c[0] + c[1] eps + c[2] eps^2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Taylor2 {
    pub c: [f64; 3],
}

impl Taylor2 {
    pub const fn new(c0: f64, c1: f64, c2: f64) -> Self {
        Self { c: [c0, c1, c2] }
    }

    /// The expansion variable itself, `eps`.
    pub const fn variable() -> Self {
        Self::new(0.0, 1.0, 0.0)
    }

    pub fn recip(self) -> Self {
        let [a, b, c] = self.c;
        let r = 1.0 / a;
        Self::new(r, -b * r * r, (b * b * r - c) * r * r)
    }

    /// Largest coefficient magnitude.
    pub fn max_abs(self) -> f64 {
        self.c.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl Add for Taylor2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.c[0] + o.c[0], self.c[1] + o.c[1], self.c[2] + o.c[2])
    }
}

impl Sub for Taylor2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.c[0] - o.c[0], self.c[1] - o.c[1], self.c[2] - o.c[2])
    }
}

impl Mul for Taylor2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let [a0, a1, a2] = self.c;
        let [b0, b1, b2] = o.c;
        Self::new(a0 * b0, a0 * b1 + a1 * b0, a0 * b2 + a1 * b1 + a2 * b0)
    }
}

impl Div for Taylor2 {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl Neg for Taylor2 {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.c[0], -self.c[1], -self.c[2])
    }
}

impl Add<f64> for Taylor2 {
    type Output = Self;
    fn add(self, o: f64) -> Self {
        Self::new(self.c[0] + o, self.c[1], self.c[2])
    }
}

impl Mul<f64> for Taylor2 {
    type Output = Self;
    fn mul(self, o: f64) -> Self {
        Self::new(self.c[0] * o, self.c[1] * o, self.c[2] * o)
    }
}

impl Scalar for Taylor2 {
    fn constant(v: f64) -> Self {
        Self::new(v, 0.0, 0.0)
    }

    fn value(self) -> f64 {
        self.c[0]
    }

    fn ln(self) -> Self {
        let [a, b, c] = self.c;
        Self::new(a.ln(), b / a, c / a - 0.5 * (b / a) * (b / a))
    }
}
