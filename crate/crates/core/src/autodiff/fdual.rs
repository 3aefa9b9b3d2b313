//! Plain forward-mode dual numbers, independent of the tape.
//!
//! `F1<f64, N>` carries a value and N first derivatives; nesting as
//! `F1<F1<f64, N>, N>` yields exact second derivatives. This is the
//! reference path used to cross-check the tape-based propagation — it
//! shares no code with it beyond the `Scalar` trait surface.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct F1<T, const N: usize> {
    pub v: T,
    pub d: [T; N],
}

impl<const N: usize> F1<f64, N> {
    pub fn constant(v: f64) -> Self {
        Self { v, d: [0.0; N] }
    }

    /// Seed coordinate `i` with unit derivative.
    pub fn variable(v: f64, i: usize) -> Self {
        let mut d = [0.0; N];
        d[i] = 1.0;
        Self { v, d }
    }
}

impl<const N: usize> F1<F1<f64, N>, N> {
    pub fn constant2(v: f64) -> Self {
        Self { v: F1::constant(v), d: [F1::constant(0.0); N] }
    }

    /// Seed coordinate `i` at both derivative levels.
    pub fn variable2(v: f64, i: usize) -> Self {
        let mut d = [F1::constant(0.0); N];
        d[i] = F1::constant(1.0);
        Self { v: F1::variable(v, i), d }
    }
}

impl<T: Scalar, const N: usize> Add for F1<T, N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut d = self.d;
        for i in 0..N {
            d[i] = d[i] + rhs.d[i];
        }
        Self { v: self.v + rhs.v, d }
    }
}

impl<T: Scalar, const N: usize> Sub for F1<T, N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut d = self.d;
        for i in 0..N {
            d[i] = d[i] - rhs.d[i];
        }
        Self { v: self.v - rhs.v, d }
    }
}

impl<T: Scalar, const N: usize> Mul for F1<T, N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut d = self.d;
        for i in 0..N {
            d[i] = self.d[i] * rhs.v + self.v * rhs.d[i];
        }
        Self { v: self.v * rhs.v, d }
    }
}

impl<T: Scalar, const N: usize> Div for F1<T, N> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let inv = rhs.v.recip();
        let v = self.v * inv;
        let mut d = self.d;
        for i in 0..N {
            d[i] = (self.d[i] - v * rhs.d[i]) * inv;
        }
        Self { v, d }
    }
}

impl<T: Scalar, const N: usize> Neg for F1<T, N> {
    type Output = Self;
    fn neg(self) -> Self {
        let mut d = self.d;
        for i in 0..N {
            d[i] = -d[i];
        }
        Self { v: -self.v, d }
    }
}

impl<T: Scalar, const N: usize> Add<f64> for F1<T, N> {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        Self { v: self.v + rhs, d: self.d }
    }
}

impl<T: Scalar, const N: usize> Sub<f64> for F1<T, N> {
    type Output = Self;
    fn sub(self, rhs: f64) -> Self {
        Self { v: self.v - rhs, d: self.d }
    }
}

impl<T: Scalar, const N: usize> Mul<f64> for F1<T, N> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        let mut d = self.d;
        for i in 0..N {
            d[i] = d[i] * rhs;
        }
        Self { v: self.v * rhs, d }
    }
}

impl<T: Scalar, const N: usize> Div<f64> for F1<T, N> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        let mut d = self.d;
        for i in 0..N {
            d[i] = d[i] / rhs;
        }
        Self { v: self.v / rhs, d }
    }
}

impl<T: Scalar, const N: usize> Scalar for F1<T, N> {
    fn value(self) -> f64 {
        self.v.value()
    }

    fn exp(self) -> Self {
        let e = self.v.exp();
        let mut d = self.d;
        for i in 0..N {
            d[i] = d[i] * e;
        }
        Self { v: e, d }
    }

    fn recip(self) -> Self {
        let inv = self.v.recip();
        let inv2 = inv * inv;
        let mut d = self.d;
        for i in 0..N {
            d[i] = -(d[i] * inv2);
        }
        Self { v: inv, d }
    }
}
