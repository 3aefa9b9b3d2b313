//! Scalar abstraction so the physics formulas are written once and run
//! either on plain `f64` (oracle/evaluation paths) or on tape variables
//! (training path, where every operation is recorded for the reverse
//! sweep).

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::tape::{Tape, Var};

/// Arithmetic closed over a scalar number type, with enough surface for
/// the residual formulas: ring ops, mixing with `f64` constants, `exp`,
/// and a plain value for data-dependent branching.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn recip(self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn value(self) -> f64 {
        self
    }

    #[inline]
    fn exp(self) -> f64 {
        f64::exp(self)
    }

    #[inline]
    fn recip(self) -> f64 {
        1.0 / self
    }
}

/// Shared-access wrapper around a [`Tape`] so tape variables can carry a
/// handle and participate in operator syntax.
pub struct TapeCell {
    inner: RefCell<Tape>,
}

impl TapeCell {
    pub fn new() -> Self {
        Self { inner: RefCell::new(Tape::new()) }
    }

    pub fn from_tape(tape: Tape) -> Self {
        Self { inner: RefCell::new(tape) }
    }

    pub fn into_inner(self) -> Tape {
        self.inner.into_inner()
    }

    pub fn with<R>(&self, f: impl FnOnce(&mut Tape) -> R) -> R {
        f(&mut self.inner.borrow_mut())
    }

    pub fn var(&self, v: Var) -> TVar<'_> {
        TVar { cell: self, v }
    }

    pub fn constant(&self, c: f64) -> TVar<'_> {
        let v = self.with(|t| t.constant(c));
        TVar { cell: self, v }
    }

    pub fn value(&self, v: Var) -> f64 {
        self.inner.borrow().value(v)
    }
}

impl Default for TapeCell {
    fn default() -> Self {
        Self::new()
    }
}

/// A tape variable bound to its tape. Arithmetic records new nodes.
#[derive(Clone, Copy)]
pub struct TVar<'t> {
    cell: &'t TapeCell,
    v: Var,
}

impl<'t> TVar<'t> {
    pub fn index(self) -> Var {
        self.v
    }
}

impl<'t> Add for TVar<'t> {
    type Output = TVar<'t>;
    fn add(self, rhs: Self) -> Self {
        TVar { cell: self.cell, v: self.cell.with(|t| t.add(self.v, rhs.v)) }
    }
}

impl<'t> Sub for TVar<'t> {
    type Output = TVar<'t>;
    fn sub(self, rhs: Self) -> Self {
        TVar { cell: self.cell, v: self.cell.with(|t| t.sub(self.v, rhs.v)) }
    }
}

impl<'t> Mul for TVar<'t> {
    type Output = TVar<'t>;
    fn mul(self, rhs: Self) -> Self {
        TVar { cell: self.cell, v: self.cell.with(|t| t.mul(self.v, rhs.v)) }
    }
}

impl<'t> Div for TVar<'t> {
    type Output = TVar<'t>;
    fn div(self, rhs: Self) -> Self {
        TVar { cell: self.cell, v: self.cell.with(|t| t.div(self.v, rhs.v)) }
    }
}

impl<'t> Neg for TVar<'t> {
    type Output = TVar<'t>;
    fn neg(self) -> Self {
        TVar { cell: self.cell, v: self.cell.with(|t| t.neg(self.v)) }
    }
}

impl<'t> Add<f64> for TVar<'t> {
    type Output = TVar<'t>;
    fn add(self, rhs: f64) -> Self {
        TVar { cell: self.cell, v: self.cell.with(|t| t.add_const(self.v, rhs)) }
    }
}

impl<'t> Sub<f64> for TVar<'t> {
    type Output = TVar<'t>;
    fn sub(self, rhs: f64) -> Self {
        TVar { cell: self.cell, v: self.cell.with(|t| t.add_const(self.v, -rhs)) }
    }
}

impl<'t> Mul<f64> for TVar<'t> {
    type Output = TVar<'t>;
    fn mul(self, rhs: f64) -> Self {
        TVar { cell: self.cell, v: self.cell.with(|t| t.mul_const(self.v, rhs)) }
    }
}

impl<'t> Div<f64> for TVar<'t> {
    type Output = TVar<'t>;
    fn div(self, rhs: f64) -> Self {
        TVar { cell: self.cell, v: self.cell.with(|t| t.mul_const(self.v, 1.0 / rhs)) }
    }
}

impl<'t> Scalar for TVar<'t> {
    fn value(self) -> f64 {
        self.cell.value(self.v)
    }

    fn exp(self) -> Self {
        TVar { cell: self.cell, v: self.cell.with(|t| t.exp(self.v)) }
    }

    fn recip(self) -> Self {
        TVar { cell: self.cell, v: self.cell.with(|t| t.recip(self.v)) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tvar_arithmetic_records_and_evaluates() {
        let cell = TapeCell::new();
        let slots = cell.with(|t| t.register_params(&[2.0, 5.0])).unwrap();
        let a = cell.var(slots.var(0).unwrap());
        let b = cell.var(slots.var(1).unwrap());
        let y = (a * b + 1.0) * 2.0 - a / b;
        assert!((y.value() - (11.0 * 2.0 - 0.4)).abs() < 1e-15);
        let g = cell.with(|t| t.grad(y.index())).unwrap();
        // d/da = 2b - 1/b ; d/db = 2a + a/b^2
        assert!((g[0] - (10.0 - 0.2)).abs() < 1e-15);
        assert!((g[1] - (4.0 + 2.0 / 25.0)).abs() < 1e-15);
    }

    #[test]
    fn linearity_of_derivatives() {
        // d(alpha f + beta g) = alpha df + beta dg. Equality is exact in
        // real arithmetic; accumulation order costs at most a couple ulp.
        let cell = TapeCell::new();
        let slots = cell.with(|t| t.register_params(&[1.3])).unwrap();
        let x = cell.var(slots.var(0).unwrap());
        let f = x * x;
        let g = x.exp();
        let (alpha, beta) = (2.5, -0.75);
        let combo = f * alpha + g * beta;
        let gc = cell.with(|t| t.grad(combo.index())).unwrap()[0];
        let gf = cell.with(|t| t.grad(f.index())).unwrap()[0];
        let gg = cell.with(|t| t.grad(g.index())).unwrap()[0];
        let want = alpha * gf + beta * gg;
        assert!((gc - want).abs() <= 4.0 * f64::EPSILON * want.abs().max(1.0));
    }

    #[test]
    fn linearity_exact_for_power_of_two_weights() {
        // Power-of-two weights commute with rounding, so this case is
        // bitwise exact.
        let cell = TapeCell::new();
        let slots = cell.with(|t| t.register_params(&[0.75, 1.5])).unwrap();
        let x = cell.var(slots.var(0).unwrap());
        let y = cell.var(slots.var(1).unwrap());
        let f = x * x;
        let g = y * y;
        let combo = f * 2.0 + g * 0.5;
        let gc = cell.with(|t| t.grad(combo.index())).unwrap();
        let gf = cell.with(|t| t.grad(f.index())).unwrap();
        let gg = cell.with(|t| t.grad(g.index())).unwrap();
        assert_eq!(gc[0], 2.0 * gf[0]);
        assert_eq!(gc[1], 0.5 * gg[1]);
    }
}
