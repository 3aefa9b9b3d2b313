//! Finite-difference verification harness.
//!
//! Central differences are the independent oracle for the exact
//! derivatives produced elsewhere in this module. Errors are reported as
//! `|ad - fd| / max(|ad|, FD_FLOOR)`, maximised over coordinates. A
//! non-finite probe value yields a non-finite error, never a panic.

use super::AutodiffError;

pub const FD_FLOOR: f64 = 1e-12;

fn probe<F>(f: &F, point: &[f64], axis: usize, delta: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let mut p = point.to_vec();
    p[axis] += delta;
    f(&p)
}

/// Max relative discrepancy between `ad_grad` and central differences of
/// `f` at `point`.
pub fn finite_diff_check<F>(f: F, ad_grad: &[f64], point: &[f64], step: f64) -> Result<f64, AutodiffError>
where
    F: Fn(&[f64]) -> f64,
{
    if !(step > 0.0) {
        return Err(AutodiffError::InvalidStep(step));
    }
    if ad_grad.len() != point.len() {
        return Err(AutodiffError::DimensionMismatch { expected: point.len(), got: ad_grad.len() });
    }
    let mut worst = 0.0f64;
    for i in 0..point.len() {
        let fp = probe(&f, point, i, step);
        let fm = probe(&f, point, i, -step);
        if !fp.is_finite() || !fm.is_finite() {
            return Ok(f64::INFINITY);
        }
        let fd = (fp - fm) / (2.0 * step);
        let err = (ad_grad[i] - fd).abs() / ad_grad[i].abs().max(FD_FLOOR);
        if !err.is_finite() {
            return Ok(f64::INFINITY);
        }
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Same check for pure second derivatives, using the three-point stencil
/// (f(x+h) - 2 f(x) + f(x-h)) / h^2.
pub fn finite_diff_check_hess<F>(
    f: F,
    ad_hess_diag: &[f64],
    point: &[f64],
    step: f64,
) -> Result<f64, AutodiffError>
where
    F: Fn(&[f64]) -> f64,
{
    if !(step > 0.0) {
        return Err(AutodiffError::InvalidStep(step));
    }
    if ad_hess_diag.len() != point.len() {
        return Err(AutodiffError::DimensionMismatch {
            expected: point.len(),
            got: ad_hess_diag.len(),
        });
    }
    let f0 = f(point);
    if !f0.is_finite() {
        return Ok(f64::INFINITY);
    }
    let mut worst = 0.0f64;
    for i in 0..point.len() {
        let fp = probe(&f, point, i, step);
        let fm = probe(&f, point, i, -step);
        if !fp.is_finite() || !fm.is_finite() {
            return Ok(f64::INFINITY);
        }
        let fd = (fp - 2.0 * f0 + fm) / (step * step);
        let err = (ad_hess_diag[i] - fd).abs() / ad_hess_diag[i].abs().max(FD_FLOOR);
        if !err.is_finite() {
            return Ok(f64::INFINITY);
        }
        worst = worst.max(err);
    }
    Ok(worst)
}
