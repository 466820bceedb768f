use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Central finite-difference gradient of `f` at `at`.
///
/// Component `i` is `(f(p + h·e_i) − f(p − h·e_i)) / 2h`. Used as the
/// independent oracle for analytic gradients; `1e-5` is a sensible `step`.
pub fn finite_difference_gradient<F>(mut f: F, at: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(step > 0.0) {
        return Err(Error::Parameter(format!(
            "step must be positive, got {step}"
        )));
    }
    let mut p = at.to_vec();
    let mut grad = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        let orig = p[i];
        p[i] = orig + step;
        let plus = f(&p);
        p[i] = orig - step;
        let minus = f(&p);
        p[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "objective not finite around component {i}"
            )));
        }
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}
