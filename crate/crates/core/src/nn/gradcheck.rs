//! Central finite differences, used as an independent oracle for backprop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gradients smaller than this are compared on an absolute scale.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub op: String,
    pub max_relative_error: f64,
    pub perturbation: f64,
}

/// `(f(θ + εeᵢ) − f(θ − εeᵢ)) / 2ε` for every coordinate.
pub fn finite_diff_grad<F>(mut f: F, theta: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(eps > 0.0) {
        return Err(Error::Oracle(format!("perturbation must be positive, got {eps}")));
    }
    let mut probe = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let plus = f(&probe);
        probe[i] = orig - eps;
        let minus = f(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Oracle(format!("non-finite objective when perturbing coordinate {i}")));
        }
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

/// `|a − n| / max(|a|, |n|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

pub fn compare(op: impl Into<String>, analytic: &[f64], numeric: &[f64], eps: f64) -> Result<GradCheckReport> {
    if analytic.len() != numeric.len() {
        return Err(Error::dim("gradient comparison", analytic.len(), numeric.len()));
    }
    let max_relative_error = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| relative_error(*a, *n))
        .fold(0.0, f64::max);
    Ok(GradCheckReport {
        op: op.into(),
        max_relative_error,
        perturbation: eps,
    })
}
