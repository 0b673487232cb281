use serde::Serialize;

use super::ParamVector;
use crate::error::{Error, Result};

/// Step used for central differences unless a caller overrides it.
pub const DEFAULT_FD_EPS: f64 = 1e-5;

/// Gradients smaller than this are compared in absolute rather than relative
/// terms; FD round-off on O(1) losses is around `1e-11`.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct SegmentReport {
    pub name: String,
    pub max_rel_error: f64,
    /// Flat index (within the segment) of the worst coordinate.
    pub worst_index: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub segments: Vec<SegmentReport>,
    pub max_rel_error: f64,
    pub tol: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Central-difference gradient of a scalar function over every coordinate.
pub fn numerical_gradient<F>(loss: F, params: &ParamVector, eps: f64) -> Result<ParamVector>
where
    F: Fn(&ParamVector) -> Result<f64>,
{
    let base = params.flatten();
    let mut probe = base.clone();
    let mut out = vec![0.0; base.len()];
    for i in 0..base.len() {
        probe[i] = base[i] + eps;
        let plus = loss(&params.unflatten(&probe)?)?;
        probe[i] = base[i] - eps;
        let minus = loss(&params.unflatten(&probe)?)?;
        probe[i] = base[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss at coordinate {i}: {plus} / {minus}"
            )));
        }
        out[i] = (plus - minus) / (2.0 * eps);
    }
    params.unflatten(&out)
}

/// Compares the analytic gradient returned by `loss_and_grad` against
/// central differences of its loss value.
pub fn grad_check<F>(
    loss_and_grad: F,
    params: &ParamVector,
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamVector) -> Result<(f64, ParamVector)>,
{
    if !params.is_finite() {
        return Err(Error::NonFinite("parameters".into()));
    }
    let (loss, analytic) = loss_and_grad(params)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss {loss}")));
    }
    let numeric = numerical_gradient(|p| loss_and_grad(p).map(|(l, _)| l), params, eps)?;

    let mut segments = Vec::new();
    for (a, n) in analytic.segments().iter().zip(numeric.segments()) {
        let (worst_index, max_rel_error) = a
            .tensor
            .data()
            .iter()
            .zip(n.tensor.data())
            .map(|(&x, &y)| relative_error(x, y))
            .enumerate()
            .fold(
                (0, 0.0),
                |best, (i, e)| if e > best.1 { (i, e) } else { best },
            );
        segments.push(SegmentReport {
            name: a.name.clone(),
            max_rel_error,
            worst_index,
        });
    }
    let max_rel_error = segments.iter().map(|s| s.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        segments,
        max_rel_error,
        tol,
        passed: max_rel_error <= tol,
    })
}
