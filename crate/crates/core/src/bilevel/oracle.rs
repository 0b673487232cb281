//! Loss-value-only reference computations used to check the meta-gradient
//! machinery, plus the production single-step meta-gradient they are checked
//! against.

use super::meta::{accumulate_meta_grad, LrDiag, MetaGradState};
use super::step::{
    main_step, meta_loss_grad, mixed_hvp_fd, training_loss_pinned, Corrector, TrainBatch,
};
use crate::diffcore::{numerical_gradient, ParamVector, Tensor};
use crate::error::Result;
use crate::models::{ClassifierConfig, LcnConfig};

/// A clean evaluation minibatch.
#[derive(Clone, Debug)]
pub struct EvalBatch {
    pub x: Tensor,
    pub labels: Vec<usize>,
}

/// Meta-gradient produced by the training path for a window of one step
/// started at `w` (plain SGD step of size `lr`).
#[allow(clippy::too_many_arguments)]
pub fn single_step_meta_gradient(
    cls: &ClassifierConfig,
    lcn: &LcnConfig,
    alpha: &ParamVector,
    w: &ParamVector,
    batch: &TrainBatch,
    eval: &EvalBatch,
    lr: f64,
    fd_epsilon_scale: f64,
) -> Result<ParamVector> {
    let mut velocity = w.zeros_like();
    let step = main_step(
        cls,
        w,
        &mut velocity,
        Corrector::Network { cfg: lcn, alpha },
        batch,
        lr,
        0.0,
    )?;
    let (_, g_next) = meta_loss_grad(cls, &step.w_next, &eval.x, &eval.labels)?;
    let mut state = MetaGradState::new(alpha, LrDiag::Uniform(lr), 1)?;
    let v = state.lr_diag.apply(&g_next)?;
    let hvp = mixed_hvp_fd(cls, lcn, alpha, w, batch, &v, fd_epsilon_scale)?;
    accumulate_meta_grad(&mut state, &step.g_w, &g_next, &hvp)?;
    Ok(state.prev_meta_grad)
}

/// `L_D(w − lr·∇_w L_{D'}(α, w))`.
pub fn unrolled_objective(
    cls: &ClassifierConfig,
    lcn: &LcnConfig,
    alpha: &ParamVector,
    w: &ParamVector,
    batch: &TrainBatch,
    eval: &EvalBatch,
    lr: f64,
) -> Result<f64> {
    let mut velocity = w.zeros_like();
    let step = main_step(
        cls,
        w,
        &mut velocity,
        Corrector::Network { cfg: lcn, alpha },
        batch,
        lr,
        0.0,
    )?;
    Ok(meta_loss_grad(cls, &step.w_next, &eval.x, &eval.labels)?.0)
}

/// Central-difference α-gradient of [`unrolled_objective`].
#[allow(clippy::too_many_arguments)]
pub fn unrolled_alpha_grad_fd(
    cls: &ClassifierConfig,
    lcn: &LcnConfig,
    alpha: &ParamVector,
    w: &ParamVector,
    batch: &TrainBatch,
    eval: &EvalBatch,
    lr: f64,
    eps: f64,
) -> Result<ParamVector> {
    numerical_gradient(
        |a| unrolled_objective(cls, lcn, a, w, batch, eval, lr),
        alpha,
        eps,
    )
}

/// `∇²_{α,w} L · v` from loss values alone: for each α coordinate, a
/// central difference in α of a central difference in w along `v`.
pub fn mixed_hvp_double_fd<F>(
    loss: F,
    alpha: &ParamVector,
    w: &ParamVector,
    v: &ParamVector,
    eps_alpha: f64,
    eps_w: f64,
) -> Result<ParamVector>
where
    F: Fn(&ParamVector, &ParamVector) -> Result<f64>,
{
    let w_plus = w.plus_scaled(v, eps_w)?;
    let w_minus = w.plus_scaled(v, -eps_w)?;
    let base = alpha.flatten();
    let mut out = vec![0.0; base.len()];
    let mut probe = base.clone();
    for i in 0..base.len() {
        probe[i] = base[i] + eps_alpha;
        let a_plus = alpha.unflatten(&probe)?;
        probe[i] = base[i] - eps_alpha;
        let a_minus = alpha.unflatten(&probe)?;
        probe[i] = base[i];
        let pp = loss(&a_plus, &w_plus)?;
        let pm = loss(&a_plus, &w_minus)?;
        let mp = loss(&a_minus, &w_plus)?;
        let mm = loss(&a_minus, &w_minus)?;
        out[i] = (pp - pm - mp + mm) / (4.0 * eps_alpha * eps_w);
    }
    alpha.unflatten(&out)
}

/// [`mixed_hvp_double_fd`] on the MLC training loss, with the correction
/// network's input held at the features of the unperturbed `w`.
#[allow(clippy::too_many_arguments)]
pub fn training_mixed_hvp_double_fd(
    cls: &ClassifierConfig,
    lcn: &LcnConfig,
    alpha: &ParamVector,
    w: &ParamVector,
    batch: &TrainBatch,
    v: &ParamVector,
    eps_alpha: f64,
    eps_w: f64,
) -> Result<ParamVector> {
    mixed_hvp_double_fd(
        |a, wp| training_loss_pinned(cls, wp, w, Corrector::Network { cfg: lcn, alpha: a }, batch),
        alpha,
        w,
        v,
        eps_alpha,
        eps_w,
    )
}

/// Cosine similarity and relative norm error `‖a − b‖ / ‖b‖`.
pub fn compare(a: &ParamVector, b: &ParamVector) -> Result<(f64, f64)> {
    let denom = a.l2_norm() * b.l2_norm();
    let cos = if denom > 0.0 { a.dot(b)? / denom } else { 0.0 };
    let rel = a.sub(b)?.l2_norm() / b.l2_norm().max(f64::MIN_POSITIVE);
    Ok((cos, rel))
}
