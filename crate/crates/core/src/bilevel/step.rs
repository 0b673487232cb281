//! Single-step building blocks: the training loss `L_{D'}(α, w)`, one main
//! update, the clean meta loss, and the finite-difference mixed HVP.

use crate::diffcore::{Graph, NodeId, ParamHandle, ParamVector, Tensor};
use crate::error::{Error, Result};
use crate::models::{
    classifier_forward, cross_entropy_labels, lcn_forward, one_hot, soft_cross_entropy,
    ClassifierConfig, FeatureSource, LcnConfig,
};

/// Source of the training targets for noisy examples.
#[derive(Clone, Copy, Debug)]
pub enum Corrector<'a> {
    /// Soft labels from the correction network.
    Network {
        cfg: &'a LcnConfig,
        alpha: &'a ParamVector,
    },
    /// One-hot of the observed label (plain noisy training).
    Identity,
}

/// One main-model minibatch: noisy rows plus the trusted rows that join
/// training with one-hot labels. Either part may be empty, not both.
#[derive(Clone, Debug)]
pub struct TrainBatch {
    pub noisy_x: Tensor,
    pub noisy_labels: Vec<usize>,
    pub clean_x: Tensor,
    pub clean_labels: Vec<usize>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.noisy_labels.len() + self.clean_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub(crate) struct LossGraph {
    pub graph: Graph,
    pub loss: NodeId,
    pub noisy_loss: Option<NodeId>,
    pub corrected: Option<NodeId>,
    pub w: ParamHandle,
    pub alpha: Option<ParamHandle>,
}

/// Records the mean soft cross-entropy over the union of the noisy rows
/// (with corrected targets) and the clean rows (one-hot).
///
/// With `pinned_features`, the correction network reads those rows instead of
/// the features computed from `w`.
pub(crate) fn training_loss_graph(
    cls: &ClassifierConfig,
    w: &ParamVector,
    corrector: Corrector<'_>,
    batch: &TrainBatch,
    pinned_features: Option<&Tensor>,
) -> Result<LossGraph> {
    let n_noisy = batch.noisy_labels.len();
    let n_clean = batch.clean_labels.len();
    let n = n_noisy + n_clean;
    if n == 0 {
        return Err(Error::EmptyBatch("training batch"));
    }
    let mut g = Graph::new();
    let wh = g.bind(w);
    let mut alpha_handle = None;
    let mut terms = Vec::new();
    let mut noisy_loss = None;
    let mut corrected = None;

    if n_noisy > 0 {
        let x = g.input(batch.noisy_x.clone());
        let out = classifier_forward(&mut g, cls, x, &wh)?;
        let target = match corrector {
            Corrector::Network { cfg, alpha } => {
                let ah = g.bind(alpha);
                let feats = match (pinned_features, cfg.feature_source) {
                    (Some(f), _) => g.input(f.clone()),
                    (None, FeatureSource::PostActivation) => out.features,
                    (None, FeatureSource::PreActivation) => out.pre_features,
                };
                let t = lcn_forward(&mut g, cfg, feats, &batch.noisy_labels, &ah)?;
                alpha_handle = Some(ah);
                t
            }
            Corrector::Identity => g.input(one_hot(&batch.noisy_labels, cls.num_classes)?),
        };
        corrected = Some(target);
        let ce = soft_cross_entropy(&mut g, target, out.logits)?;
        noisy_loss = Some(ce);
        terms.push(g.scale(ce, n_noisy as f64 / n as f64)?);
    }
    if n_clean > 0 {
        let x = g.input(batch.clean_x.clone());
        let out = classifier_forward(&mut g, cls, x, &wh)?;
        let ce = cross_entropy_labels(&mut g, &batch.clean_labels, out.logits)?;
        terms.push(g.scale(ce, n_clean as f64 / n as f64)?);
    }
    let loss = match terms.as_slice() {
        [one] => *one,
        [a, b] => g.add(*a, *b)?,
        _ => unreachable!("n > 0"),
    };
    Ok(LossGraph {
        graph: g,
        loss,
        noisy_loss,
        corrected,
        w: wh,
        alpha: alpha_handle,
    })
}

/// `L_{D'}(α, w)` value only.
pub fn training_loss(
    cls: &ClassifierConfig,
    w: &ParamVector,
    corrector: Corrector<'_>,
    batch: &TrainBatch,
) -> Result<f64> {
    let lg = training_loss_graph(cls, w, corrector, batch, None)?;
    Ok(lg.graph.value(lg.loss).item())
}

/// [`training_loss`] with the correction network's input held at the
/// features of `feature_weights`, i.e. the loss as seen through the
/// stop-gradient on `h(x)`.
pub fn training_loss_pinned(
    cls: &ClassifierConfig,
    w: &ParamVector,
    feature_weights: &ParamVector,
    corrector: Corrector<'_>,
    batch: &TrainBatch,
) -> Result<f64> {
    let pinned = match corrector {
        Corrector::Network { cfg, .. } => {
            Some(lcn_features(cls, cfg, feature_weights, &batch.noisy_x)?)
        }
        Corrector::Identity => None,
    };
    let lg = training_loss_graph(cls, w, corrector, batch, pinned.as_ref())?;
    Ok(lg.graph.value(lg.loss).item())
}

/// The classifier representation the correction network reads for `x`.
pub fn lcn_features(
    cls: &ClassifierConfig,
    lcn: &LcnConfig,
    w: &ParamVector,
    x: &Tensor,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let wh = g.bind(w);
    let xn = g.input(x.clone());
    let out = classifier_forward(&mut g, cls, xn, &wh)?;
    Ok(match lcn.feature_source {
        FeatureSource::PostActivation => g.value(out.features).clone(),
        FeatureSource::PreActivation => g.value(out.pre_features).clone(),
    })
}

/// `∇_α L_{D'}(α, w)`, optionally with the correction network's input
/// pinned to precomputed features.
pub fn training_grad_alpha(
    cls: &ClassifierConfig,
    lcn: &LcnConfig,
    alpha: &ParamVector,
    w: &ParamVector,
    batch: &TrainBatch,
    pinned_features: Option<&Tensor>,
) -> Result<ParamVector> {
    let lg = training_loss_graph(
        cls,
        w,
        Corrector::Network { cfg: lcn, alpha },
        batch,
        pinned_features,
    )?;
    match &lg.alpha {
        Some(ah) => Ok(lg.graph.backward_scalar(lg.loss)?.wrt(ah)),
        // no noisy rows: α does not enter the loss
        None => Ok(alpha.zeros_like()),
    }
}

/// `∇_w L_{D'}(α, w)` and the loss value.
pub fn training_grad_w(
    cls: &ClassifierConfig,
    w: &ParamVector,
    corrector: Corrector<'_>,
    batch: &TrainBatch,
) -> Result<(f64, ParamVector)> {
    let lg = training_loss_graph(cls, w, corrector, batch, None)?;
    let grads = lg.graph.backward_scalar(lg.loss)?;
    Ok((lg.graph.value(lg.loss).item(), grads.wrt(&lg.w)))
}

/// Result of one main-model update.
#[derive(Clone, Debug)]
pub struct MainStep {
    pub w_next: ParamVector,
    /// Plain gradient `g_w` at the pre-update weights.
    pub g_w: ParamVector,
    /// Training loss over the whole batch.
    pub loss: f64,
    /// Soft cross-entropy on the noisy rows alone.
    pub noisy_loss: Option<f64>,
    /// Targets used for the noisy rows, `[n_noisy, C]`.
    pub corrected: Option<Tensor>,
}

/// One SGD-with-momentum step on `L_{D'}`:
/// `velocity ← μ·velocity + g_w`, `w' = w − lr·velocity`.
pub fn main_step(
    cls: &ClassifierConfig,
    w: &ParamVector,
    velocity: &mut ParamVector,
    corrector: Corrector<'_>,
    batch: &TrainBatch,
    lr: f64,
    momentum: f64,
) -> Result<MainStep> {
    let lg = training_loss_graph(cls, w, corrector, batch, None)?;
    let loss = lg.graph.value(lg.loss).item();
    let g_w = lg.graph.backward_scalar(lg.loss)?.wrt(&lg.w);
    if !loss.is_finite() || !g_w.is_finite() {
        return Err(Error::NonFinite(format!(
            "training loss {loss}, |g_w| {}, |w| {}",
            g_w.l2_norm(),
            w.l2_norm()
        )));
    }
    velocity.scale(momentum);
    velocity.add_scaled(&g_w, 1.0)?;
    let w_next = w.plus_scaled(velocity, -lr)?;
    Ok(MainStep {
        w_next,
        g_w,
        loss,
        noisy_loss: lg.noisy_loss.map(|n| lg.graph.value(n).item()),
        corrected: lg.corrected.map(|c| lg.graph.value(c).clone()),
    })
}

/// Mean one-hot cross-entropy on the clean evaluation rows and its gradient
/// w.r.t. the classifier weights.
pub fn meta_loss_grad(
    cls: &ClassifierConfig,
    w: &ParamVector,
    eval_x: &Tensor,
    eval_labels: &[usize],
) -> Result<(f64, ParamVector)> {
    if eval_labels.is_empty() {
        return Err(Error::EmptyBatch("clean evaluation set"));
    }
    let mut g = Graph::new();
    let wh = g.bind(w);
    let x = g.input(eval_x.clone());
    let out = classifier_forward(&mut g, cls, x, &wh)?;
    let loss = cross_entropy_labels(&mut g, eval_labels, out.logits)?;
    let grads = g.backward_scalar(loss)?;
    Ok((g.value(loss).item(), grads.wrt(&wh)))
}

/// Central difference of an α-gradient along `v` in w-space:
/// `[∇_α L(w + εv) − ∇_α L(w − εv)] / 2ε`, `ε = eps_scale / ‖v‖₂`.
///
/// Approximates `∇²_{α,w} L · v`. Returns zeros when `v == 0`.
pub fn mixed_hvp_fd_with<F>(
    alpha_like: &ParamVector,
    w: &ParamVector,
    v: &ParamVector,
    eps_scale: f64,
    grad_alpha_at: F,
) -> Result<ParamVector>
where
    F: Fn(&ParamVector) -> Result<ParamVector>,
{
    let norm = v.l2_norm();
    if norm == 0.0 {
        return Ok(alpha_like.zeros_like());
    }
    if !norm.is_finite() {
        return Err(Error::NonFinite(format!("HVP direction norm {norm}")));
    }
    let eps = eps_scale / norm;
    let plus = grad_alpha_at(&w.plus_scaled(v, eps)?)?;
    let minus = grad_alpha_at(&w.plus_scaled(v, -eps)?)?;
    let mut out = plus.sub(&minus)?;
    out.scale(1.0 / (2.0 * eps));
    Ok(out)
}

/// `g_{w'} Λ H_{α,w}` for the MLC training loss, with `v = Λ g_{w'}`
/// supplied by the caller.
///
/// The correction network's feature input stays at its value under `w` for
/// both probes. Because of the stop-gradient on `h(x)`, `g_w` has no
/// component through that input, so its α-derivative has none either.
pub fn mixed_hvp_fd(
    cls: &ClassifierConfig,
    lcn: &LcnConfig,
    alpha: &ParamVector,
    w: &ParamVector,
    batch: &TrainBatch,
    v: &ParamVector,
    eps_scale: f64,
) -> Result<ParamVector> {
    if batch.noisy_labels.is_empty() {
        return Ok(alpha.zeros_like());
    }
    let features = lcn_features(cls, lcn, w, &batch.noisy_x)?;
    mixed_hvp_fd_with(alpha, w, v, eps_scale, |w_probe| {
        training_grad_alpha(cls, lcn, alpha, w_probe, batch, Some(&features))
    })
}

/// Splits a clean minibatch into `(eval, train)`; the evaluation half gets
/// the extra row when the size is odd.
pub fn split_clean_batch(batch: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    if batch.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "clean batch of {} cannot be split",
            batch.len()
        )));
    }
    let cut = batch.len().div_ceil(2);
    Ok((batch[..cut].to_vec(), batch[cut..].to_vec()))
}
