use serde::{Deserialize, Serialize};

use crate::diffcore::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};

/// Categorical distribution over `C` classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftLabel {
    probs: Vec<f64>,
}

impl SoftLabel {
    pub const SUM_TOL: f64 = 1e-9;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| p.is_nan() || *p < 0.0) {
            return Err(Error::NonFinite(format!("invalid soft label {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::NonFinite(format!("soft label sums to {total}")));
        }
        Ok(Self { probs })
    }

    pub fn one_hot(label: usize, num_classes: usize) -> Result<Self> {
        if label >= num_classes {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        let mut probs = vec![0.0; num_classes];
        probs[label] = 1.0;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Most probable class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `[n, C]` one-hot matrix.
pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<Tensor> {
    let mut data = vec![0.0; labels.len() * num_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: l,
                num_classes,
            });
        }
        data[i * num_classes + l] = 1.0;
    }
    Tensor::matrix(labels.len(), num_classes, data)
}

/// Batch mean of `-Σ_c target[c] · log_softmax(logits)[c]`.
///
/// Differentiable in both arguments, so a target produced by the correction
/// network carries gradient back to its parameters.
pub fn soft_cross_entropy(g: &mut Graph, target: NodeId, logits: NodeId) -> Result<NodeId> {
    if g.value(target).shape() != g.value(logits).shape() {
        return Err(Error::ShapeMismatch {
            op: "soft_cross_entropy",
            lhs: g.value(target).shape().to_vec(),
            rhs: g.value(logits).shape().to_vec(),
        });
    }
    let logp = g.log_softmax(logits)?;
    let weighted = g.mul(target, logp)?;
    let per_row = g.sum_rows(weighted)?;
    let mean = g.mean_batch(per_row)?;
    g.scale(mean, -1.0)
}

/// Hard-label cross-entropy as the one-hot special case.
pub fn cross_entropy_labels(g: &mut Graph, labels: &[usize], logits: NodeId) -> Result<NodeId> {
    let c = g.value(logits).cols();
    let target = g.input(one_hot(labels, c)?);
    soft_cross_entropy(g, target, logits)
}
