use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::init::glorot;
use super::loss::argmax;
use crate::diffcore::{Graph, NodeId, ParamHandle, ParamVector, Tensor};
use crate::error::{Error, Result};

/// Tanh MLP: `input_dim -> hidden_dims... -> num_classes`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
}

pub struct ClassifierOutput {
    pub logits: NodeId,
    /// Last hidden activation (after tanh).
    pub features: NodeId,
    /// Last hidden layer before tanh.
    pub pre_features: NodeId,
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_classes == 0 {
            return Err(Error::InvalidConfig("classifier dims must be >= 1".into()));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidConfig(
                "classifier needs at least one hidden layer, all dims >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Width of `h(x)`, the representation handed to the correction network.
    pub fn feature_dim(&self) -> usize {
        *self.hidden_dims.last().expect("validated")
    }

    fn layer_dims(&self) -> Vec<(String, usize, usize)> {
        let mut dims = Vec::new();
        let mut prev = self.input_dim;
        for (i, &h) in self.hidden_dims.iter().enumerate() {
            dims.push((format!("hidden{i}"), prev, h));
            prev = h;
        }
        dims.push(("output".into(), prev, self.num_classes));
        dims
    }

    pub fn init(&self, seed: u64) -> Result<ParamVector> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pv = ParamVector::new();
        for (name, fan_in, fan_out) in self.layer_dims() {
            pv.push(format!("{name}.weight"), glorot(&mut rng, fan_in, fan_out))?;
            pv.push(format!("{name}.bias"), Tensor::zeros(&[fan_out]))?;
        }
        Ok(pv)
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(_, i, o)| i * o + o).sum()
    }
}

/// Records the classifier on `x[batch, input_dim]`.
pub fn classifier_forward(
    g: &mut Graph,
    cfg: &ClassifierConfig,
    x: NodeId,
    w: &ParamHandle,
) -> Result<ClassifierOutput> {
    let shape = g.value(x).shape();
    if shape.len() != 2 || shape[1] != cfg.input_dim {
        return Err(Error::ShapeMismatch {
            op: "classifier_forward",
            lhs: shape.to_vec(),
            rhs: vec![shape.first().copied().unwrap_or(0), cfg.input_dim],
        });
    }
    let mut act = x;
    let mut pre = x;
    for i in 0..cfg.hidden_dims.len() {
        let z = g.matmul(act, w.get(&format!("hidden{i}.weight"))?)?;
        pre = g.add_bias(z, w.get(&format!("hidden{i}.bias"))?)?;
        act = g.tanh(pre)?;
    }
    let z = g.matmul(act, w.get("output.weight")?)?;
    let logits = g.add_bias(z, w.get("output.bias")?)?;
    Ok(ClassifierOutput {
        logits,
        features: act,
        pre_features: pre,
    })
}

/// Forward pass without gradient bookkeeping beyond a throwaway graph.
pub fn classifier_logits(
    cfg: &ClassifierConfig,
    w: &ParamVector,
    x: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let mut g = Graph::new();
    let h = g.bind(w);
    let xn = g.input(x.clone());
    let out = classifier_forward(&mut g, cfg, xn, &h)?;
    Ok((g.value(out.logits).clone(), g.value(out.features).clone()))
}

/// Argmax class per row; ties go to the lowest index.
pub fn predict(cfg: &ClassifierConfig, w: &ParamVector, x: &Tensor) -> Result<Vec<usize>> {
    let (logits, _) = classifier_logits(cfg, w, x)?;
    Ok((0..logits.rows()).map(|i| argmax(logits.row(i))).collect())
}
