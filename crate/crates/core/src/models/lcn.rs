use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::init::{glorot, normal};
use super::SoftLabel;
use crate::diffcore::{Graph, NodeId, ParamHandle, ParamVector, Tensor};
use crate::error::{Error, Result};

/// Which classifier representation is fed to the correction network.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    /// Last hidden layer after tanh.
    #[default]
    PostActivation,
    /// Last hidden layer before tanh.
    PreActivation,
}

fn default_embed() -> usize {
    128
}

fn default_hidden() -> usize {
    64
}

/// Label correction network: label embedding, then three affine layers
/// `(embed+xdim, hdim) -> (hdim, hdim) -> (hdim, C)` with tanh between, then
/// softmax.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LcnConfig {
    pub num_classes: usize,
    #[serde(default = "default_embed")]
    pub label_embed_dim: usize,
    pub feature_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default)]
    pub feature_source: FeatureSource,
}

impl LcnConfig {
    pub fn new(num_classes: usize, feature_dim: usize) -> Self {
        Self {
            num_classes,
            label_embed_dim: default_embed(),
            feature_dim,
            hidden_dim: default_hidden(),
            feature_source: FeatureSource::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0
            || self.label_embed_dim == 0
            || self.feature_dim == 0
            || self.hidden_dim == 0
        {
            return Err(Error::InvalidConfig("LCN dims must be >= 1".into()));
        }
        Ok(())
    }

    /// `(name, fan_in, fan_out)` of the three affine layers.
    pub fn layer_dims(&self) -> [(&'static str, usize, usize); 3] {
        [
            (
                "layer1",
                self.label_embed_dim + self.feature_dim,
                self.hidden_dim,
            ),
            ("layer2", self.hidden_dim, self.hidden_dim),
            ("layer3", self.hidden_dim, self.num_classes),
        ]
    }

    pub fn init(&self, seed: u64) -> Result<ParamVector> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pv = ParamVector::new();
        pv.push(
            "label_embedding",
            normal(&mut rng, self.num_classes, self.label_embed_dim, 0.01),
        )?;
        for (name, fan_in, fan_out) in self.layer_dims() {
            pv.push(format!("{name}.weight"), glorot(&mut rng, fan_in, fan_out))?;
            pv.push(format!("{name}.bias"), Tensor::zeros(&[fan_out]))?;
        }
        Ok(pv)
    }
}

/// Records the correction network. `features` is detached here, so nothing
/// downstream can send gradient back into whatever produced it.
pub fn lcn_forward(
    g: &mut Graph,
    cfg: &LcnConfig,
    features: NodeId,
    noisy_labels: &[usize],
    alpha: &ParamHandle,
) -> Result<NodeId> {
    if let Some(&label) = noisy_labels.iter().find(|&&l| l >= cfg.num_classes) {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: cfg.num_classes,
        });
    }
    let shape = g.value(features).shape();
    if shape != [noisy_labels.len(), cfg.feature_dim] {
        return Err(Error::ShapeMismatch {
            op: "lcn_forward",
            lhs: shape.to_vec(),
            rhs: vec![noisy_labels.len(), cfg.feature_dim],
        });
    }
    let features = g.stop_gradient(features);
    let embedded = g.embedding(alpha.get("label_embedding")?, noisy_labels)?;
    let mut h = g.concat_cols(embedded, features)?;
    for (i, (name, _, _)) in cfg.layer_dims().iter().enumerate() {
        let z = g.matmul(h, alpha.get(&format!("{name}.weight"))?)?;
        h = g.add_bias(z, alpha.get(&format!("{name}.bias"))?)?;
        if i < 2 {
            h = g.tanh(h)?;
        }
    }
    g.softmax(h)
}

/// Corrected soft labels for a batch, evaluated outside any training graph.
pub fn lcn_predict(
    cfg: &LcnConfig,
    alpha: &ParamVector,
    features: &Tensor,
    noisy_labels: &[usize],
) -> Result<Vec<SoftLabel>> {
    let mut g = Graph::new();
    let h = g.bind(alpha);
    let f = g.input(features.clone());
    let out = lcn_forward(&mut g, cfg, f, noisy_labels, &h)?;
    let probs = g.value(out);
    (0..probs.rows())
        .map(|i| SoftLabel::new(probs.row(i).to_vec()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> LcnConfig {
        LcnConfig {
            num_classes: 3,
            label_embed_dim: 8,
            feature_dim: 4,
            hidden_dim: 6,
            feature_source: FeatureSource::PostActivation,
        }
    }

    #[test]
    fn default_layer_dims() {
        let c = LcnConfig::new(10, 64);
        assert_eq!(
            c.layer_dims(),
            [
                ("layer1", 128 + 64, 64),
                ("layer2", 64, 64),
                ("layer3", 64, 10)
            ]
        );
        let a = c.init(0).unwrap();
        assert_eq!(a.get("label_embedding").unwrap().shape(), &[10, 128]);
    }

    #[test]
    fn embedding_init_is_small() {
        let a = LcnConfig::new(4, 8).init(5).unwrap();
        let e = a.get("label_embedding").unwrap();
        let var = e.data().iter().map(|v| v * v).sum::<f64>() / e.len() as f64;
        assert!(
            var.sqrt() < 0.02 && var.sqrt() > 0.005,
            "std {}",
            var.sqrt()
        );
    }

    #[test]
    fn outputs_are_distributions_and_deterministic() {
        let c = cfg();
        let a = c.init(11).unwrap();
        let f = Tensor::matrix(
            3,
            4,
            vec![
                0.1, 0.2, -0.3, 0.9, 0.1, 0.2, -0.3, 0.9, -1.0, 0.0, 0.5, 0.5,
            ],
        )
        .unwrap();
        let out = lcn_predict(&c, &a, &f, &[2, 2, 0]).unwrap();
        for s in &out {
            assert!((s.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(s.probs().iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn label_out_of_range() {
        let c = cfg();
        let a = c.init(0).unwrap();
        let err = lcn_predict(&c, &a, &Tensor::zeros(&[1, 4]), &[3]).unwrap_err();
        assert!(matches!(
            err,
            Error::LabelOutOfRange {
                label: 3,
                num_classes: 3
            }
        ));
    }
}
