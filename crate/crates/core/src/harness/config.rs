use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bilevel::{Feed, TrainConfig};
use crate::data::{SplitSize, SplitSpec};
use crate::error::{Error, Result};
use crate::models::{ClassifierConfig, FeatureSource, LcnConfig};
use crate::noise::{NoiseKind, NoiseSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Mlc,
    CleanOnly,
    NoisyOnly,
    CleanPlusNoisy,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Mlc,
        Method::CleanOnly,
        Method::NoisyOnly,
        Method::CleanPlusNoisy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mlc => "mlc",
            Method::CleanOnly => "clean_only",
            Method::NoisyOnly => "noisy_only",
            Method::CleanPlusNoisy => "clean_plus_noisy",
        }
    }

    /// Data feed for the label-correction-free methods.
    pub fn feed(self) -> Option<Feed> {
        match self {
            Method::Mlc => None,
            Method::CleanOnly => Some(Feed::CleanOnly),
            Method::NoisyOnly => Some(Feed::NoisyOnly),
            Method::CleanPlusNoisy => Some(Feed::CleanPlusNoisy),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the rows come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Gaussian clusters around centers on a circle of radius 3.
    Blobs {
        num_classes: usize,
        dim: usize,
        per_class: usize,
        spread: f64,
        seed: u64,
    },
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default)]
        feature_columns: Option<Vec<String>>,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Blobs {
            num_classes: 4,
            dim: 2,
            per_class: 3100,
            spread: 1.3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub rho: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            kind: NoiseKind::Flip,
            rho: 0.6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierSpec {
    pub hidden_dims: Vec<usize>,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        Self {
            hidden_dims: vec![32],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LcnSpec {
    pub label_embed_dim: usize,
    pub hidden_dim: usize,
    pub feature_source: FeatureSource,
}

impl Default for LcnSpec {
    fn default() -> Self {
        Self {
            label_embed_dim: 128,
            hidden_dim: 64,
            feature_source: FeatureSource::PostActivation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub clean: SplitSize,
    pub test: SplitSize,
    pub standardize: bool,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            clean: SplitSize::Count(400),
            test: SplitSize::Count(2000),
            standardize: true,
            seed: 0,
        }
    }
}

/// One experiment, as read from a JSON file. Every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub method: Method,
    pub dataset: DatasetSpec,
    pub split: SplitConfig,
    pub noise: NoiseConfig,
    pub classifier: ClassifierSpec,
    pub lcn: LcnSpec,
    pub train: TrainConfig,
    /// Runs per configuration; repeat `r` offsets every seed by `r`.
    pub repeats: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            method: Method::Mlc,
            dataset: DatasetSpec::default(),
            split: SplitConfig::default(),
            noise: NoiseConfig::default(),
            classifier: ClassifierSpec::default(),
            lcn: LcnSpec::default(),
            train: TrainConfig::default(),
            repeats: 5,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks everything that can be checked without touching data files.
    pub fn validate(&self) -> Result<()> {
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return Err(Error::InvalidConfig(format!(
                "run_id `{}` must be a plain name",
                self.run_id
            )));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.noise.rho) {
            return Err(Error::InvalidConfig(format!(
                "rho {} outside [0, 1]",
                self.noise.rho
            )));
        }
        match &self.dataset {
            DatasetSpec::Blobs {
                num_classes,
                dim,
                per_class,
                spread,
                ..
            } => {
                if *num_classes < 2 || *dim == 0 || *per_class == 0 {
                    return Err(Error::InvalidConfig(
                        "blobs need num_classes >= 2, dim >= 1, per_class >= 1".into(),
                    ));
                }
                if !(*spread > 0.0 && spread.is_finite()) {
                    return Err(Error::InvalidConfig(format!("blob spread {spread}")));
                }
                self.classifier_config(*dim, *num_classes).validate()?;
                self.lcn_config(*num_classes)?.validate()?;
            }
            DatasetSpec::Csv {
                path, label_column, ..
            } => {
                if label_column.is_empty() {
                    return Err(Error::InvalidConfig("csv label_column is empty".into()));
                }
                if path.as_os_str().is_empty() {
                    return Err(Error::InvalidConfig("csv path is empty".into()));
                }
            }
        }
        if self.lcn.label_embed_dim == 0 || self.lcn.hidden_dim == 0 {
            return Err(Error::InvalidConfig("LCN dims must be >= 1".into()));
        }
        self.train.validate()?;
        if self.method != Method::NoisyOnly {
            let needed = if self.method == Method::Mlc {
                2 * self.train.batch_size_clean
            } else {
                1
            };
            if let SplitSize::Count(n) = self.split.clean {
                if n < needed {
                    return Err(Error::InvalidConfig(format!(
                        "method {} needs a clean split of at least {needed}, got {n}",
                        self.method
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn classifier_config(&self, input_dim: usize, num_classes: usize) -> ClassifierConfig {
        ClassifierConfig {
            input_dim,
            hidden_dims: self.classifier.hidden_dims.clone(),
            num_classes,
        }
    }

    pub fn lcn_config(&self, num_classes: usize) -> Result<LcnConfig> {
        let feature_dim = *self
            .classifier
            .hidden_dims
            .last()
            .ok_or_else(|| Error::InvalidConfig("classifier needs a hidden layer".into()))?;
        Ok(LcnConfig {
            num_classes,
            label_embed_dim: self.lcn.label_embed_dim,
            feature_dim,
            hidden_dim: self.lcn.hidden_dim,
            feature_source: self.lcn.feature_source,
        })
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            clean: self.split.clean,
            test: self.split.test,
            standardize: self.split.standardize,
        }
    }

    pub fn noise_spec(&self, num_classes: usize) -> NoiseSpec {
        NoiseSpec {
            kind: self.noise.kind,
            rho: self.noise.rho,
            num_classes,
            seed: self.noise.seed,
        }
    }

    /// The configuration of repeat `r`: every seed shifted by `r`.
    pub fn for_repeat(&self, r: usize) -> Self {
        let r = r as u64;
        let mut c = self.clone();
        c.train.seed = c.train.seed.wrapping_add(r);
        c.noise.seed = c.noise.seed.wrapping_add(r);
        c.split.seed = c.split.seed.wrapping_add(r);
        if let DatasetSpec::Blobs { seed, .. } = &mut c.dataset {
            *seed = seed.wrapping_add(r);
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        let c = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut c = ExperimentConfig::default();
        c.noise.rho = 0.1 + 0.2;
        c.train.meta_lr = 1.0 / 3.0;
        c.method = Method::CleanPlusNoisy;
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"methdo": "mlc"}"#).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_json(r#"{"noise": {"rho": 1.5}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"repeats": 0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"split": {"clean": {"count": 10}}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"train": {"k": 0}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"classifier": {"hidden_dims": []}}"#).is_err());
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("mcl".parse::<Method>().is_err());
    }

    #[test]
    fn repeat_offsets_every_seed() {
        let c = ExperimentConfig::default().for_repeat(3);
        assert_eq!(c.train.seed, 3);
        assert_eq!(c.noise.seed, 3);
        assert_eq!(c.split.seed, 3);
        assert!(matches!(c.dataset, DatasetSpec::Blobs { seed: 3, .. }));
    }
}
