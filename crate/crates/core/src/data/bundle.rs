use serde::{Deserialize, Serialize};

use super::{shuffled, Dataset};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::noise::{inject_at, NoiseSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSize {
    Count(usize),
    /// Fraction of the rows the part is drawn from.
    Fraction(f64),
}

impl SplitSize {
    fn resolve(self, available: usize, what: &str) -> Result<usize> {
        let n = match self {
            SplitSize::Count(m) => m,
            SplitSize::Fraction(f) => {
                if !(0.0..=1.0).contains(&f) {
                    return Err(Error::InvalidConfig(format!(
                        "{what} fraction {f} outside [0, 1]"
                    )));
                }
                (f * available as f64).round() as usize
            }
        };
        if n > available {
            return Err(Error::InvalidConfig(format!(
                "{what} size {n} exceeds {available} available rows"
            )));
        }
        Ok(n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub clean: SplitSize,
    pub test: SplitSize,
    #[serde(default = "yes")]
    pub standardize: bool,
}

fn yes() -> bool {
    true
}

/// Per-dimension affine map fitted on the training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Tensor) -> Self {
        let (n, d) = (x.rows(), x.cols());
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .map(|s| {
                let sd = (s / n.max(1) as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        let d = x.cols();
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(d.max(1)) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

/// Clean set `D`, noisy set `D'`, and a test set.
///
/// The true labels of `D'` are kept privately; training code only ever sees
/// a [`TrainingView`].
#[derive(Clone, Debug)]
pub struct DatasetBundle {
    pub clean: Dataset,
    pub noisy: Dataset,
    pub test: Dataset,
    pub standardizer: Standardizer,
    hidden_true_of_noisy: Vec<usize>,
}

/// What a training routine may read from a bundle.
#[derive(Clone, Copy, Debug)]
pub struct TrainingView<'a> {
    pub clean: &'a Dataset,
    pub noisy: &'a Dataset,
}

impl DatasetBundle {
    pub fn num_classes(&self) -> usize {
        self.clean.num_classes
    }

    pub fn dim(&self) -> usize {
        self.clean.dim()
    }

    pub fn training_view(&self) -> TrainingView<'_> {
        TrainingView {
            clean: &self.clean,
            noisy: &self.noisy,
        }
    }

    pub(crate) fn hidden_true_of_noisy(&self) -> &[usize] {
        &self.hidden_true_of_noisy
    }
}

/// Splits rows into test / clean / noisy and corrupts the noisy labels.
///
/// The clean split is stratified: per-class counts differ by at most one.
/// Noise for a row is keyed by its original row index.
pub fn make_bundle(
    data: &Dataset,
    split: &SplitSpec,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<DatasetBundle> {
    let n = data.len();
    let c = data.num_classes;
    if noise.num_classes != c {
        return Err(Error::InvalidConfig(format!(
            "noise spec has {} classes, data has {c}",
            noise.num_classes
        )));
    }
    let order = shuffled(n, seed, 0);
    let n_test = split.test.resolve(n, "test")?;
    let (test_idx, pool) = order.split_at(n_test);

    let clean_count = split.clean.resolve(pool.len(), "clean")?;

    let mut quota: Vec<usize> = (0..c)
        .map(|k| clean_count / c + usize::from(k < clean_count % c))
        .collect();
    if let Some(class) = quota.iter().position(|&q| q == 0) {
        return Err(Error::ClassMissingFromClean { class });
    }
    let mut clean_idx = Vec::with_capacity(clean_count);
    let mut noisy_idx = Vec::with_capacity(pool.len() - clean_count);
    for &i in pool {
        let l = data.labels[i];
        if quota[l] > 0 {
            quota[l] -= 1;
            clean_idx.push(i);
        } else {
            noisy_idx.push(i);
        }
    }
    if let Some(class) = quota.iter().position(|&q| q > 0) {
        return Err(Error::ClassMissingFromClean { class });
    }
    if clean_idx.len() > noisy_idx.len() {
        log::warn!(
            "clean set ({}) larger than noisy set ({})",
            clean_idx.len(),
            noisy_idx.len()
        );
    }

    let standardizer = if split.standardize {
        let train_rows: Vec<usize> = pool.to_vec();
        Standardizer::fit(&data.features.select_rows(&train_rows)?)
    } else {
        Standardizer::identity(data.dim())
    };
    let part = |idx: &[usize]| -> Result<Dataset> {
        let mut d = data.subset(idx)?;
        d.features = standardizer.apply(&d.features);
        Ok(d)
    };

    let clean = part(&clean_idx)?;
    let test = part(test_idx)?;
    let mut noisy = part(&noisy_idx)?;
    let hidden_true_of_noisy = noisy.labels.clone();
    noisy.labels = inject_at(&hidden_true_of_noisy, &noisy_idx, noise)?;

    Ok(DatasetBundle {
        clean,
        noisy,
        test,
        standardizer,
        hidden_true_of_noisy,
    })
}
