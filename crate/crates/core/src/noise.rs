//! Synthetic label corruption.
//!
//! Each example draws from its own ChaCha stream keyed by `(seed, index)`,
//! so the corruption of example `i` does not depend on how many examples
//! precede it or on their order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// With probability ρ, redraw uniformly over all `C` classes.
    Unif,
    /// With probability ρ, redraw uniformly over the other `C-1` classes.
    Flip,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rho: f64,
    pub num_classes: usize,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidConfig(format!(
                "rho {} outside [0, 1]",
                self.rho
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(
                "noise needs at least 2 classes".into(),
            ));
        }
        Ok(())
    }
}

/// `entries[i][j] = P(noisy = i | true = j)`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionMatrix {
    num_classes: usize,
    entries: Vec<f64>,
}

impl CorruptionMatrix {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, noisy: usize, truth: usize) -> f64 {
        self.entries[noisy * self.num_classes + truth]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries
            .chunks(self.num_classes)
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// Expected matrix for a noise model.
    pub fn analytic(spec: &NoiseSpec) -> Result<Self> {
        spec.validate()?;
        let c = spec.num_classes;
        let (diag, off) = match spec.kind {
            NoiseKind::Unif => (1.0 - spec.rho + spec.rho / c as f64, spec.rho / c as f64),
            NoiseKind::Flip => (1.0 - spec.rho, spec.rho / (c - 1) as f64),
        };
        let entries = (0..c * c)
            .map(|k| if k / c == k % c { diag } else { off })
            .collect();
        Ok(Self {
            num_classes: c,
            entries,
        })
    }

    /// Column `j` is the distribution of noisy labels among examples whose
    /// true label is `j`.
    pub fn empirical(
        true_labels: &[usize],
        noisy_labels: &[usize],
        num_classes: usize,
    ) -> Result<Self> {
        if true_labels.len() != noisy_labels.len() {
            return Err(Error::ShapeMismatch {
                op: "empirical_corruption_matrix",
                lhs: vec![true_labels.len()],
                rhs: vec![noisy_labels.len()],
            });
        }
        let c = num_classes;
        let mut counts = vec![0usize; c * c];
        let mut totals = vec![0usize; c];
        for (&t, &n) in true_labels.iter().zip(noisy_labels) {
            for label in [t, n] {
                if label >= c {
                    return Err(Error::LabelOutOfRange {
                        label,
                        num_classes: c,
                    });
                }
            }
            counts[n * c + t] += 1;
            totals[t] += 1;
        }
        if let Some(class) = totals.iter().position(|&t| t == 0) {
            return Err(Error::EmptyClass { class });
        }
        let entries = counts
            .iter()
            .enumerate()
            .map(|(k, &n)| n as f64 / totals[k % c] as f64)
            .collect();
        Ok(Self {
            num_classes: c,
            entries,
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn example_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn check_labels(labels: &[usize], c: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= c) {
        Some(&label) => Err(Error::LabelOutOfRange {
            label,
            num_classes: c,
        }),
        None => Ok(()),
    }
}

/// Corrupts a single label drawn at stream position `index`.
pub fn corrupt_one(label: usize, index: usize, spec: &NoiseSpec) -> usize {
    let mut rng = example_rng(spec.seed, index);
    let c = spec.num_classes;
    // Always consume both draws so the stream layout is independent of rho.
    let u: f64 = rng.random();
    let pick: usize = match spec.kind {
        NoiseKind::Unif => rng.random_range(0..c),
        NoiseKind::Flip => rng.random_range(0..c - 1),
    };
    if u >= spec.rho {
        return label;
    }
    match spec.kind {
        NoiseKind::Unif => pick,
        NoiseKind::Flip => {
            if pick >= label {
                pick + 1
            } else {
                pick
            }
        }
    }
}

/// Corrupts `labels[i]` using stream index `indices[i]`.
pub fn inject_at(labels: &[usize], indices: &[usize], spec: &NoiseSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    check_labels(labels, spec.num_classes)?;
    Ok(labels
        .iter()
        .zip(indices)
        .map(|(&l, &i)| corrupt_one(l, i, spec))
        .collect())
}

pub fn inject(labels: &[usize], spec: &NoiseSpec) -> Result<Vec<usize>> {
    let indices: Vec<usize> = (0..labels.len()).collect();
    inject_at(labels, &indices, spec)
}

pub fn inject_unif(labels: &[usize], spec: &NoiseSpec) -> Result<Vec<usize>> {
    if spec.kind != NoiseKind::Unif {
        return Err(Error::InvalidConfig("inject_unif needs a UNIF spec".into()));
    }
    inject(labels, spec)
}

pub fn inject_flip(labels: &[usize], spec: &NoiseSpec) -> Result<Vec<usize>> {
    if spec.kind != NoiseKind::Flip {
        return Err(Error::InvalidConfig("inject_flip needs a FLIP spec".into()));
    }
    inject(labels, spec)
}
