//! Dataset construction: synthetic blobs, CSV ingestion, clean/noisy/test
//! bundles and deterministic batching.

mod batch;
mod blobs;
mod bundle;
mod csv_io;

pub use batch::{batch_iter, shuffled, CyclicBatches};
pub use blobs::{blob_centers, gen_blobs, BLOB_RADIUS};
pub use bundle::{make_bundle, DatasetBundle, SplitSize, SplitSpec, Standardizer, TrainingView};
pub use csv_io::{load_csv, load_csv_with_labels, write_csv, CsvSchema, LabelMap};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Feature matrix `[n, d]` with one class id per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let (n, _) = features.expect_matrix("dataset")?;
        if n != labels.len() {
            return Err(Error::ShapeMismatch {
                op: "dataset",
                lhs: features.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            features: self.features.select_rows(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        })
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}
