use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Distance of every class center from the origin.
pub const BLOB_RADIUS: f64 = 3.0;

/// Class centers evenly spaced on a circle of radius [`BLOB_RADIUS`] in the
/// first two coordinates (remaining coordinates zero). With `dim == 1` the
/// centers are evenly spaced on `[-R, R]`.
pub fn blob_centers(num_classes: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..num_classes)
        .map(|c| {
            let mut center = vec![0.0; dim];
            if dim == 1 {
                let step = if num_classes > 1 {
                    2.0 * BLOB_RADIUS / (num_classes - 1) as f64
                } else {
                    0.0
                };
                center[0] = -BLOB_RADIUS + step * c as f64;
            } else {
                let angle = std::f64::consts::TAU * c as f64 / num_classes as f64;
                center[0] = BLOB_RADIUS * angle.cos();
                center[1] = BLOB_RADIUS * angle.sin();
            }
            center
        })
        .collect()
}

/// Isotropic Gaussian clusters with standard deviation `spread`, rows in
/// class-major order.
pub fn gen_blobs(
    num_classes: usize,
    dim: usize,
    per_class_counts: &[usize],
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes < 2 || dim == 0 {
        return Err(Error::InvalidConfig(
            "blobs need C >= 2 and dim >= 1".into(),
        ));
    }
    if spread.is_nan() || spread <= 0.0 || !spread.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "spread must be > 0, got {spread}"
        )));
    }
    if per_class_counts.len() != num_classes {
        return Err(Error::InvalidConfig(format!(
            "{} per-class counts for {num_classes} classes",
            per_class_counts.len()
        )));
    }
    let centers = blob_centers(num_classes, dim);
    let noise = Normal::new(0.0, spread).expect("validated spread");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: usize = per_class_counts.iter().sum();
    let mut data = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    for (class, (&count, center)) in per_class_counts.iter().zip(&centers).enumerate() {
        for _ in 0..count {
            data.extend(center.iter().map(|c| c + noise.sample(&mut rng)));
            labels.push(class);
        }
    }
    Dataset::new(Tensor::matrix(total, dim, data)?, labels, num_classes)
}
