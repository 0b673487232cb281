use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// A named tensor inside a [`ParamVector`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub tensor: Tensor,
}

/// Ordered, named parameter tensors of one network, with vector arithmetic
/// over the flattened view.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    segments: Vec<Segment>,
}

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_segments(segments: Vec<(String, Tensor)>) -> Result<Self> {
        let mut pv = Self::new();
        for (name, tensor) in segments {
            pv.push(name, tensor)?;
        }
        Ok(pv)
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.segments.iter().any(|s| s.name == name) {
            return Err(Error::InvalidConfig(format!(
                "duplicate parameter segment `{name}`"
            )));
        }
        self.segments.push(Segment { name, tensor });
        Ok(())
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.segments
            .iter()
            .find(|s| s.name == name)
            .map(|s| &s.tensor)
            .ok_or_else(|| Error::UnknownSegment(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.segments
            .iter_mut()
            .find(|s| s.name == name)
            .map(|s| &mut s.tensor)
            .ok_or_else(|| Error::UnknownSegment(name.to_string()))
    }

    /// Total number of scalar parameters.
    pub fn total_len(&self) -> usize {
        self.segments.iter().map(|s| s.tensor.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            segments: self
                .segments
                .iter()
                .map(|s| Segment {
                    name: s.name.clone(),
                    tensor: Tensor::zeros(s.tensor.shape()),
                })
                .collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_len());
        for s in &self.segments {
            out.extend_from_slice(s.tensor.data());
        }
        out
    }

    /// Rebuilds a vector with this one's layout from a flat buffer.
    pub fn unflatten(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.total_len() {
            return Err(Error::ShapeMismatch {
                op: "unflatten",
                lhs: vec![self.total_len()],
                rhs: vec![flat.len()],
            });
        }
        let mut out = self.clone();
        let mut offset = 0;
        for s in &mut out.segments {
            let n = s.tensor.len();
            s.tensor
                .data_mut()
                .copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(out)
    }

    /// Iterates all scalars in flat order.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.segments.iter().flat_map(|s| s.tensor.data().iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.segments
            .iter_mut()
            .flat_map(|s| s.tensor.data_mut().iter_mut())
    }

    fn check_layout(&self, other: &Self, op: &'static str) -> Result<()> {
        let same = self.segments.len() == other.segments.len()
            && self
                .segments
                .iter()
                .zip(&other.segments)
                .all(|(a, b)| a.name == b.name && a.tensor.shape() == b.tensor.shape());
        if same {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                op,
                lhs: vec![self.total_len()],
                rhs: vec![other.total_len()],
            })
        }
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Self, scale: f64) -> Result<()> {
        self.check_layout(other, "add_scaled")?;
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += scale * b;
        }
        Ok(())
    }

    /// Returns `self + scale * other`.
    pub fn plus_scaled(&self, other: &Self, scale: f64) -> Result<Self> {
        let mut out = self.clone();
        out.add_scaled(other, scale)?;
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.plus_scaled(other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.plus_scaled(other, -1.0)
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.iter_mut() {
            *v *= factor;
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.scale(factor);
        out
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_layout(other, "dot")?;
        Ok(self.iter().zip(other.iter()).map(|(a, b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.iter().map(|v| v * v).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        for v in self.iter_mut() {
            *v = value;
        }
    }

    /// Element-wise product.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.check_layout(other, "hadamard")?;
        let mut out = self.clone();
        for (a, b) in out.iter_mut().zip(other.iter()) {
            *a *= b;
        }
        Ok(out)
    }

    /// Applies `f(self_i, other_i)` element-wise in place.
    pub fn zip_apply(&mut self, other: &Self, f: impl Fn(&mut f64, f64)) -> Result<()> {
        self.check_layout(other, "zip_apply")?;
        for (a, &b) in self.iter_mut().zip(other.iter()) {
            f(a, b);
        }
        Ok(())
    }
}
