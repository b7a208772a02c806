use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};

/// Per-dimension z-scoring fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    /// Dimensions with zero spread are centered but not rescaled.
    pub fn fit(data: &FeatureMatrix) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyDescriptorSet);
        }
        let n = data.rows() as f64;
        let d = data.dim();
        let mut mean = vec![0.0; d];
        for i in 0..data.rows() {
            for (m, v) in mean.iter_mut().zip(data.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for i in 0..data.rows() {
            for ((s, v), m) in var.iter_mut().zip(data.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &mut [f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) * s;
        }
        Ok(())
    }

    pub fn transform(&self, data: &FeatureMatrix) -> Result<FeatureMatrix> {
        let mut out = data.clone();
        for row in out.values_mut().chunks_exact_mut(data.dim().max(1)) {
            self.apply(row)?;
        }
        Ok(out)
    }
}
