//! Descriptor encoding: PCA decorrelation, a diagonal-covariance GMM codebook,
//! and the improved Fisher vector.

mod fisher;
mod gmm;
mod model;
mod pca;

use rand::seq::index;
use rand::Rng;

pub use fisher::{fisher_vector, FisherAccumulator, FisherOptions, FisherVector, POSTERIOR_FLOOR};
pub use gmm::{fit_gmm, GmmFit, GmmModel, GmmOptions};
pub use model::{EncoderConfig, EncoderModel};
pub use pca::{apply_pca, fit_pca, PcaModel};

use crate::error::{Error, Result};
use crate::load::DescriptorSet;

/// Row-major `f64` sample matrix used to fit and apply the encoder.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pool {
    dim: usize,
    data: Vec<f64>,
}

impl Pool {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("pool dimension must be positive".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: data.len() % dim,
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pool"));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        Self::new(dim, rows.concat())
    }

    pub fn from_set(set: &DescriptorSet) -> Self {
        Self {
            dim: set.dim(),
            data: set.rows().flatten().map(|&v| f64::from(v)).collect(),
        }
    }

    /// Uniform random subsample of at most `max` rows drawn across all sets.
    pub fn subsample(sets: &[&DescriptorSet], max: usize, rng: &mut impl Rng) -> Result<Self> {
        let dim = sets.first().map_or(0, |s| s.dim());
        if sets.iter().any(|s| s.dim() != dim) {
            return Err(Error::InvalidConfig("descriptor sets differ in dimension".into()));
        }
        let total: usize = sets.iter().map(|s| s.len()).sum();
        let mut picks: Vec<usize> = if total <= max {
            (0..total).collect()
        } else {
            index::sample(rng, total, max).into_vec()
        };
        picks.sort_unstable();

        let mut data = Vec::with_capacity(picks.len() * dim);
        let mut set_idx = 0;
        let mut offset = 0;
        for p in picks {
            while p >= offset + sets[set_idx].len() {
                offset += sets[set_idx].len();
                set_idx += 1;
            }
            data.extend(sets[set_idx].row(p - offset).iter().map(|&v| f64::from(v)));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_matrix(&self, start: usize, end: usize) -> nalgebra::DMatrixView<'_, f64> {
        // row-major storage read as a column-major (dim x rows) matrix
        nalgebra::DMatrixView::from_slice(&self.data[start * self.dim..end * self.dim], self.dim, end - start)
    }
}
