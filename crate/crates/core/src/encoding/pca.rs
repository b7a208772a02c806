use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::Pool;
use crate::error::{Error, Result};

const CHUNK: usize = 4096;
const RANK_TOL: f64 = 1e-10;

/// Mean and column-orthonormal projection basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub(crate) mean: Vec<f64>,
    // in_dim x out_dim, column-major
    pub(crate) basis: DMatrix<f64>,
    pub(crate) eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn from_parts(mean: Vec<f64>, basis: DMatrix<f64>) -> Result<Self> {
        if basis.nrows() != mean.len() || basis.ncols() > basis.nrows() || basis.ncols() == 0 {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                actual: basis.nrows(),
            });
        }
        let out = basis.ncols();
        Ok(Self {
            mean,
            basis,
            eigenvalues: vec![f64::NAN; out],
        })
    }

    pub fn in_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn out_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Variances along the retained components, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Projects every row of `pool`.
    pub fn transform(&self, pool: &Pool) -> Result<Pool> {
        if pool.dim() != self.in_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim(),
                actual: pool.dim(),
            });
        }
        let mean = DVector::from_column_slice(&self.mean);
        let mut out = Vec::with_capacity(pool.len() * self.out_dim());
        let mut start = 0;
        while start < pool.len() {
            let end = (start + CHUNK).min(pool.len());
            let mut centered = pool.as_matrix(start, end).into_owned();
            for mut col in centered.column_iter_mut() {
                col -= &mean;
            }
            let projected = self.basis.tr_mul(&centered);
            out.extend_from_slice(projected.as_slice());
            start = end;
        }
        Pool::new(self.out_dim(), out)
    }

    /// Maps projected coordinates back to the input space.
    pub fn inverse(&self, coords: &[f64]) -> Result<Vec<f64>> {
        if coords.len() != self.out_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.out_dim(),
                actual: coords.len(),
            });
        }
        let v = &self.basis * DVector::from_column_slice(coords);
        Ok(v.iter().zip(&self.mean).map(|(a, m)| a + m).collect())
    }
}

/// Fits the top-`out_dim` principal axes of `pool`.
///
/// Columns are ordered by decreasing eigenvalue and signed so that each
/// column's largest-magnitude entry is positive.
pub fn fit_pca(pool: &Pool, out_dim: usize) -> Result<PcaModel> {
    let d = pool.dim();
    let n = pool.len();
    if out_dim == 0 || out_dim > d {
        return Err(Error::InvalidConfig(format!(
            "pca output dimension {out_dim} must be in 1..={d}"
        )));
    }
    if n <= out_dim {
        return Err(Error::InsufficientSamples {
            have: n,
            need: out_dim + 1,
        });
    }

    let mut mean = DVector::<f64>::zeros(d);
    for row in pool.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean /= n as f64;

    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let mut centered = pool.as_matrix(start, end).into_owned();
        for mut col in centered.column_iter_mut() {
            col -= &mean;
        }
        cov.gemm(1.0, &centered, &centered.transpose(), 1.0);
        start = end;
    }
    cov /= (n - 1) as f64;
    // symmetrize against rounding in the rank-k updates
    let cov = (&cov + cov.transpose()) * 0.5;

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let top = eig.eigenvalues[order[0]].max(0.0);
    let rank = order
        .iter()
        .filter(|&&i| top > 0.0 && eig.eigenvalues[i] > RANK_TOL * top)
        .count();
    if rank < out_dim {
        return Err(Error::RankDeficient {
            rank,
            requested: out_dim,
        });
    }

    let mut basis = DMatrix::<f64>::zeros(d, out_dim);
    for (j, &i) in order.iter().take(out_dim).enumerate() {
        let col = eig.eigenvectors.column(i);
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        basis.set_column(j, &(col * sign));
    }

    Ok(PcaModel {
        mean: mean.as_slice().to_vec(),
        basis,
        eigenvalues: order.iter().take(out_dim).map(|&i| eig.eigenvalues[i]).collect(),
    })
}

/// `basis^T (d - mean)`.
pub fn apply_pca(model: &PcaModel, d: &[f64]) -> Result<Vec<f64>> {
    if d.len() != model.in_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.in_dim(),
            actual: d.len(),
        });
    }
    let centered = DVector::from_iterator(d.len(), d.iter().zip(&model.mean).map(|(a, m)| a - m));
    Ok(model.basis.tr_mul(&centered).as_slice().to_vec())
}
