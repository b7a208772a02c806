use super::gmm::{log_sum_exp, GmmModel};
use super::Pool;
use crate::error::{Error, Result};

/// Components whose posterior falls below this are skipped.
pub const POSTERIOR_FLOOR: f64 = 1e-10;

const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherOptions {
    /// Exponent of the signed power normalization; 1.0 disables it.
    pub power: f64,
}

impl Default for FisherOptions {
    fn default() -> Self {
        Self { power: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherVector {
    pub values: Vec<f64>,
}

impl FisherVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Streaming accumulator of the per-component gradient statistics.
///
/// Layout per component `k`: `[u_k (dim), v_k (dim)]`.
#[derive(Debug, Clone)]
pub struct FisherAccumulator<'a> {
    gmm: &'a GmmModel,
    count: usize,
    // sum over descriptors of gamma * z and gamma * (z^2 - 1)
    sums: Vec<f64>,
    inv_sd: Vec<f64>,
}

impl<'a> FisherAccumulator<'a> {
    pub fn new(gmm: &'a GmmModel) -> Self {
        let inv_sd = gmm.variances().iter().map(|v| 1.0 / v.sqrt()).collect();
        Self {
            gmm,
            count: 0,
            sums: vec![0.0; 2 * gmm.components() * gmm.dim()],
            inv_sd,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    fn accumulate(&mut self, x: &[f64], lj: &[f64]) {
        let lse = log_sum_exp(lj);
        let d = self.gmm.dim();
        for (k, l) in lj.iter().enumerate() {
            let gamma = (l - lse).exp();
            if gamma < POSTERIOR_FLOOR {
                continue;
            }
            let mu = self.gmm.mean(k);
            let isd = &self.inv_sd[k * d..(k + 1) * d];
            let (u, v) = self.sums[2 * k * d..2 * (k + 1) * d].split_at_mut(d);
            for j in 0..d {
                let z = (x[j] - mu[j]) * isd[j];
                u[j] += gamma * z;
                v[j] += gamma * (z * z - 1.0);
            }
        }
        self.count += 1;
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.gmm.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.gmm.dim(),
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("descriptor"));
        }
        let lj = self.gmm.log_joint(x);
        self.accumulate(x, &lj);
        Ok(())
    }

    pub fn push_pool(&mut self, pool: &Pool) -> Result<()> {
        if pool.dim() != self.gmm.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.gmm.dim(),
                actual: pool.dim(),
            });
        }
        let mut start = 0;
        while start < pool.len() {
            let end = (start + CHUNK).min(pool.len());
            let lj = self.gmm.log_joint_batch(pool, start, end);
            for (i, col) in lj.column_iter().enumerate() {
                let lj: Vec<f64> = col.iter().copied().collect();
                self.accumulate(pool.row(start + i), &lj);
            }
            start = end;
        }
        Ok(())
    }

    /// Averaged and weight-scaled statistics before normalization.
    pub fn statistics(&self) -> Result<Vec<f64>> {
        if self.count == 0 {
            return Err(Error::EmptyDescriptorSet);
        }
        let d = self.gmm.dim();
        let n = self.count as f64;
        let mut out = self.sums.clone();
        for (k, &w) in self.gmm.weights().iter().enumerate() {
            let (u, v) = out[2 * k * d..2 * (k + 1) * d].split_at_mut(d);
            let su = 1.0 / (n * w.sqrt());
            let sv = 1.0 / (n * (2.0 * w).sqrt());
            u.iter_mut().for_each(|x| *x *= su);
            v.iter_mut().for_each(|x| *x *= sv);
        }
        Ok(out)
    }

    pub fn finish(&self, opts: &FisherOptions) -> Result<FisherVector> {
        normalize(self.statistics()?, opts)
    }
}

/// Signed power followed by L2 normalization.
pub(crate) fn normalize(mut values: Vec<f64>, opts: &FisherOptions) -> Result<FisherVector> {
    if opts.power != 1.0 {
        values.iter_mut().for_each(|v| *v = v.signum() * v.abs().powf(opts.power));
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(Error::NonFinite("fisher vector"));
    }
    if norm == 0.0 {
        return Err(Error::Degenerate("fisher vector is identically zero".into()));
    }
    values.iter_mut().for_each(|v| *v /= norm);
    Ok(FisherVector { values })
}

/// Improved Fisher vector of `descriptors`, already projected to the GMM space.
pub fn fisher_vector(gmm: &GmmModel, descriptors: &Pool, opts: &FisherOptions) -> Result<FisherVector> {
    if descriptors.is_empty() {
        return Err(Error::EmptyDescriptorSet);
    }
    let mut acc = FisherAccumulator::new(gmm);
    acc.push_pool(descriptors)?;
    acc.finish(opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_gmm() -> GmmModel {
        GmmModel::new(
            2,
            vec![0.25, 0.75],
            vec![0.0, 0.0, 3.0, -1.0],
            vec![1.0, 2.0, 0.5, 1.5],
        )
        .unwrap()
    }

    #[test]
    fn length_and_norm() {
        let g = toy_gmm();
        let pool = Pool::from_rows(&[vec![0.3, 1.0], vec![2.0, -2.0], vec![5.0, 0.0]]).unwrap();
        let fv = fisher_vector(&g, &pool, &FisherOptions::default()).unwrap();
        assert_eq!(fv.len(), 2 * 2 * 2);
        assert!((fv.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn descriptor_at_mean_zeroes_first_order_block() {
        // far-apart components so the posterior is one component
        let g = GmmModel::new(1, vec![0.5, 0.5], vec![0.0, 1000.0], vec![1.0, 1.0]).unwrap();
        let pool = Pool::from_rows(&[vec![0.0]]).unwrap();
        let mut acc = FisherAccumulator::new(&g);
        acc.push_pool(&pool).unwrap();
        let s = acc.statistics().unwrap();
        assert_eq!(s[0], 0.0);
        // second order: gamma * (0 - 1) / sqrt(2 w)
        assert!((s[1] + 1.0).abs() < 1e-12);
        assert_eq!(&s[2..], &[0.0, 0.0]);
    }

    #[test]
    fn batch_equals_single_push() {
        let g = toy_gmm();
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64 * 0.37).sin() * 4.0, (i as f64 * 0.11).cos()]).collect();
        let pool = Pool::from_rows(&rows).unwrap();
        let mut a = FisherAccumulator::new(&g);
        a.push_pool(&pool).unwrap();
        let mut b = FisherAccumulator::new(&g);
        for r in &rows {
            b.push(r).unwrap();
        }
        let (sa, sb) = (a.statistics().unwrap(), b.statistics().unwrap());
        for (x, y) in sa.iter().zip(&sb) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        let g = toy_gmm();
        let empty = Pool::new(2, vec![]).unwrap();
        assert!(matches!(
            fisher_vector(&g, &empty, &FisherOptions::default()),
            Err(Error::EmptyDescriptorSet)
        ));
        let mut acc = FisherAccumulator::new(&g);
        assert!(acc.push(&[1.0]).is_err());
    }
}
