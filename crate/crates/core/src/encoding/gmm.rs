use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::Pool;
use crate::error::{Error, Result};

const CHUNK: usize = 8192;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmOptions {
    pub components: usize,
    pub max_iter: usize,
    /// Stop once the relative log-likelihood gain falls below this.
    pub tol: f64,
    /// Variance floor as a fraction of the mean per-dimension pool variance.
    pub var_floor_rel: f64,
    /// k-means++ seeding runs on at most this many points per component.
    pub init_points_per_component: usize,
}

impl GmmOptions {
    pub fn new(components: usize) -> Self {
        Self {
            components,
            max_iter: 100,
            tol: 1e-5,
            var_floor_rel: 1e-4,
            init_points_per_component: 64,
        }
    }
}

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    dim: usize,
    weights: Vec<f64>,
    // k x dim, row-major
    means: Vec<f64>,
    variances: Vec<f64>,
}

impl GmmModel {
    pub fn new(dim: usize, weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if dim == 0 || k == 0 || means.len() != k * dim || variances.len() != k * dim {
            return Err(Error::Format {
                what: "gmm",
                reason: format!("inconsistent shapes for k={k}, dim={dim}"),
            });
        }
        if weights.iter().chain(&means).chain(&variances).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gmm parameters"));
        }
        if weights.iter().any(|&w| w <= 0.0) || variances.iter().any(|&v| v <= 0.0) {
            return Err(Error::Degenerate("gmm weights and variances must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Degenerate(format!("gmm weights sum to {total}")));
        }
        Ok(Self {
            dim,
            weights,
            means,
            variances,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.dim..(k + 1) * self.dim]
    }

    pub fn variance(&self, k: usize) -> &[f64] {
        &self.variances[k * self.dim..(k + 1) * self.dim]
    }

    /// Per-component `log w_k + log N(x | mu_k, diag(var_k))`.
    pub fn log_joint(&self, x: &[f64]) -> Vec<f64> {
        (0..self.components())
            .map(|k| {
                let mut acc = 0.0;
                for ((xi, m), v) in x.iter().zip(self.mean(k)).zip(self.variance(k)) {
                    let d = xi - m;
                    acc += d * d / v + v.ln() + LN_2PI;
                }
                self.weights[k].ln() - 0.5 * acc
            })
            .collect()
    }

    /// Posterior component probabilities for one sample.
    pub fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let lj = self.log_joint(x);
        let lse = log_sum_exp(&lj);
        lj.iter().map(|v| (v - lse).exp()).collect()
    }

    pub fn log_likelihood(&self, pool: &Pool) -> f64 {
        let shift = vec![0.0; self.dim];
        let ctx = BatchTerms::new(self, &shift);
        chunk_ranges(pool.len())
            .map(|(s, e)| {
                let lj = ctx.log_joint(&pool.as_matrix(s, e).into_owned());
                lj.column_iter().map(|c| log_sum_exp(c.as_slice())).sum::<f64>()
            })
            .sum()
    }

    /// `k x m` matrix of log joint densities for rows `start..end` of `pool`.
    pub(crate) fn log_joint_batch(&self, pool: &Pool, start: usize, end: usize) -> DMatrix<f64> {
        let shift = vec![0.0; self.dim];
        BatchTerms::new(self, &shift).log_joint(&pool.as_matrix(start, end).into_owned())
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn chunk_ranges(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n.div_ceil(CHUNK)).map(move |c| (c * CHUNK, ((c + 1) * CHUNK).min(n)))
}

/// Precomputed terms for the expanded quadratic form, in coordinates shifted
/// by `shift`.
struct BatchTerms {
    inv_var: DMatrix<f64>,
    mean_inv_var: DMatrix<f64>,
    offset: DVector<f64>,
    shift: DVector<f64>,
}

impl BatchTerms {
    fn new(g: &GmmModel, shift: &[f64]) -> Self {
        let (k, d) = (g.components(), g.dim);
        let mut inv_var = DMatrix::zeros(k, d);
        let mut mean_inv_var = DMatrix::zeros(k, d);
        let mut offset = DVector::zeros(k);
        for c in 0..k {
            let mut quad = 0.0;
            let mut logdet = 0.0;
            for j in 0..d {
                let v = g.variances[c * d + j];
                let m = g.means[c * d + j] - shift[j];
                inv_var[(c, j)] = 1.0 / v;
                mean_inv_var[(c, j)] = m / v;
                quad += m * m / v;
                logdet += v.ln() + LN_2PI;
            }
            offset[c] = g.weights[c].ln() - 0.5 * (logdet + quad);
        }
        Self {
            inv_var,
            mean_inv_var,
            offset,
            shift: DVector::from_column_slice(shift),
        }
    }

    /// `x` is `d x m` in unshifted coordinates; it is shifted in place.
    fn log_joint(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut xs = x.clone();
        for mut col in xs.column_iter_mut() {
            col -= &self.shift;
        }
        let sq = xs.map(|v| v * v);
        let mut out = &self.mean_inv_var * &xs;
        out.gemm(-0.5, &self.inv_var, &sq, 1.0);
        for mut col in out.column_iter_mut() {
            col += &self.offset;
        }
        out
    }
}

/// Result of an EM run, with the log-likelihood recorded at every E-step.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

struct Stats {
    ll: f64,
    s0: DVector<f64>,
    s1: DMatrix<f64>,
    s2: DMatrix<f64>,
}

fn e_step(g: &GmmModel, pool: &Pool, shift: &[f64]) -> Stats {
    let terms = BatchTerms::new(g, shift);
    let shift_v = DVector::from_column_slice(shift);
    let (k, d) = (g.components(), g.dim);
    let ranges: Vec<(usize, usize)> = chunk_ranges(pool.len()).collect();
    let partials: Vec<Stats> = ranges
        .par_iter()
        .map(|&(s, e)| {
            let x = pool.as_matrix(s, e).into_owned();
            let mut lj = terms.log_joint(&x);
            let mut ll = 0.0;
            for mut col in lj.column_iter_mut() {
                let lse = log_sum_exp(col.as_slice());
                ll += lse;
                col.apply(|v| *v = (*v - lse).exp());
            }
            let mut xs = x;
            for mut col in xs.column_iter_mut() {
                col -= &shift_v;
            }
            let sq = xs.map(|v| v * v);
            Stats {
                ll,
                s0: lj.column_sum(),
                s1: &lj * xs.transpose(),
                s2: &lj * sq.transpose(),
            }
        })
        .collect();
    partials.into_iter().fold(
        Stats {
            ll: 0.0,
            s0: DVector::zeros(k),
            s1: DMatrix::zeros(k, d),
            s2: DMatrix::zeros(k, d),
        },
        |mut acc, p| {
            acc.ll += p.ll;
            acc.s0 += p.s0;
            acc.s1 += p.s1;
            acc.s2 += p.s2;
            acc
        },
    )
}

/// Fits a diagonal GMM by EM from a seeded k-means++ start.
pub fn fit_gmm(pool: &Pool, opts: &GmmOptions, seed: u64) -> Result<GmmFit> {
    let k = opts.components;
    let d = pool.dim();
    let n = pool.len();
    if k == 0 {
        return Err(Error::InvalidConfig("gmm needs at least one component".into()));
    }
    if n < 10 * k {
        return Err(Error::InsufficientSamples { have: n, need: 10 * k });
    }

    let mut shift = vec![0.0; d];
    for row in pool.rows() {
        for (s, v) in shift.iter_mut().zip(row) {
            *s += v;
        }
    }
    shift.iter_mut().for_each(|s| *s /= n as f64);
    let mut pool_var = vec![0.0; d];
    for row in pool.rows() {
        for ((acc, v), m) in pool_var.iter_mut().zip(row).zip(&shift) {
            *acc += (v - m) * (v - m);
        }
    }
    pool_var.iter_mut().for_each(|v| *v /= n as f64);
    let mean_var = pool_var.iter().sum::<f64>() / d as f64;
    if mean_var <= 0.0 {
        return Err(Error::Degenerate("all pool samples are identical".into()));
    }
    let floor = opts.var_floor_rel * mean_var;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans_pp(pool, k, opts.init_points_per_component * k, &mut rng);
    let mut model = GmmModel {
        dim: d,
        weights: vec![1.0 / k as f64; k],
        means: centers,
        variances: (0..k).flat_map(|_| pool_var.iter().map(|&v| v.max(floor))).collect(),
    };

    let mut lls = Vec::new();
    let mut converged = false;
    let mut stats = e_step(&model, pool, &shift);
    lls.push(stats.ll);
    for _ in 0..opts.max_iter {
        m_step(&mut model, &stats, &shift, floor, n);
        stats = e_step(&model, pool, &shift);
        let prev = *lls.last().expect("nonempty");
        lls.push(stats.ll);
        if (stats.ll - prev) < opts.tol * prev.abs() {
            converged = true;
            break;
        }
    }

    if model.weights.iter().any(|&w| w <= 0.0) {
        log::warn!("gmm: flooring weights of empty components");
        model.weights.iter_mut().for_each(|w| *w = w.max(1e-12));
    }
    let total: f64 = model.weights.iter().sum();
    model.weights.iter_mut().for_each(|w| *w /= total);

    Ok(GmmFit {
        model,
        log_likelihoods: lls,
        converged,
    })
}

fn m_step(model: &mut GmmModel, st: &Stats, shift: &[f64], floor: f64, n: usize) {
    let d = model.dim;
    for c in 0..model.components() {
        let nk = st.s0[c];
        model.weights[c] = nk / n as f64;
        if nk < f64::MIN_POSITIVE {
            continue;
        }
        for j in 0..d {
            let mu = st.s1[(c, j)] / nk;
            let var = st.s2[(c, j)] / nk - mu * mu;
            model.means[c * d + j] = mu + shift[j];
            model.variances[c * d + j] = var.max(floor);
        }
    }
}

/// k-means++ seeding over a random subset of at most `max_points` rows.
fn kmeans_pp(pool: &Pool, k: usize, max_points: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = pool.len();
    let mut candidates: Vec<usize> = if n <= max_points {
        (0..n).collect()
    } else {
        index::sample(rng, n, max_points).into_vec()
    };
    candidates.sort_unstable();

    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut centers = Vec::with_capacity(k * pool.dim());
    let first = candidates[rng.random_range(0..candidates.len())];
    centers.extend_from_slice(pool.row(first));
    let mut best: Vec<f64> = candidates.iter().map(|&i| dist2(pool.row(i), pool.row(first))).collect();

    for _ in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = candidates.len() - 1;
            for (j, &w) in best.iter().enumerate() {
                if target < w {
                    chosen = j;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..candidates.len())
        };
        let row = pool.row(candidates[pick]);
        centers.extend_from_slice(row);
        for (b, &i) in best.iter_mut().zip(&candidates) {
            *b = b.min(dist2(pool.row(i), row));
        }
    }
    centers
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn two_clusters(n: usize, seed: u64) -> (Pool, [[f64; 2]; 2]) {
        let truth = [[-4.0, 0.0], [4.0, 3.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Normal::new(0.0, 1.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let c = truth[i % 2];
                vec![c[0] + unit.sample(&mut rng), c[1] + unit.sample(&mut rng)]
            })
            .collect();
        (Pool::from_rows(&rows).unwrap(), truth)
    }

    #[test]
    fn recovers_separated_means() {
        let (pool, truth) = two_clusters(10_000, 1);
        let fit = fit_gmm(&pool, &GmmOptions::new(2), 9).unwrap();
        let g = &fit.model;
        for t in truth {
            let best = (0..2)
                .map(|c| g.mean(c).iter().zip(&t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.1, "mean error {best}");
        }
        assert!((g.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_component_is_closed_form() {
        let (pool, _) = two_clusters(500, 2);
        let fit = fit_gmm(&pool, &GmmOptions::new(1), 0).unwrap();
        let n = pool.len() as f64;
        for j in 0..2 {
            let mean = pool.rows().map(|r| r[j]).sum::<f64>() / n;
            let var = pool.rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            assert!((fit.model.mean(0)[j] - mean).abs() < 1e-12 * mean.abs().max(1.0));
            assert!((fit.model.variance(0)[j] - var).abs() < 1e-12 * var);
        }
        assert_eq!(fit.model.weights(), &[1.0]);
    }

    #[test]
    fn log_likelihood_is_monotone() {
        let (pool, _) = two_clusters(3000, 3);
        for seed in 0..5 {
            let fit = fit_gmm(&pool, &GmmOptions::new(4), seed).unwrap();
            for w in fit.log_likelihoods.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn responsibilities_sum_to_one() {
        let (pool, _) = two_clusters(2000, 4);
        let fit = fit_gmm(&pool, &GmmOptions::new(3), 1).unwrap();
        for row in pool.rows().take(100) {
            let r = fit.model.responsibilities(row);
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let batch = fit.model.log_joint_batch(&pool, 0, 10);
        for i in 0..10 {
            let single = fit.model.log_joint(pool.row(i));
            for c in 0..3 {
                assert!((batch[(c, i)] - single[c]).abs() < 1e-9 * single[c].abs().max(1.0));
            }
        }
        let direct: f64 = pool.rows().map(|r| log_sum_exp(&fit.model.log_joint(r))).sum();
        assert!((fit.model.log_likelihood(&pool) - direct).abs() < 1e-8 * direct.abs());
    }

    #[test]
    fn deterministic_given_seed() {
        let (pool, _) = two_clusters(2000, 5);
        let a = fit_gmm(&pool, &GmmOptions::new(3), 42).unwrap();
        let b = fit_gmm(&pool, &GmmOptions::new(3), 42).unwrap();
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn input_errors() {
        let (pool, _) = two_clusters(50, 6);
        assert!(matches!(
            fit_gmm(&pool, &GmmOptions::new(6), 0),
            Err(Error::InsufficientSamples { .. })
        ));
        let same = Pool::from_rows(&vec![vec![1.0, 2.0]; 100]).unwrap();
        assert!(matches!(fit_gmm(&same, &GmmOptions::new(2), 0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn variances_respect_floor() {
        // one near-constant dimension
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.random::<f64>() * 10.0, 1.0]).collect();
        let pool = Pool::from_rows(&rows).unwrap();
        let fit = fit_gmm(&pool, &GmmOptions::new(2), 0).unwrap();
        let floor = 1e-4 * (pool.rows().map(|r| (r[0] - 5.0).powi(2)).sum::<f64>() / 400.0) / 2.0;
        assert!(fit.model.variances().iter().all(|&v| v >= floor * 0.9));
    }
}
