use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::FeatureMatrix;
use crate::binio::{expect_magic, read_f64, read_f64s, read_u32, write_f64s, write_u32};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GSSSVM\0\0";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmOptions {
    pub c: f64,
    /// Relative duality-gap tolerance.
    pub tol: f64,
    pub max_epochs: usize,
    /// Reweight C per class inversely to class frequency.
    pub balanced: bool,
}

impl Default for SvmOptions {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-4,
            max_epochs: 1000,
            balanced: false,
        }
    }
}

/// Per-subproblem solver record.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryTrace {
    /// Dual objective after every epoch, starting with the initial value 0.
    pub dual_objectives: Vec<f64>,
    pub primal: f64,
    pub gap: f64,
    pub epochs: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    num_classes: usize,
    dim: usize,
    c: f64,
    // num_classes x dim, row-major
    weights: Vec<f64>,
    biases: Vec<f64>,
}

/// Solves the L2-regularized hinge-loss problem
/// `min 0.5 |w|^2 + 0.5 b^2 + sum_i C_i max(0, 1 - y_i (w.x_i + b))`
/// by dual coordinate descent on a seeded permutation schedule.
pub fn train_binary(
    rows: &[&[f64]],
    y: &[f64],
    cost: &[f64],
    opts: &SvmOptions,
    seed: u64,
) -> (Vec<f64>, f64, BinaryTrace) {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut alpha = vec![0.0; n];
    let qii: Vec<f64> = rows.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>() + 1.0).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dot = |w: &[f64], r: &[f64]| w.iter().zip(r).map(|(a, b)| a * b).sum::<f64>();

    let mut trace = BinaryTrace {
        dual_objectives: vec![0.0],
        primal: f64::INFINITY,
        gap: f64::INFINITY,
        epochs: 0,
        converged: false,
    };
    for epoch in 1..=opts.max_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let g = y[i] * (dot(&w, rows[i]) + b) - 1.0;
            let new = (alpha[i] - g / qii[i]).clamp(0.0, cost[i]);
            let delta = (new - alpha[i]) * y[i];
            if delta != 0.0 {
                alpha[i] = new;
                for (wj, xj) in w.iter_mut().zip(rows[i]) {
                    *wj += delta * xj;
                }
                b += delta;
            }
        }
        let half_norm = 0.5 * (dot(&w, &w) + b * b);
        let dual = alpha.iter().sum::<f64>() - half_norm;
        let loss: f64 = (0..n)
            .map(|i| cost[i] * (1.0 - y[i] * (dot(&w, rows[i]) + b)).max(0.0))
            .sum();
        let primal = half_norm + loss;
        trace.dual_objectives.push(dual);
        trace.primal = primal;
        trace.gap = primal - dual;
        trace.epochs = epoch;
        if trace.gap <= opts.tol * primal.abs().max(1.0) {
            trace.converged = true;
            break;
        }
    }
    (w, b, trace)
}

fn check_training(data: &FeatureMatrix, opts: &SvmOptions) -> Result<()> {
    if !(opts.c > 0.0 && opts.c.is_finite()) {
        return Err(Error::InvalidConfig(format!("svm.c must be positive, got {}", opts.c)));
    }
    if data.dim() == 0 || data.is_empty() {
        return Err(Error::EmptyDescriptorSet);
    }
    if data.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training features"));
    }
    let mut counts = vec![0usize; data.num_classes()];
    for &l in data.labels() {
        counts[l] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Trains one-vs-rest classifiers and returns each subproblem's trace.
///
/// Classes absent from `data` get zero weights and a bias of -1e300, so they
/// are never predicted.
pub fn train_svm_traced(data: &FeatureMatrix, opts: &SvmOptions, seed: u64) -> Result<(SvmModel, Vec<BinaryTrace>)> {
    check_training(data, opts)?;
    let k = data.num_classes();
    let n = data.rows();
    let rows: Vec<&[f64]> = (0..n).map(|i| data.row(i)).collect();
    let results: Vec<(Vec<f64>, f64, BinaryTrace)> = (0..k)
        .into_par_iter()
        .map(|c| {
            let y: Vec<f64> = data.labels().iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            let pos = y.iter().filter(|&&v| v > 0.0).count();
            if pos == 0 {
                let trace = BinaryTrace {
                    dual_objectives: vec![0.0],
                    primal: 0.0,
                    gap: 0.0,
                    epochs: 0,
                    converged: true,
                };
                return (vec![0.0; data.dim()], -1e300, trace);
            }
            let cost: Vec<f64> = if opts.balanced {
                let (cp, cn) = (
                    opts.c * n as f64 / (2.0 * pos as f64),
                    opts.c * n as f64 / (2.0 * (n - pos) as f64),
                );
                y.iter().map(|&v| if v > 0.0 { cp } else { cn }).collect()
            } else {
                vec![opts.c; n]
            };
            train_binary(&rows, &y, &cost, opts, seed)
        })
        .collect();
    let mut model = SvmModel {
        num_classes: k,
        dim: data.dim(),
        c: opts.c,
        weights: Vec::with_capacity(k * data.dim()),
        biases: Vec::with_capacity(k),
    };
    let mut traces = Vec::with_capacity(k);
    for (c, (w, b, t)) in results.into_iter().enumerate() {
        if !t.converged {
            log::warn!("svm class {c}: gap {:.3e} after {} epochs", t.gap, t.epochs);
        }
        model.weights.extend(w);
        model.biases.push(b);
        traces.push(t);
    }
    Ok((model, traces))
}

pub fn train_svm(data: &FeatureMatrix, opts: &SvmOptions, seed: u64) -> Result<SvmModel> {
    train_svm_traced(data, opts, seed).map(|(m, _)| m)
}

/// Argmax of the one-vs-rest scores; ties go to the lowest class id.
pub fn predict(model: &SvmModel, x: &[f64]) -> Result<(usize, Vec<f64>)> {
    let scores = model.scores(x)?;
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = c;
        }
    }
    Ok((best, scores))
}

impl SvmModel {
    pub fn new(num_classes: usize, dim: usize, c: f64, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        if dim == 0 || num_classes == 0 || weights.len() != num_classes * dim || biases.len() != num_classes {
            return Err(Error::Format {
                what: "svm model",
                reason: "inconsistent shapes".into(),
            });
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) || !c.is_finite() {
            return Err(Error::NonFinite("svm model"));
        }
        Ok(Self {
            num_classes,
            dim,
            c,
            weights,
            biases,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn weights(&self, class: usize) -> &[f64] {
        &self.weights[class * self.dim..(class + 1) * self.dim]
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok((0..self.num_classes)
            .map(|c| self.weights(c).iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.biases[c])
            .collect())
    }

    pub fn predict_all(&self, data: &FeatureMatrix) -> Result<Vec<usize>> {
        (0..data.rows()).map(|i| predict(self, data.row(i)).map(|p| p.0)).collect()
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        write_u32(&mut w, self.num_classes as u32)?;
        write_u32(&mut w, self.dim as u32)?;
        write_f64s(&mut w, &[self.c])?;
        write_f64s(&mut w, &self.weights)?;
        write_f64s(&mut w, &self.biases)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        expect_magic(&mut r, MAGIC, "svm model")?;
        let k = read_u32(&mut r)? as usize;
        let dim = read_u32(&mut r)? as usize;
        let c = read_f64(&mut r)?;
        let weights = read_f64s(&mut r, k * dim)?;
        let biases = read_f64s(&mut r, k)?;
        Self::new(k, dim, c, weights, biases)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blobs(n: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [[-2.0, 0.0], [2.0, 1.0], [0.0, 4.0]];
        let mut m = FeatureMatrix::new(2, vec!["a".into(), "b".into(), "c".into()]);
        for i in 0..n {
            let c = i % 3;
            let row = [
                centers[c][0] + rng.random_range(-0.5..0.5),
                centers[c][1] + rng.random_range(-0.5..0.5),
            ];
            m.push(&row, c, format!("s{}", i % 5)).unwrap();
        }
        m
    }

    #[test]
    fn separable_training_accuracy() {
        let m = blobs(90, 1);
        let (model, traces) = train_svm_traced(&m, &SvmOptions::default(), 3).unwrap();
        assert_eq!(model.predict_all(&m).unwrap(), m.labels());
        for t in &traces {
            assert!(t.converged);
            assert!(t.gap <= 1e-4 * t.primal.max(1.0));
            for w in t.dual_objectives.windows(2) {
                assert!(w[1] >= w[0] - 1e-12);
            }
        }
    }

    #[test]
    fn zero_input_and_scaling() {
        let model = SvmModel::new(3, 2, 1.0, vec![1.0, 0.0, 0.0, 1.0, -1.0, -1.0], vec![0.1, 0.3, 0.3]).unwrap();
        let (label, scores) = predict(&model, &[0.0, 0.0]).unwrap();
        assert_eq!(scores, vec![0.1, 0.3, 0.3]);
        assert_eq!(label, 1);
        let zero_bias = SvmModel::new(3, 2, 1.0, model.weights.clone(), vec![0.0; 3]).unwrap();
        let x = [0.7, -0.2];
        let base = predict(&zero_bias, &x).unwrap().0;
        for alpha in [0.01, 1.0, 250.0] {
            assert_eq!(predict(&zero_bias, &[x[0] * alpha, x[1] * alpha]).unwrap().0, base);
        }
        assert!(predict(&model, &[1.0]).is_err());
    }

    #[test]
    fn relabeling_permutes_predictions() {
        let m = blobs(60, 2);
        let perm = [2usize, 0, 1];
        let mut p = FeatureMatrix::new(2, vec!["a".into(), "b".into(), "c".into()]);
        for i in 0..m.rows() {
            p.push(m.row(i), perm[m.labels()[i]], m.specimens()[i].clone()).unwrap();
        }
        let a = train_svm(&m, &SvmOptions::default(), 7).unwrap();
        let b = train_svm(&p, &SvmOptions::default(), 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let x = [rng.random_range(-4.0..4.0), rng.random_range(-2.0..6.0)];
            assert_eq!(perm[predict(&a, &x).unwrap().0], predict(&b, &x).unwrap().0);
        }
    }

    #[test]
    fn deterministic_and_roundtrip() {
        let m = blobs(45, 3);
        let a = train_svm(&m, &SvmOptions::default(), 11).unwrap();
        let b = train_svm(&m, &SvmOptions::default(), 11).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_to(&mut buf).unwrap();
        assert_eq!(SvmModel::read_from(buf.as_slice()).unwrap(), a);
    }

    #[test]
    fn training_errors() {
        let mut m = FeatureMatrix::new(1, vec!["a".into(), "b".into()]);
        m.push(&[1.0], 0, "s").unwrap();
        m.push(&[2.0], 0, "s").unwrap();
        assert!(matches!(train_svm(&m, &SvmOptions::default(), 0), Err(Error::SingleClass)));
        m.push(&[3.0], 1, "s").unwrap();
        let bad = SvmOptions { c: 0.0, ..SvmOptions::default() };
        assert!(train_svm(&m, &bad, 0).is_err());
    }

    #[test]
    fn balanced_weights_train() {
        let mut m = blobs(30, 4);
        for _ in 0..40 {
            m.push(&[-2.0, 0.1], 0, "extra").unwrap();
        }
        let opts = SvmOptions { balanced: true, ..SvmOptions::default() };
        let model = train_svm(&m, &opts, 1).unwrap();
        assert_eq!(model.predict_all(&m).unwrap(), m.labels());
    }
}
