#![allow(dead_code)]

use hep2_gss::encoding::GmmModel;
use hep2_gss::raster::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Low-frequency sum of sinusoids.
pub fn smooth_image(n: usize) -> GrayImage {
    GrayImage::from_fn(n, n, |x, y| {
        let (x, y) = (x as f64, y as f64);
        100.0 + 40.0 * (x / 9.0).sin() * (y / 13.0).cos() + 25.0 * ((x + 2.0 * y) / 17.0).sin()
    })
    .unwrap()
}

/// Unit-range raised-cosine bump of radius 26 centered in a 64x64 frame;
/// constant within 6 px of every edge.
pub fn bump_image() -> GrayImage {
    GrayImage::from_fn(64, 64, |x, y| {
        let r = (x as f64 - 31.5).hypot(y as f64 - 31.5);
        if r >= 26.0 {
            0.1
        } else {
            0.1 + 0.4 * (1.0 + (std::f64::consts::PI * r / 26.0).cos())
        }
    })
    .unwrap()
}

/// iid integer pixels in 0..=255.
pub fn noise_image(n: usize, seed: u64) -> GrayImage {
    let mut r = rng(seed);
    GrayImage::from_fn(n, n, |_, _| r.random_range(0..=255) as f64).unwrap()
}

/// Direct 2-D sum with replicated borders.
pub fn brute_convolve(img: &GrayImage, sigma: f64) -> GrayImage {
    let r = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut w = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            w.push(((-(dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = w.iter().sum();
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let mut acc = 0.0;
        let mut i = 0;
        for dy in -r..=r {
            for dx in -r..=r {
                acc += w[i] * img.get_clamped(x as isize + dx, y as isize + dy);
                i += 1;
            }
        }
        acc / total
    })
    .unwrap()
}

pub fn random_gmm(dim: usize, k: usize, seed: u64) -> GmmModel {
    let mut r = rng(seed);
    let raw: Vec<f64> = (0..k).map(|_| r.random_range(0.5..2.0)).collect();
    let s: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / s).collect();
    let means = (0..k * dim).map(|_| r.random_range(-2.0..2.0)).collect();
    let variances = (0..k * dim).map(|_| r.random_range(0.3..1.5)).collect();
    GmmModel::new(dim, weights, means, variances).unwrap()
}

/// Improved Fisher vector by the textbook per-descriptor loop, with
/// posteriors from densities in linear space.
pub fn brute_fisher(g: &GmmModel, xs: &[Vec<f64>]) -> Vec<f64> {
    let (k, d) = (g.components(), g.dim());
    let mut fv = vec![0.0; 2 * k * d];
    for x in xs {
        let dens: Vec<f64> = (0..k)
            .map(|c| {
                let mut p = g.weights()[c];
                for j in 0..d {
                    let v = g.variance(c)[j];
                    let z = x[j] - g.mean(c)[j];
                    p *= (-z * z / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
                }
                p
            })
            .collect();
        let total: f64 = dens.iter().sum();
        for c in 0..k {
            let gamma = dens[c] / total;
            for j in 0..d {
                let z = (x[j] - g.mean(c)[j]) / g.variance(c)[j].sqrt();
                fv[2 * c * d + j] += gamma * z;
                fv[2 * c * d + d + j] += gamma * (z * z - 1.0);
            }
        }
    }
    let n = xs.len() as f64;
    for c in 0..k {
        let w = g.weights()[c];
        for j in 0..d {
            fv[2 * c * d + j] /= n * w.sqrt();
            fv[2 * c * d + d + j] /= n * (2.0 * w).sqrt();
        }
    }
    for v in fv.iter_mut() {
        *v = v.signum() * v.abs().sqrt();
    }
    let norm = fv.iter().map(|v| v * v).sum::<f64>().sqrt();
    fv.iter().map(|v| v / norm).collect()
}

/// Reference solution of the bias-augmented hinge-loss SVM dual
/// `max sum(a) - a'Qa/2, 0 <= a <= c`, `Q_ij = y_i y_j (x_i.x_j + 1)`,
/// by accelerated projected gradient run to a tight KKT residual.
/// Returns `(w, b)`.
pub fn qp_reference(rows: &[Vec<f64>], y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let n = rows.len();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| y[i] * y[j] * (rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum::<f64>() + 1.0))
                .collect()
        })
        .collect();
    let qm = nalgebra::DMatrix::from_fn(n, n, |i, j| q[i][j]);
    let lip = nalgebra::SymmetricEigen::new(qm).eigenvalues.max();
    let grad = |a: &[f64]| -> Vec<f64> { (0..n).map(|i| 1.0 - (0..n).map(|j| q[i][j] * a[j]).sum::<f64>()).collect() };
    let proj = |v: f64| v.clamp(0.0, c);

    let mut a = vec![0.0; n];
    let mut z = a.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let g = grad(&z);
        let next: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| proj(zi + gi / lip)).collect();
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = next
            .iter()
            .zip(&a)
            .map(|(nx, ax)| proj(nx + (t - 1.0) / t_next * (nx - ax)))
            .collect();
        a = next;
        t = t_next;
        let ga = grad(&a);
        let resid = a.iter().zip(&ga).map(|(ai, gi)| (proj(ai + gi) - ai).abs()).fold(0.0, f64::max);
        if resid < 1e-12 {
            break;
        }
    }
    let d = rows[0].len();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for i in 0..n {
        for j in 0..d {
            w[j] += a[i] * y[i] * rows[i][j];
        }
        b += a[i] * y[i];
    }
    (w, b)
}

/// Two overlapping Gaussian classes in `dim` dimensions.
pub fn overlapping_classes(n: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut r = rng(seed);
    let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let label = if i % 2 == 0 { 1.0 } else { -1.0 };
        rows.push((0..dim).map(|j| rand_distr::Distribution::sample(&normal, &mut r) + if j == 0 { 0.8 * label } else { 0.0 }).collect());
        y.push(label);
    }
    (rows, y)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
