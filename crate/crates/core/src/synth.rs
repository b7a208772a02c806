//! Seeded six-class synthetic texture corpus with specimen structure.
//!
//! Each class is a texture family; each specimen draws its own gain, offset
//! and spatial scale, and every image adds iid Gaussian noise whose standard
//! deviation is `noise` times the pattern amplitude.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{DatasetManifest, ManifestEntry, CANONICAL_CLASSES};
use crate::raster::{save_image, BitDepth, GrayImage, SampleScale};
use crate::scalespace::{convolve, gaussian_kernel};
use crate::seed::{stage_seed, Stage};

const AMPLITUDE: f64 = 120.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub per_class: usize,
    pub specimens_per_class: usize,
    pub size: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            per_class: 50,
            specimens_per_class: 5,
            size: 64,
            noise: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.per_class == 0 || self.specimens_per_class == 0 || self.specimens_per_class > self.per_class {
            return Err(Error::InvalidConfig(
                "synth needs 1 <= specimens_per_class <= per_class".into(),
            ));
        }
        if self.size < 16 {
            return Err(Error::InvalidConfig("synth image size must be at least 16".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidConfig("synth noise must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub image: GrayImage,
    pub label: String,
    pub specimen: String,
}

#[derive(Debug, Clone, Copy)]
struct Jitter {
    gain: f64,
    offset: f64,
    scale: f64,
}

fn grating(n: usize, period: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let theta = rng.random_range(0.0..PI);
    let phase = rng.random_range(0.0..2.0 * PI);
    let (c, s) = (theta.cos(), theta.sin());
    (0..n * n)
        .map(|i| {
            let (x, y) = ((i % n) as f64, (i / n) as f64);
            0.5 + 0.5 * (2.0 * PI * (x * c + y * s) / period + phase).sin()
        })
        .collect()
}

fn blobs(n: usize, count: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    let reach = (3.0 * sigma).ceil() as isize;
    for _ in 0..count {
        let (bx, by) = (rng.random_range(0.0..n as f64), rng.random_range(0.0..n as f64));
        let (cx, cy) = (bx as isize, by as isize);
        for y in (cy - reach).max(0)..(cy + reach + 1).min(n as isize) {
            for x in (cx - reach).max(0)..(cx + reach + 1).min(n as isize) {
                let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                out[y as usize * n + x as usize] += (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    out.iter().map(|v| v.min(1.0)).collect()
}

fn rings(n: usize, period: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let c = n as f64 / 2.0;
    let (cx, cy) = (c + rng.random_range(-c / 4.0..c / 4.0), c + rng.random_range(-c / 4.0..c / 4.0));
    let phase = rng.random_range(0.0..2.0 * PI);
    (0..n * n)
        .map(|i| {
            let r = ((i % n) as f64 - cx).hypot((i / n) as f64 - cy);
            0.5 + 0.5 * (2.0 * PI * r / period + phase).cos()
        })
        .collect()
}

fn filtered_noise(n: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let raw = GrayImage::new(n, n, (0..n * n).map(|_| unit.sample(rng)).collect())?;
    let smooth = convolve(&raw, &gaussian_kernel(sigma)?)?;
    let (lo, hi) = smooth.min_max();
    Ok(smooth.data().iter().map(|v| (v - lo) / (hi - lo).max(1e-12)).collect())
}

/// Noise-free pattern in roughly `[0, 1]` for class `class`.
fn pattern(class: usize, n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    Ok(match class {
        0 => grating(n, 4.0 * scale, rng),
        1 => grating(n, 11.0 * scale, rng),
        2 => blobs(n, (n * n) / 700, 4.0 * scale, rng),
        3 => blobs(n, (n * n) / 70, 1.5 * scale, rng),
        4 => rings(n, 7.0 * scale, rng),
        _ => filtered_noise(n, 2.0 * scale, rng)?,
    })
}

fn render(class: usize, cfg: &SynthConfig, jitter: Jitter, seed: u64) -> Result<GrayImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.size;
    let p = pattern(class, n, jitter.scale, &mut rng)?;
    let noise = Normal::new(0.0, cfg.noise * AMPLITUDE).expect("valid normal");
    let data = p
        .iter()
        .map(|v| (jitter.offset + jitter.gain * AMPLITUDE * v + noise.sample(&mut rng)).round().clamp(0.0, 255.0))
        .collect();
    GrayImage::new(n, n, data)
}

/// Generates the corpus in manifest order: class-major, then image index.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<SynthSample>> {
    cfg.validate()?;
    let classes = CANONICAL_CLASSES.len();
    let jitters: Vec<Jitter> = (0..classes * cfg.specimens_per_class)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(cfg.seed, Stage::Synth, (1 << 32) + s as u64));
            Jitter {
                gain: rng.random_range(0.8..1.2),
                offset: rng.random_range(30.0..60.0),
                scale: rng.random_range(0.9..1.1),
            }
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..classes).flat_map(|c| (0..cfg.per_class).map(move |i| (c, i))).collect();
    jobs.par_iter()
        .map(|&(c, i)| {
            let spec = i % cfg.specimens_per_class;
            let index = (c * cfg.per_class + i) as u64;
            let image = render(c, cfg, jitters[c * cfg.specimens_per_class + spec], stage_seed(cfg.seed, Stage::Synth, index))?;
            Ok(SynthSample {
                image,
                label: CANONICAL_CLASSES[c].to_string(),
                specimen: format!("c{c}s{spec}"),
            })
        })
        .collect()
}

/// Writes 8-bit PGM images under `dir/images` and `dir/manifest.csv`.
pub fn write_corpus(dir: impl AsRef<Path>, cfg: &SynthConfig) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    let samples = generate(cfg)?;
    let img_dir = dir.join("images");
    std::fs::create_dir_all(&img_dir)?;
    let entries = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let path = img_dir.join(format!("{i:05}_{}.pgm", s.specimen));
            save_image(&s.image, &path, BitDepth::Eight, SampleScale::Raw)?;
            Ok(ManifestEntry {
                path,
                label: s.label.clone(),
                specimen: s.specimen.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest::new(entries)?;
    manifest.save(dir.join("manifest.csv"))?;
    Ok(manifest)
}
