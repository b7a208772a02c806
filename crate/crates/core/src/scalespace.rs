//! Gaussian scale space: kernels, separable convolution and the level stack.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::GrayImage;

/// Continuous 2-D Gaussian density at offset `(x, y)`.
pub fn gaussian_density(x: f64, y: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    (-(x * x + y * y) / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2)
}

/// Square Gaussian kernel truncated at `ceil(3 sigma)` and normalized to unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    sigma: f64,
    radius: usize,
    // normalized 1-D factor; the 2-D weights are its outer product
    taps: Vec<f64>,
    weights: Vec<f64>,
}

impl Kernel2D {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    /// Row-major `(2r+1)^2` weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at signed offset `(dx, dy)` from the center.
    pub fn weight(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius as isize;
        assert!(dx.abs() <= r && dy.abs() <= r, "offset outside kernel support");
        self.weights[((dy + r) as usize) * self.side() + (dx + r) as usize]
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }
}

pub fn truncation_radius(sigma: f64) -> usize {
    (3.0 * sigma).ceil() as usize
}

pub fn gaussian_kernel(sigma: f64) -> Result<Kernel2D> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::NonPositiveSigma(sigma));
    }
    let radius = truncation_radius(sigma).max(1);
    let r = radius as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    let taps: Vec<f64> = raw.iter().map(|v| v / total).collect();

    let side = taps.len();
    let mut weights = Vec::with_capacity(side * side);
    for &wy in &taps {
        for &wx in &taps {
            weights.push(wx * wy);
        }
    }
    let mass: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= mass);

    Ok(Kernel2D {
        sigma,
        radius,
        taps,
        weights,
    })
}

/// Convolves with edge replication at the borders, as two 1-D passes.
pub fn convolve(img: &GrayImage, k: &Kernel2D) -> Result<GrayImage> {
    let (w, h) = (img.width(), img.height());
    if k.radius > w.min(h) {
        return Err(Error::KernelTooLarge {
            radius: k.radius,
            width: w,
            height: h,
        });
    }
    let r = k.radius;
    let taps = &k.taps;
    let src = img.data();

    let mut horiz = vec![0.0; w * h];
    let mut padded = vec![0.0; w + 2 * r];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (i, p) in padded.iter_mut().enumerate() {
            let x = (i as isize - r as isize).clamp(0, w as isize - 1) as usize;
            *p = row[x];
        }
        let out = &mut horiz[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            *o = padded[x..x + taps.len()]
                .iter()
                .zip(taps)
                .map(|(a, b)| a * b)
                .sum();
        }
    }

    let mut out = vec![0.0; w * h];
    let mut column = vec![0.0; h + 2 * r];
    for x in 0..w {
        for (i, c) in column.iter_mut().enumerate() {
            let y = (i as isize - r as isize).clamp(0, h as isize - 1) as usize;
            *c = horiz[y * w + x];
        }
        for y in 0..h {
            out[y * w + x] = column[y..y + taps.len()]
                .iter()
                .zip(taps)
                .map(|(a, b)| a * b)
                .sum();
        }
    }
    GrayImage::new(w, h, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleStackConfig {
    /// Scale factor `b` in `sigma_n = b^(n-1)`.
    pub base: f64,
    /// Number of filtered levels in addition to the original.
    pub count: usize,
}

impl Default for ScaleStackConfig {
    fn default() -> Self {
        Self { base: 1.5, count: 7 }
    }
}

impl ScaleStackConfig {
    pub const MAX_COUNT: usize = 32;

    pub fn validate(&self) -> Result<()> {
        if !(self.base > 1.0) || !self.base.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "gss.base must be > 1, got {}",
                self.base
            )));
        }
        if self.count > Self::MAX_COUNT {
            return Err(Error::InvalidConfig(format!(
                "gss.count must be <= {}, got {}",
                Self::MAX_COUNT,
                self.count
            )));
        }
        Ok(())
    }

    /// `[0, b^0, b^1, ..., b^(count-1)]`; index 0 is the unfiltered image.
    pub fn sigmas(&self) -> Vec<f64> {
        std::iter::once(0.0)
            .chain((0..self.count).map(|n| self.base.powi(n as i32)))
            .collect()
    }
}

/// The original image followed by independently filtered copies.
#[derive(Debug, Clone)]
pub struct ScaleStack {
    levels: Vec<GrayImage>,
    sigmas: Vec<f64>,
}

impl ScaleStack {
    /// Wraps pre-built levels, checking that they share dimensions.
    pub fn from_levels(levels: Vec<GrayImage>, sigmas: Vec<f64>) -> Result<Self> {
        if levels.is_empty() || levels.len() != sigmas.len() {
            return Err(Error::InvalidImage(format!(
                "{} levels with {} sigmas",
                levels.len(),
                sigmas.len()
            )));
        }
        let (w, h) = (levels[0].width(), levels[0].height());
        if levels.iter().any(|l| l.width() != w || l.height() != h) {
            return Err(Error::InvalidImage("stack levels differ in size".into()));
        }
        Ok(Self { levels, sigmas })
    }

    pub fn levels(&self) -> &[GrayImage] {
        &self.levels
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

pub fn build_scale_stack(img: &GrayImage, cfg: &ScaleStackConfig) -> Result<ScaleStack> {
    cfg.validate()?;
    let sigmas = cfg.sigmas();
    let filtered = sigmas[1..]
        .par_iter()
        .map(|&s| gaussian_kernel(s).and_then(|k| convolve(img, &k)))
        .collect::<Result<Vec<_>>>()?;
    let mut levels = Vec::with_capacity(sigmas.len());
    levels.push(img.clone());
    levels.extend(filtered);
    Ok(ScaleStack { levels, sigmas })
}
