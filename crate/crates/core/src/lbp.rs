//! Local binary patterns over circular neighborhoods, the rotation-invariant
//! uniform (riu2) and uniform (u2) mappings, and the multi-level GSS-LBP
//! representation.
//!
//! Neighbor `k` of an `(n, r)` neighborhood sits at angle `theta0 + 2*pi*k/n`
//! from the center, at offset `(r cos a, r sin a)` in `(x, y)` pixel
//! coordinates (`y` is the row index). Off-grid positions are bilinearly
//! interpolated.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::GrayImage;
use crate::scalespace::ScaleStack;

const SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
struct Tap {
    dx: isize,
    dy: isize,
    fx: f64,
    fy: f64,
}

/// Precomputed sampling offsets for one circular neighborhood.
#[derive(Debug, Clone)]
pub(crate) struct Neighborhood {
    taps: Vec<Tap>,
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v
    }
}

impl Neighborhood {
    pub(crate) fn new(n: usize, radius: f64, theta0: f64) -> Self {
        let taps = (0..n)
            .map(|k| {
                let a = theta0 + 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                let ox = snap(radius * a.cos());
                let oy = snap(radius * a.sin());
                let (fx0, fy0) = (ox.floor(), oy.floor());
                Tap {
                    dx: fx0 as isize,
                    dy: fy0 as isize,
                    fx: ox - fx0,
                    fy: oy - fy0,
                }
            })
            .collect();
        Self { taps }
    }

    /// Interpolated value of neighbor `k` around `(cx, cy)`.
    ///
    /// The caller guarantees every touched pixel is inside the image.
    #[inline]
    pub(crate) fn sample(&self, img: &GrayImage, cx: usize, cy: usize, k: usize) -> f64 {
        let t = self.taps[k];
        let w = img.width();
        let data = img.data();
        let x0 = (cx as isize + t.dx) as usize;
        let y0 = (cy as isize + t.dy) as usize;
        let i = y0 * w + x0;
        let v00 = data[i];
        match (t.fx == 0.0, t.fy == 0.0) {
            (true, true) => v00,
            (false, true) => v00 + t.fx * (data[i + 1] - v00),
            (true, false) => v00 + t.fy * (data[i + w] - v00),
            (false, false) => {
                let v10 = data[i + 1];
                let v01 = data[i + w];
                let v11 = data[i + w + 1];
                // differences vanish exactly on flat regions
                v00 + t.fx * (v10 - v00) + t.fy * (v01 - v00) + t.fx * t.fy * (v11 - v10 - v01 + v00)
            }
        }
    }

    /// Thresholded code `sum_k s(g_k - g_c) 2^k` with `s(x) = 1` iff `x >= 0`.
    #[inline]
    pub(crate) fn code(&self, img: &GrayImage, cx: usize, cy: usize) -> u32 {
        let center = img.get(cx, cy);
        let mut code = 0u32;
        for k in 0..self.taps.len() {
            if self.sample(img, cx, cy, k) - center >= 0.0 {
                code |= 1 << k;
            }
        }
        code
    }
}

fn check_domain(img: &GrayImage, cx: usize, cy: usize, r: usize) -> Result<()> {
    if cx < r || cy < r || cx + r >= img.width() || cy + r >= img.height() {
        return Err(Error::OutOfDomain {
            x: cx,
            y: cy,
            radius: r,
        });
    }
    Ok(())
}

/// LBP code of pixel `(cx, cy)` with `n` neighbors on a circle of radius `r`.
pub fn lbp_code(img: &GrayImage, cx: usize, cy: usize, n: usize, r: usize) -> Result<u32> {
    if n == 0 || n > 32 {
        return Err(Error::InvalidConfig(format!("unsupported neighbor count {n}")));
    }
    check_domain(img, cx, cy, r)?;
    Ok(Neighborhood::new(n, r as f64, 0.0).code(img, cx, cy))
}

/// Number of circular 0/1 transitions in the low `n` bits of `code`.
pub fn transitions(code: u32, n: usize) -> u32 {
    let mask = if n >= 32 { u32::MAX } else { (1u32 << n) - 1 };
    let c = code & mask;
    let rot = ((c >> 1) | ((c & 1) << (n - 1))) & mask;
    (c ^ rot).count_ones()
}

/// Rotation-invariant uniform bin: the number of set bits for patterns with at
/// most two transitions, `n + 1` otherwise.
pub fn riu2_bin(code: u32, n: usize) -> usize {
    if transitions(code, n) <= 2 {
        code.count_ones() as usize
    } else {
        n + 1
    }
}

pub const U2_BINS: usize = 59;

/// 8-bit uniform mapping: the 58 uniform patterns get bins `0..58` in
/// ascending code order, every other pattern lands in bin 58.
pub fn u2_table() -> &'static [u8; 256] {
    static TABLE: OnceLock<[u8; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0u8; 256];
        let mut next = 0u8;
        for code in 0..256u32 {
            t[code as usize] = if transitions(code, 8) <= 2 {
                next += 1;
                next - 1
            } else {
                (U2_BINS - 1) as u8
            };
        }
        debug_assert_eq!(next as usize, U2_BINS - 1);
        t
    })
}

/// One `(neighbors, radius)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LbpScale {
    pub neighbors: usize,
    pub radius: usize,
}

/// Multi-scale riu2 LBP configuration, written as `"8:1,16:2,24:3"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LbpConfig {
    pub scales: Vec<LbpScale>,
}

impl Default for LbpConfig {
    fn default() -> Self {
        Self {
            scales: vec![
                LbpScale { neighbors: 8, radius: 1 },
                LbpScale { neighbors: 16, radius: 2 },
                LbpScale { neighbors: 24, radius: 3 },
            ],
        }
    }
}

impl LbpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::InvalidConfig("lbp.scales is empty".into()));
        }
        for s in &self.scales {
            if ![8, 16, 24].contains(&s.neighbors) {
                return Err(Error::InvalidConfig(format!(
                    "lbp neighbor count must be 8, 16 or 24, got {}",
                    s.neighbors
                )));
            }
            if s.radius == 0 {
                return Err(Error::InvalidConfig("lbp radius must be >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn max_radius(&self) -> usize {
        self.scales.iter().map(|s| s.radius).max().unwrap_or(0)
    }

    /// Per-image histogram length, `sum(n + 2)`.
    pub fn dim(&self) -> usize {
        self.scales.iter().map(|s| s.neighbors + 2).sum()
    }
}

impl fmt::Display for LbpConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .scales
            .iter()
            .map(|s| format!("{}:{}", s.neighbors, s.radius))
            .collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for LbpConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let scales = s
            .split(',')
            .map(|part| {
                let (n, r) = part.trim().split_once(':').ok_or_else(|| {
                    Error::InvalidConfig(format!("lbp scale `{part}` is not of the form n:r"))
                })?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::InvalidConfig(format!("bad lbp scale `{part}`")))
                };
                Ok(LbpScale {
                    neighbors: parse(n)?,
                    radius: parse(r)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let cfg = Self { scales };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl TryFrom<String> for LbpConfig {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LbpConfig> for String {
    fn from(c: LbpConfig) -> String {
        c.to_string()
    }
}

/// Concatenated per-scale riu2 histograms, each block L1-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct LbpHistogram {
    bins: Vec<f64>,
    block_lens: Vec<usize>,
}

impl LbpHistogram {
    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        let mut start = 0;
        self.block_lens.iter().map(move |&l| {
            let b = &self.bins[start..start + l];
            start += l;
            b
        })
    }
}

pub fn lbp_histogram(img: &GrayImage, cfg: &LbpConfig) -> Result<LbpHistogram> {
    cfg.validate()?;
    let margin = cfg.max_radius();
    let needed = 2 * margin + 1;
    if img.width() < needed || img.height() < needed {
        return Err(Error::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            needed,
        });
    }
    let mut bins = Vec::with_capacity(cfg.dim());
    let mut block_lens = Vec::with_capacity(cfg.scales.len());
    for s in &cfg.scales {
        let hood = Neighborhood::new(s.neighbors, s.radius as f64, 0.0);
        let mut counts = vec![0u64; s.neighbors + 2];
        for cy in margin..img.height() - margin {
            for cx in margin..img.width() - margin {
                counts[riu2_bin(hood.code(img, cx, cy), s.neighbors)] += 1;
            }
        }
        let total: u64 = counts.iter().sum();
        bins.extend(counts.iter().map(|&c| c as f64 / total as f64));
        block_lens.push(s.neighbors + 2);
    }
    Ok(LbpHistogram { bins, block_lens })
}

/// Level-ordered concatenation of LBP histograms over a scale stack.
#[derive(Debug, Clone, PartialEq)]
pub struct GssLbpVector {
    values: Vec<f64>,
}

impl GssLbpVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn gss_lbp_representation(stack: &ScaleStack, cfg: &LbpConfig) -> Result<GssLbpVector> {
    let hists = stack
        .levels()
        .par_iter()
        .map(|lvl| lbp_histogram(lvl, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(GssLbpVector {
        values: hists.into_iter().flat_map(|h| h.bins).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalespace::{build_scale_stack, ScaleStackConfig};

    #[test]
    fn constant_image_gives_all_ones() {
        let img = GrayImage::constant(9, 9, 4.0).unwrap();
        assert_eq!(lbp_code(&img, 4, 4, 8, 1).unwrap(), 255);
        assert_eq!(lbp_code(&img, 4, 4, 16, 2).unwrap(), 0xFFFF);
        assert_eq!(lbp_code(&img, 4, 4, 24, 3).unwrap(), 0xFF_FFFF);
    }

    #[test]
    fn bright_center_gives_zero() {
        let img = GrayImage::from_fn(5, 5, |x, y| if x == 2 && y == 2 { 10.0 } else { 1.0 }).unwrap();
        assert_eq!(lbp_code(&img, 2, 2, 8, 1).unwrap(), 0);
    }

    #[test]
    fn ramp_patch_matches_enumeration() {
        // I(x, y) = 1 + x + 3y is linear, so interpolation is exact and each
        // comparison reduces to the sign of cos(a) + 3 sin(a).
        let img = GrayImage::new(3, 3, (1..=9).map(f64::from).collect()).unwrap();
        let mut expected = 0u32;
        for k in 0..8 {
            let a = std::f64::consts::FRAC_PI_4 * k as f64;
            let g = 5.0 + a.cos() + 3.0 * a.sin();
            if g - 5.0 >= -1e-12 {
                expected |= 1 << k;
            }
        }
        assert_eq!(expected, 0b0000_1111);
        assert_eq!(lbp_code(&img, 1, 1, 8, 1).unwrap(), expected);
    }

    #[test]
    fn out_of_domain_center() {
        let img = GrayImage::constant(5, 5, 0.0).unwrap();
        assert!(matches!(lbp_code(&img, 0, 2, 8, 1), Err(Error::OutOfDomain { .. })));
        assert!(matches!(lbp_code(&img, 2, 2, 16, 3), Err(Error::OutOfDomain { .. })));
        assert!(lbp_code(&img, 3, 3, 8, 1).is_ok());
    }

    #[test]
    fn riu2_examples() {
        assert_eq!(riu2_bin(0, 8), 0);
        assert_eq!(riu2_bin(255, 8), 8);
        assert_eq!(riu2_bin(0b0101_0101, 8), 9);
        assert_eq!(riu2_bin(0b0001_1100, 8), 3);
        assert_eq!(riu2_bin(0b1000_0001, 8), 2);
        assert_eq!(riu2_bin(0xFF_FFFF, 24), 24);
        assert_eq!(riu2_bin(0b1010, 16), 17);
    }

    #[test]
    fn u2_table_shape() {
        let t = u2_table();
        let uniform: std::collections::BTreeSet<u8> = t.iter().copied().filter(|&b| b < 58).collect();
        assert_eq!(uniform.len(), 58);
        assert_eq!(t[0], 0);
        assert_eq!(t[0b0101_0101], 58);
        assert_eq!(t.iter().filter(|&&b| b == 58).count(), 256 - 58);
    }

    #[test]
    fn histogram_dims_and_constant_mass() {
        let cfg = LbpConfig::default();
        assert_eq!(cfg.dim(), 54);
        let img = GrayImage::constant(32, 32, 1.0).unwrap();
        let h = lbp_histogram(&img, &cfg).unwrap();
        assert_eq!(h.len(), 54);
        for (block, s) in h.blocks().zip(&cfg.scales) {
            assert_eq!(block.len(), s.neighbors + 2);
            assert_eq!(block[s.neighbors], 1.0);
        }
    }

    #[test]
    fn too_small_image() {
        let img = GrayImage::constant(6, 30, 1.0).unwrap();
        assert!(matches!(
            lbp_histogram(&img, &LbpConfig::default()),
            Err(Error::ImageTooSmall { needed: 7, .. })
        ));
    }

    #[test]
    fn config_parsing() {
        let c: LbpConfig = "8:1,16:2,24:3".parse().unwrap();
        assert_eq!(c, LbpConfig::default());
        assert_eq!(c.to_string(), "8:1,16:2,24:3");
        assert!("8:1,12:2".parse::<LbpConfig>().is_err());
        assert!("8:0".parse::<LbpConfig>().is_err());
        assert!("".parse::<LbpConfig>().is_err());
        assert!("8-1".parse::<LbpConfig>().is_err());
    }

    #[test]
    fn gss_vector_lengths() {
        let img = GrayImage::from_fn(40, 40, |x, y| ((x * 13 + y * 7) % 17) as f64).unwrap();
        let cfg = LbpConfig::default();
        let st = build_scale_stack(&img, &ScaleStackConfig::default()).unwrap();
        assert_eq!(gss_lbp_representation(&st, &cfg).unwrap().len(), 432);

        let st0 = build_scale_stack(&img, &ScaleStackConfig { base: 1.5, count: 0 }).unwrap();
        let v0 = gss_lbp_representation(&st0, &cfg).unwrap();
        assert_eq!(v0.values(), lbp_histogram(&img, &cfg).unwrap().bins());

        let flat = GrayImage::constant(20, 20, 2.0).unwrap();
        let st = ScaleStack::from_levels(vec![flat; 8], vec![0.0; 8]).unwrap();
        let v = gss_lbp_representation(&st, &cfg).unwrap();
        let first = &v.values()[..54];
        for chunk in v.values().chunks(54) {
            assert_eq!(chunk, first);
        }
    }
}
