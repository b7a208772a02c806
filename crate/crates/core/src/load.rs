//! Dense LOAD descriptors: multi-ring uniform LBP histograms computed in a
//! patch-local frame whose first neighbor points along the patch's dominant
//! gradient direction.
//!
//! Each descriptor covers a circular patch. For ring radius `r` in `1..=4`
//! every pixel whose ring stays inside the patch contributes one 8-neighbor
//! code, mapped through the 59-bin uniform table. The four histograms are
//! L1-normalized separately and concatenated (`4 * 59 = 236` values).

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lbp::{u2_table, Neighborhood, U2_BINS};
use crate::raster::GrayImage;
use crate::scalespace::ScaleStack;

pub const RINGS: usize = 4;
pub const RING_NEIGHBORS: usize = 8;
pub const LOAD_DIM: usize = RINGS * U2_BINS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingGrid {
    pub radius: usize,
    pub stride_x: usize,
    pub stride_y: usize,
}

impl Default for SamplingGrid {
    fn default() -> Self {
        Self {
            radius: 13,
            stride_x: 1,
            stride_y: 2,
        }
    }
}

impl SamplingGrid {
    pub fn validate(&self) -> Result<()> {
        if self.radius < RINGS {
            return Err(Error::InvalidConfig(format!(
                "load.radius must be >= {RINGS}, got {}",
                self.radius
            )));
        }
        if self.stride_x == 0 || self.stride_y == 0 {
            return Err(Error::InvalidConfig("load strides must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadDescriptor {
    values: Vec<f64>,
}

impl LoadDescriptor {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn ring(&self, r: usize) -> &[f64] {
        &self.values[r * U2_BINS..(r + 1) * U2_BINS]
    }
}

fn check_patch(img: &GrayImage, cx: usize, cy: usize, radius: usize) -> Result<()> {
    if cx < radius || cy < radius || cx + radius >= img.width() || cy + radius >= img.height() {
        return Err(Error::OutOfDomain { x: cx, y: cy, radius });
    }
    Ok(())
}

fn disk(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Dominant orientation of the patch: angle of the Gaussian-weighted
/// (`sigma = radius / 2`) mean central-difference gradient, in `[0, 2 pi)`.
/// A vanishing mean gradient yields 0.
pub fn estimate_orientation(img: &GrayImage, cx: usize, cy: usize, radius: usize) -> Result<f64> {
    check_patch(img, cx, cy, radius)?;
    Ok(orientation_unchecked(img, cx, cy, &orientation_support(radius)))
}

struct WeightedOffset {
    dx: isize,
    dy: isize,
    weight: f64,
}

fn orientation_support(radius: usize) -> Vec<WeightedOffset> {
    let sigma = radius as f64 / 2.0;
    disk(radius.saturating_sub(1))
        .into_iter()
        .map(|(dx, dy)| WeightedOffset {
            dx,
            dy,
            weight: (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp(),
        })
        .collect()
}

fn orientation_unchecked(img: &GrayImage, cx: usize, cy: usize, support: &[WeightedOffset]) -> f64 {
    let (mut sx, mut sy, mut mag) = (0.0, 0.0, 0.0);
    for o in support {
        let x = (cx as isize + o.dx) as usize;
        let y = (cy as isize + o.dy) as usize;
        let gx = 0.5 * (img.get(x + 1, y) - img.get(x - 1, y));
        let gy = 0.5 * (img.get(x, y + 1) - img.get(x, y - 1));
        sx += o.weight * gx;
        sy += o.weight * gy;
        mag += o.weight * (gx.abs() + gy.abs());
    }
    if mag == 0.0 || sx.hypot(sy) <= 1e-12 * mag {
        return 0.0;
    }
    let a = sy.atan2(sx);
    if a < 0.0 {
        a + 2.0 * std::f64::consts::PI
    } else {
        a
    }
}

/// Reusable per-radius tables for descriptor extraction.
pub struct LoadExtractor {
    grid: SamplingGrid,
    support: Vec<WeightedOffset>,
    ring_disks: Vec<Vec<(isize, isize)>>,
}

impl LoadExtractor {
    pub fn new(grid: SamplingGrid) -> Result<Self> {
        grid.validate()?;
        Ok(Self {
            grid,
            support: orientation_support(grid.radius),
            ring_disks: (1..=RINGS).map(|r| disk(grid.radius - r)).collect(),
        })
    }

    pub fn grid(&self) -> &SamplingGrid {
        &self.grid
    }

    /// Raw per-ring u2 counts at an in-bounds center.
    fn counts(&self, img: &GrayImage, cx: usize, cy: usize) -> [[u32; U2_BINS]; RINGS] {
        let table = u2_table();
        let theta = orientation_unchecked(img, cx, cy, &self.support);
        let mut counts = [[0u32; U2_BINS]; RINGS];
        for (ring, pixels) in self.ring_disks.iter().enumerate() {
            let hood = Neighborhood::new(RING_NEIGHBORS, (ring + 1) as f64, theta);
            let hist = &mut counts[ring];
            for &(dx, dy) in pixels {
                let px = (cx as isize + dx) as usize;
                let py = (cy as isize + dy) as usize;
                hist[table[hood.code(img, px, py) as usize] as usize] += 1;
            }
        }
        counts
    }

    fn normalized(&self, counts: &[[u32; U2_BINS]; RINGS]) -> Vec<f64> {
        let mut values = Vec::with_capacity(LOAD_DIM);
        for hist in counts {
            let total: u32 = hist.iter().sum();
            values.extend(hist.iter().map(|&c| f64::from(c) / f64::from(total)));
        }
        values
    }

    pub fn load_at(&self, img: &GrayImage, cx: usize, cy: usize) -> Result<LoadDescriptor> {
        check_patch(img, cx, cy, self.grid.radius)?;
        Ok(LoadDescriptor {
            values: self.normalized(&self.counts(img, cx, cy)),
        })
    }

    pub fn extract_all(&self, stack: &ScaleStack) -> Result<DescriptorSet> {
        let jobs: Vec<(usize, usize, usize)> = stack
            .levels()
            .iter()
            .enumerate()
            .flat_map(|(l, img)| dense_sample(img, &self.grid).into_iter().map(move |(x, y)| (l, x, y)))
            .collect();
        let first = &stack.levels()[0];
        let limit = u16::MAX as usize + 1;
        if stack.len() > limit || first.width() > limit || first.height() > limit {
            return Err(Error::InvalidImage("stack exceeds 16-bit provenance range".into()));
        }
        let rows: Vec<Vec<f64>> = jobs
            .par_iter()
            .map(|&(l, x, y)| self.normalized(&self.counts(&stack.levels()[l], x, y)))
            .collect();
        let mut set = DescriptorSet::new(LOAD_DIM);
        for (row, &(l, x, y)) in rows.iter().zip(&jobs) {
            set.push(
                row,
                Provenance {
                    level: l as u16,
                    x: x as u16,
                    y: y as u16,
                },
            )?;
        }
        Ok(set)
    }
}

pub fn load_at(img: &GrayImage, cx: usize, cy: usize, grid: &SamplingGrid) -> Result<LoadDescriptor> {
    LoadExtractor::new(*grid)?.load_at(img, cx, cy)
}

/// Patch centers on the stride lattice that keep the whole patch in bounds,
/// row-major.
pub fn dense_sample(img: &GrayImage, grid: &SamplingGrid) -> Vec<(usize, usize)> {
    let r = grid.radius;
    if img.width() < 2 * r + 1 || img.height() < 2 * r + 1 {
        return Vec::new();
    }
    let xs: Vec<usize> = (r..img.width() - r).step_by(grid.stride_x.max(1)).collect();
    (r..img.height() - r)
        .step_by(grid.stride_y.max(1))
        .flat_map(|y| xs.iter().map(move |&x| (x, y)))
        .collect()
}

pub fn extract_all(stack: &ScaleStack, grid: &SamplingGrid) -> Result<DescriptorSet> {
    LoadExtractor::new(*grid)?.extract_all(stack)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Provenance {
    pub level: u16,
    pub x: u16,
    pub y: u16,
}

/// A bag of equal-length local descriptors with their origin.
///
/// Values are stored as `f32`, matching the binary feature file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DescriptorSet {
    dim: usize,
    data: Vec<f32>,
    provenance: Vec<Provenance>,
}

impl DescriptorSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut set = Self::new(dim);
        for r in rows {
            set.push(r, Provenance { level: 0, x: 0, y: 0 })?;
        }
        Ok(set)
    }

    pub fn push(&mut self, row: &[f64], origin: Provenance) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("descriptor"));
        }
        self.data.extend(row.iter().map(|&v| v as f32));
        self.provenance.push(origin);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim.max(1)).take(self.len())
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    /// Descriptors from stack levels `0..=max_level`, in original order.
    pub fn up_to_level(&self, max_level: u16) -> DescriptorSet {
        let mut out = DescriptorSet::new(self.dim);
        for (i, p) in self.provenance.iter().enumerate() {
            if p.level <= max_level {
                out.data.extend_from_slice(self.row(i));
                out.provenance.push(*p);
            }
        }
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        for p in &self.provenance {
            w.write_all(&p.level.to_le_bytes())?;
            w.write_all(&p.x.to_le_bytes())?;
            w.write_all(&p.y.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let dim = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        if dim == 0 && count > 0 {
            return Err(Error::Format {
                what: "descriptor file",
                reason: "zero dimension with nonzero count".into(),
            });
        }
        let mut raw = vec![0u8; dim * count * 4];
        r.read_exact(&mut raw)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let mut raw = vec![0u8; count * 6];
        r.read_exact(&mut raw)?;
        let provenance = raw
            .chunks_exact(6)
            .map(|c| Provenance {
                level: u16::from_le_bytes([c[0], c[1]]),
                x: u16::from_le_bytes([c[2], c[3]]),
                y: u16::from_le_bytes([c[4], c[5]]),
            })
            .collect();
        Ok(Self {
            dim,
            data,
            provenance,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(f)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
