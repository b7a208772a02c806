//! Grayscale raster representation and file I/O.
//!
//! Intensities are held as `f64` regardless of the source bit depth. Binary
//! PGM (8 and 16 bit) is the primary on-disk format, PNG grayscale is also
//! accepted.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ImageBuffer, ImageEncoder, ImageFormat, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major grid of finite real intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroDimension { width, height });
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{} samples for a {width}x{height} image",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image data"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Pixel access with edge replication for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64
    }

    /// Applies `f` to every intensity.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Lossless rotation by 90 degrees: the pixel at `(x, y)` moves to
    /// `(height - 1 - y, x)`.
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.height, self.width);
        let mut data = vec![0.0; w * h];
        for y in 0..self.height {
            for x in 0..self.width {
                data[x * w + (self.height - 1 - y)] = self.get(x, y);
            }
        }
        Self {
            width: w,
            height: h,
            data,
        }
    }

    /// Copies the `w`x`h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::InvalidImage(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        Self::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y))
    }
}

/// Min-max normalization to `[0, 1]`.
///
/// A constant image maps to all zeros.
pub fn enhance(img: &GrayImage) -> GrayImage {
    let (lo, hi) = img.min_max();
    let range = hi - lo;
    let data = if range > 0.0 {
        img.data.iter().map(|&v| (v - lo) / range).collect()
    } else {
        vec![0.0; img.data.len()]
    };
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// What to do with a color raster on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorPolicy {
    #[default]
    Reject,
    Luminance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

/// How stored intensities relate to the container range on save.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleScale {
    /// Values are already container integers (e.g. straight from `load_image`).
    Raw,
    /// Values live in `[0, 1]` and are stretched to the full container range.
    Unit,
}

pub fn load_image(path: impl AsRef<Path>, color: ColorPolicy) -> Result<GrayImage> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = image::ImageReader::open(path)?.with_guessed_format()?;
    match reader.format() {
        Some(ImageFormat::Pnm) | Some(ImageFormat::Png) => {}
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("detected {other:?}"),
            })
        }
    }
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(u) => Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: u.to_string(),
        },
        other => Error::Image(other),
    })?;
    from_dynamic(decoded, color).map_err(|e| match e {
        Error::UnsupportedFormat { reason, .. } => Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason,
        },
        other => other,
    })
}

fn from_dynamic(img: DynamicImage, color: ColorPolicy) -> Result<GrayImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::ZeroDimension {
            width: w,
            height: h,
        });
    }
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
        other => {
            if color == ColorPolicy::Reject {
                return Err(Error::UnsupportedFormat {
                    path: Default::default(),
                    reason: format!("color image ({:?}) rejected", other.color()),
                });
            }
            match other {
                DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
                    other.into_luma8().into_raw().into_iter().map(f64::from).collect()
                }
                _ => other.into_luma16().into_raw().into_iter().map(f64::from).collect(),
            }
        }
    };
    GrayImage::new(w, h, data)
}

/// Writes `img` as binary PGM or grayscale PNG, chosen by file extension.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>, depth: BitDepth, scale: SampleScale) -> Result<()> {
    let path = path.as_ref();
    let max = depth.max_value();
    let quantize = |v: f64| -> f64 {
        let v = match scale {
            SampleScale::Raw => v,
            SampleScale::Unit => v * max,
        };
        v.round().clamp(0.0, max)
    };
    let (w, h) = (img.width as u32, img.height as u32);
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));

    match depth {
        BitDepth::Eight => {
            let raw: Vec<u8> = img.data.iter().map(|&v| quantize(v) as u8).collect();
            let buf: ImageBuffer<Luma<u8>, _> = ImageBuffer::from_raw(w, h, raw).expect("sized buffer");
            if is_png {
                buf.save_with_format(path, ImageFormat::Png)?;
            } else {
                let out = BufWriter::new(File::create(path)?);
                PnmEncoder::new(out)
                    .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
                    .write_image(buf.as_raw(), w, h, image::ExtendedColorType::L8)?;
            }
        }
        BitDepth::Sixteen => {
            let raw: Vec<u16> = img.data.iter().map(|&v| quantize(v) as u16).collect();
            let buf: ImageBuffer<Luma<u16>, _> = ImageBuffer::from_raw(w, h, raw).expect("sized buffer");
            if is_png {
                buf.save_with_format(path, ImageFormat::Png)?;
            } else {
                // binary PGM with big-endian 16-bit samples
                let mut out = BufWriter::new(File::create(path)?);
                write!(out, "P5\n{w} {h}\n65535\n")?;
                for v in buf.as_raw() {
                    out.write_all(&v.to_be_bytes())?;
                }
                out.flush()?;
            }
        }
    }
    Ok(())
}
