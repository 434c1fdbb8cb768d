//! Grayscale preprocessing and a deterministic surrogate feature extractor.
//!
//! The surrogate stands in for a pretrained CNN so the whole pipeline runs
//! without an ML runtime: after box-downsampling to 224 x 224 it emits 512
//! features, the 16 x 16 block means of intensity followed by the 16 x 16
//! block means of gradient magnitude.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::data::{DataError, FeatureMatrix};

pub const SURROGATE_SIDE: usize = 224;
pub const SURROGATE_GRID: usize = 16;
pub const SURROGATE_FEATURES: usize = 2 * SURROGATE_GRID * SURROGATE_GRID;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImagingError {
    #[error("image must be at least 1x1")]
    EmptyImage,
    #[error("{width}x{height} image needs {expected} pixels, got {found}")]
    PixelCount {
        width: usize,
        height: usize,
        expected: usize,
        found: usize,
    },
    #[error("pixel {0} outside [0, 1]")]
    PixelRange(usize),
    #[error("cannot resample {from_w}x{from_h} up to {to_w}x{to_h}")]
    UpsampleRequested {
        from_w: usize,
        from_h: usize,
        to_w: usize,
        to_h: usize,
    },
    #[error("no images given")]
    NoImages,
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Row-major luminance in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::EmptyImage);
        }
        if pixels.len() != width * height {
            return Err(ImagingError::PixelCount {
                width,
                height,
                expected: width * height,
                found: pixels.len(),
            });
        }
        if let Some(i) = pixels.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(ImagingError::PixelRange(i));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self, ImagingError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

/// Per output cell along one axis, the source indices it covers and their
/// overlap weights (each summing to `src / dst`).
fn axis_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            // exact integer bounds in units of 1/dst source pixels
            let lo = o * src;
            let hi = (o + 1) * src;
            let first = lo / dst;
            let last = (hi - 1) / dst;
            (first..=last)
                .map(|i| {
                    let a = lo.max(i * dst);
                    let b = hi.min((i + 1) * dst);
                    (i, (b - a) as f64 / dst as f64)
                })
                .filter(|(_, w)| *w > 0.0)
                .collect::<Vec<_>>()
        })
        .inspect(|w| debug_assert!((w.iter().map(|p| p.1).sum::<f64>() - scale).abs() < 1e-9))
        .collect()
}

/// Area-average (box) resampling to a smaller or equal size.
pub fn downsample(img: &GrayImage, target_w: usize, target_h: usize) -> Result<GrayImage, ImagingError> {
    if target_w == 0 || target_h == 0 {
        return Err(ImagingError::EmptyImage);
    }
    if target_w > img.width || target_h > img.height {
        return Err(ImagingError::UpsampleRequested {
            from_w: img.width,
            from_h: img.height,
            to_w: target_w,
            to_h: target_h,
        });
    }
    if target_w == img.width && target_h == img.height {
        return Ok(img.clone());
    }
    let wx = axis_weights(img.width, target_w);
    let wy = axis_weights(img.height, target_h);
    let area = (img.width as f64 / target_w as f64) * (img.height as f64 / target_h as f64);
    let mut pixels = Vec::with_capacity(target_w * target_h);
    for ys in &wy {
        for xs in &wx {
            let mut acc = 0.0;
            for &(y, wyv) in ys {
                let row = &img.pixels[y * img.width..(y + 1) * img.width];
                let mut line = 0.0;
                for &(x, wxv) in xs {
                    line += wxv * row[x];
                }
                acc += wyv * line;
            }
            pixels.push((acc / area).clamp(0.0, 1.0));
        }
    }
    GrayImage::new(target_w, target_h, pixels)
}

/// Gradient magnitude per pixel: central differences inside, one-sided
/// differences on the border.
fn gradient_magnitude(img: &GrayImage) -> Vec<f64> {
    let (w, h) = (img.width, img.height);
    let diff = |len: usize, i: usize, at: &dyn Fn(usize) -> f64| -> f64 {
        if len == 1 {
            0.0
        } else if i == 0 {
            at(1) - at(0)
        } else if i == len - 1 {
            at(len - 1) - at(len - 2)
        } else {
            (at(i + 1) - at(i - 1)) / 2.0
        }
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let gx = diff(w, x, &|i| img.get(i, y));
            let gy = diff(h, y, &|j| img.get(x, j));
            out.push(libm::sqrt(gx * gx + gy * gy));
        }
    }
    out
}

fn block_means(values: &[f64], side: usize, grid: usize) -> Vec<f64> {
    let block = side / grid;
    let area = (block * block) as f64;
    let mut out = Vec::with_capacity(grid * grid);
    for by in 0..grid {
        for bx in 0..grid {
            let mut acc = 0.0;
            for y in by * block..(by + 1) * block {
                for x in bx * block..(bx + 1) * block {
                    acc += values[y * side + x];
                }
            }
            out.push(acc / area);
        }
    }
    out
}

/// The 512 surrogate features of one image.
pub fn surrogate_features(img: &GrayImage) -> Result<Vec<f64>, ImagingError> {
    let img = downsample(img, SURROGATE_SIDE, SURROGATE_SIDE)?;
    let mut features = block_means(&img.pixels, SURROGATE_SIDE, SURROGATE_GRID);
    features.extend(block_means(
        &gradient_magnitude(&img),
        SURROGATE_SIDE,
        SURROGATE_GRID,
    ));
    Ok(features)
}

/// Surrogate features for each image, rows in input order.
pub fn surrogate_extract(images: &[(String, GrayImage)]) -> Result<FeatureMatrix, ImagingError> {
    if images.is_empty() {
        return Err(ImagingError::NoImages);
    }
    let mut values = Vec::with_capacity(images.len() * SURROGATE_FEATURES);
    for (_, img) in images {
        values.extend(surrogate_features(img)?);
    }
    let ids = images.iter().map(|(id, _)| id.clone()).collect();
    Ok(FeatureMatrix::from_flat(ids, values, SURROGATE_FEATURES, None)?)
}
