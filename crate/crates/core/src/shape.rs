//! Shape (edge-magnitude) transform fed to the inductive-bias learner.
//!
//! Per image: reduce to luminance, bilinear upsample, Gaussian blur,
//! Sobel derivatives, gradient magnitude, bilinear downsample back to the
//! input size, then per-image max normalization into `[0, 1]`. Blur and
//! Sobel use reflect padding so the image frame produces no edges.

use ndarray::{arr2, Array2, Array4, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{correlate_reflect, gaussian_kernel, resize_bilinear};
use crate::nn::Real;

pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Below this peak magnitude an image is treated as flat and maps to zeros.
const FLAT_EPS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapeConfig {
    pub gaussian_kernel_size: usize,
    pub upsample_factor: usize,
    pub output_channels: usize,
    pub normalize: bool,
}

impl Default for ShapeConfig {
    fn default() -> Self {
        Self { gaussian_kernel_size: 3, upsample_factor: 2, output_channels: 3, normalize: true }
    }
}

impl ShapeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gaussian_kernel_size % 2 == 0 {
            return Err(Error::config("gaussian_kernel_size must be odd"));
        }
        if self.upsample_factor == 0 || self.upsample_factor > 8 {
            return Err(Error::config("upsample_factor must be in 1..=8"));
        }
        if self.output_channels != 1 && self.output_channels != 3 {
            return Err(Error::config("output_channels must be 1 or 3"));
        }
        Ok(())
    }
}

pub fn sobel_x() -> Array2<f64> {
    arr2(&[[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
}

pub fn sobel_y() -> Array2<f64> {
    arr2(&[[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]])
}

/// Luminance plane of one `C×H×W` image (`C` is 1 or 3).
pub fn luminance<F: Real>(image: ndarray::ArrayView3<'_, F>) -> Array2<F> {
    match image.dim().0 {
        1 => image.index_axis(Axis(0), 0).to_owned(),
        _ => {
            let w: [F; 3] = LUMA.map(F::lit);
            let mut out = image.index_axis(Axis(0), 0).mapv(|v| v * w[0]);
            out.zip_mut_with(&image.index_axis(Axis(0), 1), |o, &v| *o += v * w[1]);
            out.zip_mut_with(&image.index_axis(Axis(0), 2), |o, &v| *o += v * w[2]);
            out
        }
    }
}

/// Edge magnitude of a single plane, before normalization.
pub fn edge_magnitude<F: Real>(plane: &Array2<F>, cfg: &ShapeConfig) -> Array2<F> {
    let (h, w) = plane.dim();
    let f = cfg.upsample_factor;
    let up = if f == 1 { plane.clone() } else { resize_bilinear(plane, h * f, w * f) };
    let blurred = correlate_reflect(&up, &gaussian_kernel(cfg.gaussian_kernel_size, 0.0));
    let dx = correlate_reflect(&blurred, &sobel_x());
    let dy = correlate_reflect(&blurred, &sobel_y());
    let mut mag = dx;
    mag.zip_mut_with(&dy, |a, &b| *a = (*a * *a + b * b).sqrt());
    if f == 1 {
        mag
    } else {
        resize_bilinear(&mag, h, w)
    }
}

/// Applies the shape transform to an `N×C×H×W` batch (`C` ∈ {1, 3}).
pub fn extract_shape<F: Real>(batch: &Array4<F>, cfg: &ShapeConfig) -> Result<Array4<F>> {
    cfg.validate()?;
    let (n, c, h, w) = batch.dim();
    if c != 1 && c != 3 {
        return Err(Error::structural(format!("shape filter expects 1 or 3 channels, got {c}")));
    }
    if h < 3 || w < 3 {
        return Err(Error::structural(format!("shape filter needs at least 3×3 images, got {h}×{w}")));
    }
    let mut out = Array4::<F>::zeros((n, cfg.output_channels, h, w));
    for (img, mut dst) in batch.outer_iter().zip(out.outer_iter_mut()) {
        let mut mag = edge_magnitude(&luminance(img), cfg);
        if cfg.normalize {
            let peak = mag.iter().copied().fold(F::zero(), F::max);
            if peak > F::lit(FLAT_EPS) {
                mag.mapv_inplace(|v| v / peak);
            } else {
                mag.fill(F::zero());
            }
        }
        for mut ch in dst.outer_iter_mut() {
            ch.assign(&mag);
        }
    }
    Ok(out)
}
