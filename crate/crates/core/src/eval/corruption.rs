//! Fifteen common image corruptions at five severities, implemented
//! natively on `N×C×H×W` batches in `[0, 1]`.
//!
//! Severity parameters follow the usual small-image (32×32) conventions;
//! the full table is in `docs/corruptions.md`. Severity 0 is the identity
//! and exists for testing. Every stochastic corruption is a pure function
//! of `(batch, spec, seed)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, Array3, Array4, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::ImageSet;
use crate::error::{Error, Result};
use crate::imgproc::{correlate_reflect, gaussian_kernel, reflect_index, resize_bilinear, sample_bilinear};
use crate::nn::Classifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    GaussianNoise,
    ShotNoise,
    ImpulseNoise,
    DefocusBlur,
    GlassBlur,
    MotionBlur,
    ZoomBlur,
    Snow,
    Frost,
    Fog,
    Brightness,
    Contrast,
    ElasticTransform,
    Pixelate,
    JpegCompression,
}

pub const CORRUPTIONS: [Corruption; 15] = [
    Corruption::GaussianNoise,
    Corruption::ShotNoise,
    Corruption::ImpulseNoise,
    Corruption::DefocusBlur,
    Corruption::GlassBlur,
    Corruption::MotionBlur,
    Corruption::ZoomBlur,
    Corruption::Snow,
    Corruption::Frost,
    Corruption::Fog,
    Corruption::Brightness,
    Corruption::Contrast,
    Corruption::ElasticTransform,
    Corruption::Pixelate,
    Corruption::JpegCompression,
];

impl Corruption {
    pub fn name(self) -> &'static str {
        match self {
            Corruption::GaussianNoise => "gaussian_noise",
            Corruption::ShotNoise => "shot_noise",
            Corruption::ImpulseNoise => "impulse_noise",
            Corruption::DefocusBlur => "defocus_blur",
            Corruption::GlassBlur => "glass_blur",
            Corruption::MotionBlur => "motion_blur",
            Corruption::ZoomBlur => "zoom_blur",
            Corruption::Snow => "snow",
            Corruption::Frost => "frost",
            Corruption::Fog => "fog",
            Corruption::Brightness => "brightness",
            Corruption::Contrast => "contrast",
            Corruption::ElasticTransform => "elastic_transform",
            Corruption::Pixelate => "pixelate",
            Corruption::JpegCompression => "jpeg_compression",
        }
    }
}

impl fmt::Display for Corruption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Corruption {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CORRUPTIONS
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::config(format!("unknown corruption `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub corruption: Corruption,
    /// 1 (mildest) to 5; 0 returns the input unchanged.
    pub severity: u8,
}

impl CorruptionSpec {
    pub fn new(corruption: Corruption, severity: u8) -> Result<Self> {
        if severity > 5 {
            return Err(Error::config(format!("severity {severity} outside 0..=5")));
        }
        Ok(Self { corruption, severity })
    }
}

pub const GAUSSIAN_NOISE_STD: [f64; 5] = [0.04, 0.06, 0.08, 0.09, 0.10];
pub const SHOT_NOISE_RATE: [f64; 5] = [500.0, 250.0, 100.0, 75.0, 50.0];
pub const IMPULSE_AMOUNT: [f64; 5] = [0.01, 0.02, 0.03, 0.05, 0.07];
/// (disk radius, alias blur sigma)
pub const DEFOCUS: [(f64, f64); 5] = [(0.3, 0.4), (0.4, 0.5), (0.5, 0.6), (1.0, 0.2), (1.5, 0.1)];
/// (sigma, max shuffle distance, iterations)
pub const GLASS: [(f64, usize, usize); 5] = [(0.05, 1, 1), (0.25, 1, 1), (0.4, 1, 1), (0.25, 1, 2), (0.4, 1, 2)];
/// (radius, sigma), in pixels at 32×32
pub const MOTION: [(f64, f64); 5] = [(10.0, 1.0), (10.0, 1.5), (10.0, 2.0), (10.0, 2.5), (12.0, 3.0)];
/// largest zoom factor; zooms run from 1.0 in steps of 0.01
pub const ZOOM_MAX: [f64; 5] = [1.06, 1.11, 1.16, 1.21, 1.26];
/// (loc, scale, zoom, threshold, blur radius, blur sigma, image blend)
pub const SNOW: [(f64, f64, f64, f64, f64, f64, f64); 5] = [
    (0.1, 0.2, 1.0, 0.6, 8.0, 3.0, 0.95),
    (0.1, 0.2, 1.0, 0.5, 10.0, 4.0, 0.9),
    (0.15, 0.3, 1.75, 0.55, 10.0, 4.0, 0.9),
    (0.25, 0.3, 2.25, 0.6, 12.0, 6.0, 0.85),
    (0.3, 0.3, 1.25, 0.65, 14.0, 12.0, 0.8),
];
/// (image weight, frost weight)
pub const FROST: [(f64, f64); 5] = [(1.0, 0.2), (1.0, 0.3), (0.9, 0.4), (0.85, 0.4), (0.75, 0.45)];
/// (fog strength, fractal roughness decay)
pub const FOG: [(f64, f64); 5] = [(0.2, 3.0), (0.5, 3.0), (0.75, 2.5), (1.0, 2.0), (1.5, 1.75)];
/// added to the HSV value channel
pub const BRIGHTNESS_DELTA: [f64; 5] = [0.05, 0.1, 0.15, 0.2, 0.3];
pub const CONTRAST_FACTOR: [f64; 5] = [0.75, 0.5, 0.4, 0.3, 0.15];
/// (displacement alpha, displacement sigma, affine jitter), fractions of the image side
pub const ELASTIC: [(f64, f64, f64); 5] =
    [(0.0, 0.0, 0.08), (0.05, 0.2, 0.07), (0.08, 0.06, 0.06), (0.1, 0.04, 0.05), (0.1, 0.03, 0.03)];
pub const PIXELATE_SCALE: [f64; 5] = [0.95, 0.9, 0.85, 0.75, 0.65];
pub const JPEG_QUALITY: [u8; 5] = [80, 65, 58, 50, 40];

fn seed_for(seed: u64, spec: CorruptionSpec) -> u64 {
    let tag = CORRUPTIONS.iter().position(|&c| c == spec.corruption).unwrap() as u64;
    seed ^ (tag + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (spec.severity as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

/// Applies one corruption to every image of the batch. The input is not
/// modified; output values are clipped to `[0, 1]`.
pub fn corrupt(batch: &Array4<f32>, spec: CorruptionSpec, seed: u64) -> Result<Array4<f32>> {
    if spec.severity > 5 {
        return Err(Error::config(format!("severity {} outside 0..=5", spec.severity)));
    }
    if spec.severity == 0 {
        return Ok(batch.clone());
    }
    let (_, c, h, w) = batch.dim();
    if h < 2 || w < 2 || (c != 1 && c != 3) {
        return Err(Error::structural(format!("cannot corrupt images of shape {c}×{h}×{w}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(seed, spec));
    let i = spec.severity as usize - 1;
    let mut out = batch.clone();
    for mut img in out.outer_iter_mut() {
        let src = img.to_owned();
        let res = apply_one(&src, spec.corruption, i, &mut rng)?;
        img.assign(&res.mapv(|v| v.clamp(0.0, 1.0)));
    }
    Ok(out)
}

fn per_plane(img: &Array3<f32>, f: impl Fn(&Array2<f32>) -> Array2<f32>) -> Array3<f32> {
    let mut out = img.clone();
    for (mut dst, src) in out.outer_iter_mut().zip(img.outer_iter()) {
        dst.assign(&f(&src.to_owned()));
    }
    out
}

fn gaussian_blur(plane: &Array2<f32>, sigma: f64) -> Array2<f32> {
    if sigma <= 0.0 {
        return plane.clone();
    }
    let size = 2 * (3.0 * sigma).ceil() as usize + 1;
    correlate_reflect(plane, &gaussian_kernel(size.max(3), sigma))
}

fn apply_one(img: &Array3<f32>, kind: Corruption, i: usize, rng: &mut ChaCha8Rng) -> Result<Array3<f32>> {
    let (c, h, w) = img.dim();
    let scale = h.min(w) as f64 / 32.0;
    Ok(match kind {
        Corruption::GaussianNoise => {
            let n = Normal::new(0.0, GAUSSIAN_NOISE_STD[i]).unwrap();
            img.mapv(|v| v + n.sample(rng) as f32)
        }
        Corruption::ShotNoise => {
            let rate = SHOT_NOISE_RATE[i];
            img.mapv(|v| {
                let lam = (v as f64 * rate).max(0.0);
                let k = if lam > 0.0 { Poisson::new(lam).unwrap().sample(rng) } else { 0.0 };
                (k / rate) as f32
            })
        }
        Corruption::ImpulseNoise => {
            let amount = IMPULSE_AMOUNT[i];
            img.mapv(|v| {
                if rng.random::<f64>() < amount {
                    if rng.random_bool(0.5) {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    v
                }
            })
        }
        Corruption::DefocusBlur => {
            let (radius, alias) = DEFOCUS[i];
            let k = disk_kernel(radius * scale, alias);
            per_plane(img, |p| correlate_reflect(p, &k))
        }
        Corruption::GlassBlur => {
            let (sigma, delta, iterations) = GLASS[i];
            let mut planes = per_plane(img, |p| gaussian_blur(p, sigma * scale));
            for _ in 0..iterations {
                for y in (delta..h.saturating_sub(delta)).rev() {
                    for x in (delta..w.saturating_sub(delta)).rev() {
                        let dy = rng.random_range(-(delta as i64)..=delta as i64) as isize;
                        let dx = rng.random_range(-(delta as i64)..=delta as i64) as isize;
                        let (y2, x2) = ((y as isize + dy) as usize, (x as isize + dx) as usize);
                        for ch in 0..c {
                            let a = planes[[ch, y, x]];
                            planes[[ch, y, x]] = planes[[ch, y2, x2]];
                            planes[[ch, y2, x2]] = a;
                        }
                    }
                }
            }
            per_plane(&planes, |p| gaussian_blur(p, sigma * scale))
        }
        Corruption::MotionBlur => {
            let (radius, sigma) = MOTION[i];
            let angle = rng.random_range(-45.0f64..45.0);
            per_plane(img, |p| motion_blur(p, radius * scale, sigma * scale, angle))
        }
        Corruption::ZoomBlur => {
            let steps = ((ZOOM_MAX[i] - 1.0) / 0.01).round() as usize;
            let mut acc = img.clone();
            for k in 1..steps {
                let z = 1.0 + 0.01 * k as f64;
                acc += &per_plane(img, |p| center_zoom(p, z));
            }
            acc / steps as f32
        }
        Corruption::Snow => snow(img, SNOW[i], scale, rng),
        Corruption::Frost => {
            let (a, b) = FROST[i];
            let frost = frost_texture(h, w, rng);
            let mut out = img.mapv(|v| v * a as f32);
            for mut p in out.outer_iter_mut() {
                p.zip_mut_with(&frost, |v, &f| *v += b as f32 * f);
            }
            out
        }
        Corruption::Fog => {
            let (strength, decay) = FOG[i];
            let size = h.max(w).next_power_of_two();
            let fractal = plasma_fractal(size, decay, rng);
            let max = img.iter().copied().fold(0.0f32, f32::max);
            let mut out = img.clone();
            for mut p in out.outer_iter_mut() {
                p.zip_mut_with(&fractal.slice(s![..h, ..w]), |v, &f| *v += (strength * f) as f32);
            }
            out.mapv(|v| v * max / (max + strength as f32))
        }
        Corruption::Brightness => brightness(img, BRIGHTNESS_DELTA[i]),
        Corruption::Contrast => {
            let f = CONTRAST_FACTOR[i] as f32;
            per_plane(img, |p| {
                let mean = p.mean().unwrap_or(0.0);
                p.mapv(|v| (v - mean) * f + mean)
            })
        }
        Corruption::ElasticTransform => elastic(img, ELASTIC[i], rng),
        Corruption::Pixelate => {
            let f = PIXELATE_SCALE[i];
            let (sh, sw) = (((h as f64 * f) as usize).max(1), ((w as f64 * f) as usize).max(1));
            per_plane(img, |p| {
                let small = box_resize(p, sh, sw);
                Array2::from_shape_fn((h, w), |(y, x)| small[[y * sh / h, x * sw / w]])
            })
        }
        Corruption::JpegCompression => jpeg_round_trip(img, JPEG_QUALITY[i])?,
    })
}

/// Aliased disk smoothed by a small Gaussian, cropped to its support.
fn disk_kernel(radius: f64, alias_sigma: f64) -> Array2<f64> {
    let r = radius.ceil().max(1.0) as isize + 1;
    let n = (2 * r + 1) as usize;
    let disk = Array2::from_shape_fn((n, n), |(y, x)| {
        let (dy, dx) = (y as f64 - r as f64, x as f64 - r as f64);
        if dy * dy + dx * dx <= radius * radius {
            1.0
        } else {
            0.0
        }
    });
    let g = gaussian_kernel(3, alias_sigma);
    let mut k = Array2::<f64>::zeros((n, n));
    for y in 0..n {
        for x in 0..n {
            let mut acc = 0.0;
            for ky in 0..3 {
                for kx in 0..3 {
                    let (sy, sx) = (y as isize + ky as isize - 1, x as isize + kx as isize - 1);
                    if sy >= 0 && sx >= 0 && (sy as usize) < n && (sx as usize) < n {
                        acc += g[[ky, kx]] * disk[[sy as usize, sx as usize]];
                    }
                }
            }
            k[[y, x]] = acc;
        }
    }
    let sum = k.sum();
    k / sum
}

/// One-sided streak: Gaussian-weighted samples along `angle` degrees.
fn motion_blur(p: &Array2<f32>, radius: f64, sigma: f64, angle: f64) -> Array2<f32> {
    let (h, w) = p.dim();
    let (s, c) = angle.to_radians().sin_cos();
    let taps: Vec<(f64, f64)> = (0..=radius.round() as usize)
        .map(|k| (k as f64, (-(k as f64).powi(2) / (2.0 * sigma * sigma)).exp()))
        .collect();
    let total: f64 = taps.iter().map(|t| t.1).sum();
    Array2::from_shape_fn((h, w), |(y, x)| {
        let mut acc = 0.0f64;
        for &(d, wt) in &taps {
            let sy = (y as f64 + d * s).clamp(0.0, h as f64 - 1.0);
            let sx = (x as f64 - d * c).clamp(0.0, w as f64 - 1.0);
            acc += wt * sample_bilinear(p, sy, sx, 0.0f32) as f64;
        }
        (acc / total) as f32
    })
}

/// Scales the plane up by `z` about its center and crops back to size.
fn center_zoom(p: &Array2<f32>, z: f64) -> Array2<f32> {
    let (h, w) = p.dim();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    Array2::from_shape_fn((h, w), |(y, x)| {
        sample_bilinear(p, cy + (y as f64 - cy) / z, cx + (x as f64 - cx) / z, 0.0)
    })
}

fn box_resize(p: &Array2<f32>, oh: usize, ow: usize) -> Array2<f32> {
    let (h, w) = p.dim();
    Array2::from_shape_fn((oh, ow), |(y, x)| {
        let (y0, y1) = (y * h / oh, ((y + 1) * h).div_ceil(oh).max(y * h / oh + 1));
        let (x0, x1) = (x * w / ow, ((x + 1) * w).div_ceil(ow).max(x * w / ow + 1));
        let block = p.slice(s![y0..y1.min(h), x0..x1.min(w)]);
        block.mean().unwrap_or(0.0)
    })
}

fn luma(img: &Array3<f32>) -> Array2<f32> {
    if img.dim().0 == 1 {
        return img.index_axis(Axis(0), 0).to_owned();
    }
    let mut g = img.index_axis(Axis(0), 0).mapv(|v| v * 0.299);
    g.zip_mut_with(&img.index_axis(Axis(0), 1), |a, &b| *a += 0.587 * b);
    g.zip_mut_with(&img.index_axis(Axis(0), 2), |a, &b| *a += 0.114 * b);
    g
}

type SnowParams = (f64, f64, f64, f64, f64, f64, f64);

fn snow(img: &Array3<f32>, (loc, scale_n, zoom, threshold, radius, sigma, blend): SnowParams, scale: f64, rng: &mut ChaCha8Rng) -> Array3<f32> {
    let (_, h, w) = img.dim();
    let normal = Normal::new(loc, scale_n).unwrap();
    let (sh, sw) = (((h as f64 / zoom).ceil() as usize).max(2), ((w as f64 / zoom).ceil() as usize).max(2));
    let small = Array2::from_shape_fn((sh, sw), |_| normal.sample(rng) as f32);
    let mut layer = resize_bilinear(&small, h, w);
    layer.mapv_inplace(|v| if (v as f64) < threshold { 0.0 } else { v });
    let angle = rng.random_range(-135.0f64..-45.0);
    let layer = motion_blur(&layer, radius * scale, sigma * scale, angle);
    let flipped = layer.slice(s![..;-1, ..;-1]).to_owned();
    let gray = luma(img);
    let mut out = img.clone();
    for mut p in out.outer_iter_mut() {
        let orig = p.to_owned();
        for ((v, &o), &g) in p.iter_mut().zip(orig.iter()).zip(gray.iter()) {
            *v = blend as f32 * o + (1.0 - blend as f32) * o.max(g * 1.5 + 0.5);
        }
        p += &layer;
        p += &flipped;
    }
    out
}

/// Diamond-square fractal on a `size × size` torus (size a power of two),
/// normalized to `[0, 1]`.
pub fn plasma_fractal(size: usize, decay: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = size.max(2);
    let mut m = Array2::<f64>::zeros((n, n));
    let mut step = n;
    let mut wibble = 100.0f64;
    let at = |m: &Array2<f64>, y: usize, x: usize| m[[y % n, x % n]];
    while step >= 2 {
        let half = step / 2;
        for y in (0..n).step_by(step) {
            for x in (0..n).step_by(step) {
                let sum = at(&m, y, x) + at(&m, y + step, x) + at(&m, y, x + step) + at(&m, y + step, x + step);
                m[[y + half, x + half]] = sum / 4.0 + wibble * rng.random_range(-wibble..wibble);
            }
        }
        for y in (0..n).step_by(step) {
            for x in (0..n).step_by(step) {
                // top edge midpoint and left edge midpoint of each square
                let top = at(&m, y, x) + at(&m, y, x + step) + at(&m, y + half, x + half) + at(&m, y + n - half, x + half);
                m[[y, x + half]] = top / 4.0 + wibble * rng.random_range(-wibble..wibble);
                let left = at(&m, y, x) + at(&m, y + step, x) + at(&m, y + half, x + half) + at(&m, y + half, x + n - half);
                m[[y + half, x]] = left / 4.0 + wibble * rng.random_range(-wibble..wibble);
            }
        }
        step = half;
        wibble /= decay;
    }
    let min = m.iter().copied().fold(f64::INFINITY, f64::min);
    let max = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = (max - min).max(1e-12);
    m.mapv(|v| (v - min) / range)
}

/// Procedural ice texture: thresholded fractal ridges with a few bright
/// crystalline streaks.
fn frost_texture(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Array2<f32> {
    let size = h.max(w).next_power_of_two();
    let base = plasma_fractal(size, 1.6, rng);
    let mut tex = Array2::from_shape_fn((h, w), |(y, x)| {
        let v = base[[y, x]];
        (1.0 - (2.0 * v - 1.0).abs()).powi(3) as f32
    });
    let streaks = (h * w / 64).max(4);
    for _ in 0..streaks {
        let (mut y, mut x) = (rng.random_range(0.0..h as f64), rng.random_range(0.0..w as f64));
        let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let len = rng.random_range(2..(h.min(w) / 3).max(3));
        for _ in 0..len {
            let (iy, ix) = (reflect_index(y as isize, h), reflect_index(x as isize, w));
            tex[[iy, ix]] = tex[[iy, ix]].max(0.9);
            y += angle.sin();
            x += angle.cos();
        }
    }
    gaussian_blur(&tex, 0.5)
}

/// Adds `delta` to the HSV value channel. Hue and saturation are unchanged,
/// so every channel scales by `V'/V` (grey pixels just shift by `delta`).
fn brightness(img: &Array3<f32>, delta: f64) -> Array3<f32> {
    let (c, h, w) = img.dim();
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let v = (0..c).map(|ch| img[[ch, y, x]]).fold(0.0f32, f32::max) as f64;
            let v2 = (v + delta).clamp(0.0, 1.0);
            for ch in 0..c {
                out[[ch, y, x]] = if v > 0.0 { (img[[ch, y, x]] as f64 * v2 / v) as f32 } else { v2 as f32 };
            }
        }
    }
    out
}

fn elastic(img: &Array3<f32>, (alpha, sigma, jitter): (f64, f64, f64), rng: &mut ChaCha8Rng) -> Array3<f32> {
    let (_, h, w) = img.dim();
    let side = h.min(w) as f64;
    let (alpha, sigma, jitter) = (alpha * side, sigma * side, jitter * side);
    // affine: move three reference points and solve for the map
    let (cy, cx) = (h as f64 / 2.0, w as f64 / 2.0);
    let sq = side / 3.0;
    let src = [(cy - sq, cx - sq), (cy - sq, cx + sq), (cy + sq, cx - sq)];
    let dst: Vec<(f64, f64)> =
        src.iter().map(|&(y, x)| (y + rng.random_range(-jitter..=jitter), x + rng.random_range(-jitter..=jitter))).collect();
    // inverse affine maps destination coordinates back to the source
    let inv = solve_affine(&dst, &src);
    let field = |rng: &mut ChaCha8Rng| -> Array2<f32> {
        let noise = Array2::from_shape_fn((h, w), |_| rng.random_range(-1.0f32..1.0));
        gaussian_blur(&noise, sigma).mapv(|v| v * alpha as f32)
    };
    let (dy, dx) = if alpha > 0.0 && sigma > 0.0 { (field(rng), field(rng)) } else { (Array2::zeros((h, w)), Array2::zeros((h, w))) };
    per_plane(img, |p| {
        Array2::from_shape_fn((h, w), |(y, x)| {
            let (yy, xx) = (y as f64 + dy[[y, x]] as f64, x as f64 + dx[[y, x]] as f64);
            let sy = inv[0] * yy + inv[1] * xx + inv[2];
            let sx = inv[3] * yy + inv[4] * xx + inv[5];
            let ry = reflect_coord(sy, h);
            let rx = reflect_coord(sx, w);
            sample_bilinear(p, ry, rx, 0.0)
        })
    })
}

fn reflect_coord(v: f64, n: usize) -> f64 {
    if n == 1 {
        return 0.0;
    }
    let period = 2.0 * (n as f64 - 1.0);
    let mut r = v.rem_euclid(period);
    if r > n as f64 - 1.0 {
        r = period - r;
    }
    r
}

/// Affine map `(y, x) ↦ (a y + b x + c, d y + e x + f)` sending `from` to `to`.
fn solve_affine(from: &[(f64, f64)], to: &[(f64, f64)]) -> [f64; 6] {
    let m = [[from[0].0, from[0].1, 1.0], [from[1].0, from[1].1, 1.0], [from[2].0, from[2].1, 1.0]];
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-12 {
        return [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
    }
    let solve = |rhs: [f64; 3]| -> [f64; 3] {
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let mut mk = m;
            for r in 0..3 {
                mk[r][k] = rhs[r];
            }
            let d = mk[0][0] * (mk[1][1] * mk[2][2] - mk[1][2] * mk[2][1])
                - mk[0][1] * (mk[1][0] * mk[2][2] - mk[1][2] * mk[2][0])
                + mk[0][2] * (mk[1][0] * mk[2][1] - mk[1][1] * mk[2][0]);
            *o = d / det;
        }
        out
    };
    let r1 = solve([to[0].0, to[1].0, to[2].0]);
    let r2 = solve([to[0].1, to[1].1, to[2].1]);
    [r1[0], r1[1], r1[2], r2[0], r2[1], r2[2]]
}

fn jpeg_round_trip(img: &Array3<f32>, quality: u8) -> Result<Array3<f32>> {
    use image::codecs::jpeg::JpegEncoder;
    use image::{ExtendedColorType, ImageDecoder};

    let (c, h, w) = img.dim();
    let mut raw = Vec::with_capacity(c * h * w);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                raw.push((img[[ch, y, x]].clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    let color = if c == 1 { ExtendedColorType::L8 } else { ExtendedColorType::Rgb8 };
    let mut bytes = Vec::new();
    JpegEncoder::new_with_quality(&mut bytes, quality)
        .encode(&raw, w as u32, h as u32, color)
        .map_err(|e| Error::data(format!("jpeg encode: {e}")))?;
    let decoder = image::codecs::jpeg::JpegDecoder::new(std::io::Cursor::new(bytes))
        .map_err(|e| Error::data(format!("jpeg decode: {e}")))?;
    let mut decoded = vec![0u8; decoder.total_bytes() as usize];
    decoder.read_image(&mut decoded).map_err(|e| Error::data(format!("jpeg decode: {e}")))?;
    Ok(Array3::from_shape_fn((c, h, w), |(ch, y, x)| decoded[(y * w + x) * c + ch] as f32 / 255.0))
}

/// Accuracy (%) for every corruption and severity 1..=5.
pub fn corruption_grid(
    net: &Classifier,
    test: &ImageSet,
    corruptions: &[Corruption],
    seed: u64,
) -> Result<BTreeMap<(Corruption, u8), f64>> {
    let mut grid = BTreeMap::new();
    for &c in corruptions {
        for severity in 1..=5u8 {
            let images = corrupt(&test.images, CorruptionSpec::new(c, severity)?, seed)?;
            let set = ImageSet { images, labels: test.labels.clone() };
            grid.insert((c, severity), super::accuracy(net, &set, None));
        }
    }
    Ok(grid)
}

/// Mean accuracy across the corruptions at each severity 1..=5.
pub fn corruption_curve(net: &Classifier, test: &ImageSet, corruptions: &[Corruption], seed: u64) -> Result<Vec<f64>> {
    if corruptions.is_empty() {
        return Err(Error::config("no corruptions selected"));
    }
    let grid = corruption_grid(net, test, corruptions, seed)?;
    Ok((1..=5u8)
        .map(|s| corruptions.iter().map(|&c| grid[&(c, s)]).sum::<f64>() / corruptions.len() as f64)
        .collect())
}
