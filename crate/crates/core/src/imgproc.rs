//! Single-plane image primitives shared by the shape filter, stream
//! builders and corruption harness. Planes are `H×W` arrays.

use ndarray::Array2;

use crate::nn::Real;

/// Mirror index without repeating the border pixel (`dcb|abcd|cba`).
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// Bilinear resize with half-pixel centers (no antialiasing), the
/// `align_corners = false` convention.
pub fn resize_bilinear<F: Real>(src: &Array2<F>, out_h: usize, out_w: usize) -> Array2<F> {
    let (h, w) = src.dim();
    let rows = axis_weights(h, out_h);
    let cols = axis_weights(w, out_w);
    Array2::from_shape_fn((out_h, out_w), |(y, x)| {
        let (y0, y1, ly) = rows[y];
        let (x0, x1, lx) = cols[x];
        let ly = F::lit(ly);
        let lx = F::lit(lx);
        let one = F::one();
        let top = src[[y0, x0]] * (one - lx) + src[[y0, x1]] * lx;
        let bottom = src[[y1, x0]] * (one - lx) + src[[y1, x1]] * lx;
        top * (one - ly) + bottom * ly
    })
}

fn axis_weights(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (s.floor() as usize).min(n_in - 1);
            let i1 = if i0 + 1 < n_in { i0 + 1 } else { i0 };
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// 2-D cross-correlation with an odd square kernel and reflect padding.
pub fn correlate_reflect<F: Real>(src: &Array2<F>, kernel: &Array2<f64>) -> Array2<F> {
    let (h, w) = src.dim();
    let (kh, kw) = kernel.dim();
    assert!(kh % 2 == 1 && kw % 2 == 1, "kernel size must be odd");
    let (rh, rw) = ((kh / 2) as isize, (kw / 2) as isize);
    let kernel = kernel.mapv(F::lit);
    Array2::from_shape_fn((h, w), |(y, x)| {
        let mut acc = F::zero();
        for ky in 0..kh {
            let sy = reflect_index(y as isize + ky as isize - rh, h);
            for kx in 0..kw {
                let k = kernel[[ky, kx]];
                if k != F::zero() {
                    let sx = reflect_index(x as isize + kx as isize - rw, w);
                    acc += k * src[[sy, sx]];
                }
            }
        }
        acc
    })
}

/// Normalized 1-D Gaussian taps. `sigma <= 0` selects the conventional
/// sigma for the size, `0.3·((k−1)/2 − 1) + 0.8` (0.8 for k = 3, which
/// yields the binomial taps ¼, ½, ¼ up to rounding).
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    assert!(size % 2 == 1, "kernel size must be odd");
    if size == 3 && sigma <= 0.0 {
        return vec![0.25, 0.5, 0.25];
    }
    let sigma = if sigma > 0.0 { sigma } else { 0.3 * ((size as f64 - 1.0) * 0.5 - 1.0) + 0.8 };
    let r = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - r;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

pub fn gaussian_kernel(size: usize, sigma: f64) -> Array2<f64> {
    let t = gaussian_taps(size, sigma);
    Array2::from_shape_fn((size, size), |(i, j)| t[i] * t[j])
}

/// Samples `src` at fractional coordinates with bilinear weights; points
/// outside the image read as `fill`.
pub fn sample_bilinear<F: Real>(src: &Array2<F>, y: f64, x: f64, fill: F) -> F {
    let (h, w) = src.dim();
    let (y0, x0) = (y.floor(), x.floor());
    let (ly, lx) = (y - y0, x - x0);
    let at = |yy: f64, xx: f64| -> F {
        if yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
            fill
        } else {
            src[[yy as usize, xx as usize]]
        }
    };
    let (ly, lx) = (F::lit(ly), F::lit(lx));
    let one = F::one();
    let top = at(y0, x0) * (one - lx) + at(y0, x0 + 1.0) * lx;
    let bottom = at(y0 + 1.0, x0) * (one - lx) + at(y0 + 1.0, x0 + 1.0) * lx;
    top * (one - ly) + bottom * ly
}

/// Rotates counter-clockwise by `degrees` about the image center with
/// bilinear resampling and zero fill.
pub fn rotate<F: Real>(src: &Array2<F>, degrees: f64) -> Array2<F> {
    let (h, w) = src.dim();
    let theta = degrees.to_radians();
    let (s, c) = theta.sin_cos();
    // Snap tiny trig residue so multiples of 90° resample exactly.
    let snap = |v: f64| if v.abs() < 1e-12 { 0.0 } else if (v.abs() - 1.0).abs() < 1e-12 { v.signum() } else { v };
    let (s, c) = (snap(s), snap(c));
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    Array2::from_shape_fn((h, w), |(y, x)| {
        let (dy, dx) = (y as f64 - cy, x as f64 - cx);
        // inverse map: rotate the destination point clockwise
        let sx = c * dx - s * dy + cx;
        let sy = s * dx + c * dy + cy;
        sample_bilinear(src, sy, sx, F::zero())
    })
}
