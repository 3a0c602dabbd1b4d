//! Pluggable 2-D denoisers for multi-channel abundance grids, plus the
//! regularization-by-denoising functional and its gradient.
//!
//! A denoiser consumes an R x N channel matrix together with its (H, W)
//! spatial shape and filters each channel image independently. Outputs are
//! deliberately not re-projected onto the simplex: the RED machinery works on
//! the raw denoised residual. All border handling reflects at half-sample
//! boundaries (edge pixel duplicated), which keeps the box operator a
//! symmetric linear map.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UnmixError};

/// Denoiser selection and parameters, part of the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DenoiserSpec {
    /// Pass-through; turns RED into a no-op. Useful as a test oracle.
    Identity,
    /// Uniform window mean of radius `radius`. A symmetric linear operator,
    /// used as the exactness oracle for the RED gradient.
    Box { radius: usize },
    /// Nonlocal means: each pixel becomes a patch-similarity weighted average
    /// over its search window.
    Nlm {
        patch_radius: usize,
        window_radius: usize,
        h: f64,
    },
}

impl DenoiserSpec {
    /// NLM with 3x3 patches, an 11x11 search window, and filtering strength
    /// 0.1 in abundance units.
    pub fn nlm_default() -> Self {
        DenoiserSpec::Nlm {
            patch_radius: 1,
            window_radius: 5,
            h: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let DenoiserSpec::Nlm { h, .. } = self {
            if !(*h > 0.0 && h.is_finite()) {
                return Err(UnmixError::InvalidInput(format!(
                    "nlm filtering strength must be positive and finite, got {h}"
                )));
            }
        }
        Ok(())
    }
}

/// Half-sample symmetric reflection of index `i` into `[0, n)`.
pub(crate) fn reflect_index(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    debug_assert!(n > 0);
    loop {
        if i < 0 {
            i = -1 - i;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Pads an H x W image by `pad` on every side with reflected samples.
fn reflect_pad(x: &Array2<f64>, pad: usize) -> Array2<f64> {
    let (h, w) = x.dim();
    let p = pad as isize;
    Array2::from_shape_fn((h + 2 * pad, w + 2 * pad), |(y, xx)| {
        x[[
            reflect_index(y as isize - p, h),
            reflect_index(xx as isize - p, w),
        ]]
    })
}

/// Applies the selected denoiser to each channel of `a` independently.
///
/// `a` is an R x N matrix whose column n is pixel (n / W, n % W) on the
/// (H, W) grid. Channels are processed in parallel; each channel result is
/// independent of the schedule.
pub fn denoise(a: &Array2<f64>, grid: (usize, usize), spec: &DenoiserSpec) -> Result<Array2<f64>> {
    let (h, w) = grid;
    if a.ncols() != h * w {
        return Err(UnmixError::DimensionMismatch(format!(
            "channel matrix has {} pixels but grid is {}x{}",
            a.ncols(),
            h,
            w
        )));
    }
    spec.validate()?;
    if matches!(spec, DenoiserSpec::Identity) {
        return Ok(a.clone());
    }
    let rows: Vec<Vec<f64>> = (0..a.nrows())
        .into_par_iter()
        .map(|ch| -> Result<Vec<f64>> {
            let band = Array2::from_shape_fn((h, w), |(y, x)| a[[ch, y * w + x]]);
            let out = match spec {
                DenoiserSpec::Identity => unreachable!("handled above"),
                DenoiserSpec::Box { radius } => box_denoise_band(&band, *radius),
                DenoiserSpec::Nlm {
                    patch_radius,
                    window_radius,
                    h: strength,
                } => nlm_denoise_band(&band, *patch_radius, *window_radius, *strength)?,
            };
            let mut flat = Vec::with_capacity(h * w);
            for y in 0..h {
                for x in 0..w {
                    flat.push(out[[y, x]]);
                }
            }
            Ok(flat)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Array2::<f64>::zeros(a.raw_dim());
    for (ch, flat) in rows.iter().enumerate() {
        for (n, &v) in flat.iter().enumerate() {
            out[[ch, n]] = v;
        }
    }
    Ok(out)
}

/// Box filter: every output pixel is the mean of its reflect-padded
/// (2 radius + 1)^2 window.
pub fn box_denoise_band(x: &Array2<f64>, radius: usize) -> Array2<f64> {
    if radius == 0 {
        return x.clone();
    }
    let (h, w) = x.dim();
    let padded = reflect_pad(x, radius);
    let side = 2 * radius + 1;
    let norm = 1.0 / (side * side) as f64;
    Array2::from_shape_fn((h, w), |(y, xx)| {
        let mut sum = 0.0;
        for dy in 0..side {
            for dx in 0..side {
                sum += padded[[y + dy, xx + dx]];
            }
        }
        sum * norm
    })
}

/// Nonlocal means on a single channel image.
///
/// Pixel p is replaced by the normalized sum over window pixels q of
/// exp(-||patch_p - patch_q||^2 / h^2) * x_q, patches taken from the
/// reflect-padded image; the self term (q = p, weight 1) is included.
pub fn nlm_denoise_band(
    x: &Array2<f64>,
    patch_radius: usize,
    window_radius: usize,
    h: f64,
) -> Result<Array2<f64>> {
    let (rows, cols) = x.dim();
    if rows <= 2 * patch_radius || cols <= 2 * patch_radius {
        return Err(UnmixError::InvalidInput(format!(
            "nlm needs image sides larger than twice the patch radius; got {rows}x{cols} with patch radius {patch_radius}"
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(UnmixError::InvalidInput(format!(
            "nlm filtering strength must be positive and finite, got {h}"
        )));
    }
    let pad = patch_radius + window_radius;
    let padded = reflect_pad(x, pad);
    let inv_h2 = 1.0 / (h * h);
    let wside = (2 * window_radius + 1) as isize;
    let pside = (2 * patch_radius + 1) as isize;
    let mut out = Array2::<f64>::zeros((rows, cols));
    for y in 0..rows {
        for xx in 0..cols {
            // Center of the current pixel inside the padded image.
            let cy = y + pad;
            let cx = xx + pad;
            let mut num = 0.0;
            let mut den = 0.0;
            for wy in 0..wside {
                for wx in 0..wside {
                    let qy = cy as isize + wy - window_radius as isize;
                    let qx = cx as isize + wx - window_radius as isize;
                    let mut d2 = 0.0;
                    for py in -(pside / 2)..=(pside / 2) {
                        for px in -(pside / 2)..=(pside / 2) {
                            let a = padded[[(cy as isize + py) as usize, (cx as isize + px) as usize]];
                            let b = padded[[(qy + py) as usize, (qx + px) as usize]];
                            d2 += (a - b) * (a - b);
                        }
                    }
                    let weight = (-d2 * inv_h2).exp();
                    num += weight * padded[[qy as usize, qx as usize]];
                    den += weight;
                }
            }
            out[[y, xx]] = num / den;
        }
    }
    Ok(out)
}

/// RED functional value: (1/2) <A, A - C(A)> with the Frobenius inner
/// product, where C is the configured denoiser.
pub fn red_value(a: &Array2<f64>, grid: (usize, usize), spec: &DenoiserSpec) -> Result<f64> {
    let denoised = denoise(a, grid, spec)?;
    let mut acc = 0.0;
    for (&v, &c) in a.iter().zip(denoised.iter()) {
        acc += v * (v - c);
    }
    Ok(0.5 * acc)
}

/// RED gradient: the denoising residual A - C(A).
pub fn red_gradient(
    a: &Array2<f64>,
    grid: (usize, usize),
    spec: &DenoiserSpec,
) -> Result<Array2<f64>> {
    let denoised = denoise(a, grid, spec)?;
    Ok(a - &denoised)
}
