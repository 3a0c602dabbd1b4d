//! Shared oracle helpers for the integration suites. Everything here is an
//! independent computation path: plain loops, dense matrices, grid searches,
//! and finite differences, never the solver code under test.

#![allow(dead_code)]

use ndarray::Array2;
use unmix_core::nn::{AeParams, LEAKY_SLOPE};

/// Triple-loop matrix product.
pub fn matmul_naive(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (m, k) = a.dim();
    let (k2, n) = b.dim();
    assert_eq!(k, k2);
    let mut out = Array2::<f64>::zeros((m, n));
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for t in 0..k {
                acc += a[[i, t]] * b[[t, j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
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

/// Dense matrix of the reflect-padded box filter on an H x W grid: row p
/// counts how often each source pixel lands in the window of p, divided by
/// the window size.
pub fn box_operator_matrix(h: usize, w: usize, radius: usize) -> Array2<f64> {
    let n = h * w;
    let side = 2 * radius as isize + 1;
    let norm = 1.0 / (side * side) as f64;
    let mut op = Array2::<f64>::zeros((n, n));
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            for dy in -(radius as isize)..=(radius as isize) {
                for dx in -(radius as isize)..=(radius as isize) {
                    let sy = reflect(y as isize + dy, h);
                    let sx = reflect(x as isize + dx, w);
                    op[[p, sy * w + sx]] += norm;
                }
            }
        }
    }
    op
}

/// Gaussian elimination with partial pivoting; solves `a x = b` for a small
/// dense system.
pub fn solve_dense(a: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.len(), n);
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if m[[row, col]].abs() > m[[pivot, col]].abs() {
                pivot = row;
            }
        }
        assert!(m[[pivot, col]].abs() > 1e-14, "singular oracle system");
        if pivot != col {
            for j in 0..n {
                let tmp = m[[col, j]];
                m[[col, j]] = m[[pivot, j]];
                m[[pivot, j]] = tmp;
            }
            rhs.swap(col, pivot);
        }
        let diag = m[[col, col]];
        for row in (col + 1)..n {
            let factor = m[[row, col]] / diag;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                m[[row, j]] -= factor * m[[col, j]];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for j in (row + 1)..n {
            acc -= m[[row, j]] * x[j];
        }
        x[row] = acc / m[[row, row]];
    }
    x
}

/// Grid-search projection of one column onto the unit simplex: scans the
/// shift theta, keeps candidates whose clamped sum is feasible, and picks the
/// one closest to the input in Euclidean distance.
pub fn simplex_projection_grid(col: &[f64], steps: usize) -> Vec<f64> {
    let lo = col.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for s in 0..=steps {
        let theta = lo + (hi - lo) * s as f64 / steps as f64;
        let candidate: Vec<f64> = col.iter().map(|&v| (v - theta).max(0.0)).collect();
        let sum: f64 = candidate.iter().sum();
        if (sum - 1.0).abs() > 2.0 * (hi - lo) / steps as f64 {
            continue;
        }
        let dist: f64 = candidate
            .iter()
            .zip(col.iter())
            .map(|(c, v)| (c - v) * (c - v))
            .sum();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, candidate));
        }
    }
    best.expect("grid search found a feasible candidate").1
}

/// Independent re-implementation of the encoder forward pass: direct
/// zero-padded convolution gathers, no im2col, no GEMM. Returns the
/// pre-activations of every block and the softmax output.
pub struct NaiveForward {
    pub preacts: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

pub fn naive_encoder_forward(params: &AeParams, y: &Array2<f64>, grid: (usize, usize)) -> NaiveForward {
    let (h, w) = grid;
    let n = h * w;
    let mut preacts = Vec::with_capacity(5);
    let mut current = y.clone();
    for block in &params.encoder {
        let c_in = block.in_channels();
        let c_out = block.out_channels();
        let k = block.kernel;
        let pad = (k - 1) / 2;
        let mut z = Array2::<f64>::zeros((c_out, n));
        for o in 0..c_out {
            for yy in 0..h {
                for xx in 0..w {
                    let mut acc = block.bias[o];
                    for c in 0..c_in {
                        for dy in 0..k {
                            for dx in 0..k {
                                let sy = yy as isize + dy as isize - pad as isize;
                                let sx = xx as isize + dx as isize - pad as isize;
                                if sy < 0 || sy >= h as isize || sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                acc += block.weights[[o, (c * k + dy) * k + dx]]
                                    * current[[c, sy as usize * w + sx as usize]];
                            }
                        }
                    }
                    z[[o, yy * w + xx]] = acc;
                }
            }
        }
        current = z.mapv(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v });
        preacts.push(z);
    }
    // The final block feeds a channelwise softmax instead of the LeakyReLU.
    let z_last = preacts.last().unwrap();
    let (r, _) = z_last.dim();
    let mut output = Array2::<f64>::zeros(z_last.raw_dim());
    for col in 0..n {
        let mut max = f64::NEG_INFINITY;
        for row in 0..r {
            max = max.max(z_last[[row, col]]);
        }
        let mut denom = 0.0;
        for row in 0..r {
            let e = (z_last[[row, col]] - max).exp();
            output[[row, col]] = e;
            denom += e;
        }
        for row in 0..r {
            output[[row, col]] /= denom;
        }
    }
    NaiveForward { preacts, output }
}

/// Sign pattern of the LeakyReLU pre-activations (blocks 0..=3). A finite
/// difference straddles a kink exactly when this pattern changes between the
/// two perturbed points, which invalidates the measurement for that
/// coordinate.
pub fn leaky_sign_pattern(fwd: &NaiveForward) -> Vec<bool> {
    fwd.preacts[..4]
        .iter()
        .flat_map(|z| z.iter().map(|&v| v > 0.0))
        .collect()
}

/// Relative error with an absolute floor: pairs whose magnitude sits below
/// `floor` are treated as matching zeros, since finite differences of an
/// O(1) function cannot resolve them (the subtraction roundoff is about
/// ulp(loss) / (2 eps), i.e. ~1e-10 here).
pub fn rel_err_floor(a: f64, b: f64, floor: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < floor {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Relative error with the default 1e-8 floor.
pub fn rel_err(a: f64, b: f64) -> f64 {
    rel_err_floor(a, b, 1e-8)
}
