//! Stride-1, zero-padded convolution lowered to matrix multiplication.
//!
//! Feature maps are stored as (channels, pixels) matrices with pixel
//! n = y * W + x. A k x k convolution (k odd) becomes a GEMM against the
//! im2col expansion of its input; the backward pass against the input is the
//! transposed scatter (col2im).

use ndarray::Array2;

/// Expands `x` (C x N, N = H*W) into a (C*k*k) x N patch matrix with zero
/// padding of (k-1)/2 on every side. Row (c*k + dy)*k + dx holds, for each
/// output pixel, the input sample at channel c and offset (dy, dx).
pub(crate) fn im2col(x: &Array2<f64>, grid: (usize, usize), k: usize) -> Array2<f64> {
    let (h, w) = grid;
    let c = x.nrows();
    let n = h * w;
    debug_assert_eq!(x.ncols(), n, "feature map pixels must match grid");
    debug_assert!(k % 2 == 1, "kernel size must be odd");
    let pad = (k - 1) / 2;
    let mut cols = Array2::<f64>::zeros((c * k * k, n));
    let xs = x.as_slice().expect("standard layout");
    let cs = cols.as_slice_mut().expect("standard layout");
    for ch in 0..c {
        for dy in 0..k {
            for dx in 0..k {
                let row = (ch * k + dy) * k + dx;
                let row_off = row * n;
                for y in 0..h {
                    let sy = y as isize + dy as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x0 = pad.saturating_sub(dx);
                    let x1 = (w + pad - dx).min(w);
                    if x0 >= x1 {
                        continue;
                    }
                    let src = ch * n + (sy as usize) * w + (x0 + dx - pad);
                    let dst = row_off + y * w + x0;
                    let len = x1 - x0;
                    cs[dst..dst + len].copy_from_slice(&xs[src..src + len]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds a (C*k*k) x N patch-gradient matrix
/// back onto a C x N feature-map gradient.
pub(crate) fn col2im(dcols: &Array2<f64>, c: usize, grid: (usize, usize), k: usize) -> Array2<f64> {
    let (h, w) = grid;
    let n = h * w;
    debug_assert_eq!(dcols.dim(), (c * k * k, n));
    let pad = (k - 1) / 2;
    let mut dx_map = Array2::<f64>::zeros((c, n));
    let ds = dcols.as_slice().expect("standard layout");
    let out = dx_map.as_slice_mut().expect("standard layout");
    for ch in 0..c {
        for dy in 0..k {
            for dxo in 0..k {
                let row = (ch * k + dy) * k + dxo;
                let row_off = row * n;
                for y in 0..h {
                    let sy = y as isize + dy as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x0 = pad.saturating_sub(dxo);
                    let x1 = (w + pad - dxo).min(w);
                    if x0 >= x1 {
                        continue;
                    }
                    let dst = ch * n + (sy as usize) * w + (x0 + dxo - pad);
                    let src = row_off + y * w + x0;
                    for i in 0..(x1 - x0) {
                        out[dst + i] += ds[src + i];
                    }
                }
            }
        }
    }
    dx_map
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn im2col_center_tap_is_identity() {
        let x = array![[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0]];
        let cols = im2col(&x, (2, 2), 3);
        // Center tap (dy=1, dx=1) of each channel reproduces the input row.
        for n in 0..4 {
            assert_eq!(cols[[1 * 3 + 1, n]], x[[0, n]]);
            assert_eq!(cols[[(3 + 1) * 3 + 1, n]], x[[1, n]]);
        }
    }

    #[test]
    fn im2col_matches_direct_gather() {
        let (h, w) = (4, 5);
        let x = Array2::from_shape_fn((3, h * w), |(c, n)| (c * 100 + n) as f64);
        let cols = im2col(&x, (h, w), 3);
        for c in 0..3 {
            for dy in 0..3usize {
                for dx in 0..3usize {
                    for y in 0..h {
                        for xx in 0..w {
                            let sy = y as isize + dy as isize - 1;
                            let sx = xx as isize + dx as isize - 1;
                            let expected = if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize
                            {
                                x[[c, sy as usize * w + sx as usize]]
                            } else {
                                0.0
                            };
                            assert_eq!(cols[[(c * 3 + dy) * 3 + dx, y * w + xx]], expected);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn col2im_is_the_adjoint_of_im2col() {
        // <im2col(x), u> == <x, col2im(u)> for random-ish x and u.
        let (h, w) = (3, 4);
        let c = 2;
        let x = Array2::from_shape_fn((c, h * w), |(i, j)| ((i * 31 + j * 7) % 13) as f64 - 6.0);
        let u = Array2::from_shape_fn((c * 9, h * w), |(i, j)| ((i * 17 + j * 5) % 11) as f64 - 5.0);
        let cols = im2col(&x, (h, w), 3);
        let back = col2im(&u, c, (h, w), 3);
        let lhs: f64 = cols.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(back.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    }
}
