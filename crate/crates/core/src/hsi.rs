//! Core domain types for the linear mixing model.
//!
//! Matrix layout convention used throughout the crate: pixels are columns.
//! A hyperspectral image with B bands and N = H*W pixels is a B x N matrix,
//! abundances are R x N, endmembers are B x R. Pixel n maps to grid position
//! (row, col) = (n / W, n % W).

use ndarray::Array2;

use crate::error::{Result, UnmixError};

/// Observed or reconstructed hyperspectral image: B bands by H*W pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperspectralImage {
    data: Array2<f64>,
    height: usize,
    width: usize,
}

impl HyperspectralImage {
    /// Wraps a B x N matrix with its spatial shape. Fails if the pixel count
    /// does not factor as `height * width` or any entry is non-finite.
    pub fn new(data: Array2<f64>, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(UnmixError::InvalidInput(
                "image height and width must be at least 1".into(),
            ));
        }
        if data.ncols() != height * width {
            return Err(UnmixError::DimensionMismatch(format!(
                "image has {} pixel columns but grid is {}x{} = {}",
                data.ncols(),
                height,
                width,
                height * width
            )));
        }
        if data.nrows() == 0 {
            return Err(UnmixError::InvalidInput("image needs at least one band".into()));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(UnmixError::InvalidInput(
                "image contains non-finite entries".into(),
            ));
        }
        Ok(Self { data, height, width })
    }

    pub fn bands(&self) -> usize {
        self.data.nrows()
    }

    pub fn pixels(&self) -> usize {
        self.data.ncols()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Spatial shape as (height, width).
    pub fn grid(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }
}

/// Fractional abundances: R endmembers by N pixels, every column on the
/// unit simplex (entries nonnegative, column sums 1 within 1e-9).
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceMatrix {
    data: Array2<f64>,
}

/// Tolerance on the sum-to-one constraint accepted at construction.
pub const ASC_TOLERANCE: f64 = 1e-9;

impl AbundanceMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(UnmixError::InvalidInput("abundance matrix is empty".into()));
        }
        for (n, col) in data.columns().into_iter().enumerate() {
            let mut sum = 0.0;
            for &v in col.iter() {
                if !v.is_finite() || v < 0.0 {
                    return Err(UnmixError::InvalidInput(format!(
                        "abundance column {n} violates nonnegativity (entry {v})"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ASC_TOLERANCE {
                return Err(UnmixError::InvalidInput(format!(
                    "abundance column {n} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self { data })
    }

    /// Number of endmembers R.
    pub fn endmembers(&self) -> usize {
        self.data.nrows()
    }

    pub fn pixels(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }
}

/// Endmember spectra: B bands by R columns, elementwise nonnegative with no
/// all-zero column.
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberMatrix {
    data: Array2<f64>,
}

impl EndmemberMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(UnmixError::InvalidInput("endmember matrix is empty".into()));
        }
        for (r, col) in data.columns().into_iter().enumerate() {
            let mut any_positive = false;
            for &v in col.iter() {
                if !v.is_finite() || v < 0.0 {
                    return Err(UnmixError::InvalidInput(format!(
                        "endmember column {r} violates nonnegativity (entry {v})"
                    )));
                }
                any_positive |= v > 0.0;
            }
            if !any_positive {
                return Err(UnmixError::InvalidInput(format!(
                    "endmember column {r} is all-zero"
                )));
            }
        }
        Ok(Self { data })
    }

    pub fn bands(&self) -> usize {
        self.data.nrows()
    }

    /// Number of endmembers R.
    pub fn count(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }
}

/// Mixes endmembers and abundances under the LMM: returns S*A as an image
/// with the given spatial shape.
pub fn lmm_mix(
    s: &EndmemberMatrix,
    a: &AbundanceMatrix,
    grid: (usize, usize),
) -> Result<HyperspectralImage> {
    if s.count() != a.endmembers() {
        return Err(UnmixError::DimensionMismatch(format!(
            "endmember matrix has {} columns but abundances have {} rows",
            s.count(),
            a.endmembers()
        )));
    }
    if grid.0 * grid.1 != a.pixels() {
        return Err(UnmixError::DimensionMismatch(format!(
            "abundances cover {} pixels but grid is {}x{}",
            a.pixels(),
            grid.0,
            grid.1
        )));
    }
    HyperspectralImage::new(s.data().dot(a.data()), grid.0, grid.1)
}

/// Euclidean projection of every column of `m` onto the unit simplex.
///
/// Uses the sorted-threshold algorithm: with the column entries sorted in
/// decreasing order u_1 >= ... >= u_R, the projection is max(u - theta, 0)
/// where theta = (sum_{i<=rho} u_i - 1)/rho for the largest rho keeping
/// u_rho - theta positive.
pub fn project_simplex_columns(m: &Array2<f64>) -> Result<AbundanceMatrix> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(UnmixError::InvalidInput(
            "cannot project a matrix with non-finite entries".into(),
        ));
    }
    let r = m.nrows();
    if r == 0 || m.ncols() == 0 {
        return Err(UnmixError::InvalidInput("cannot project an empty matrix".into()));
    }
    let mut out = Array2::<f64>::zeros(m.raw_dim());
    let mut sorted = vec![0.0f64; r];
    for (n, col) in m.columns().into_iter().enumerate() {
        for (dst, &src) in sorted.iter_mut().zip(col.iter()) {
            *dst = src;
        }
        sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite entries are comparable"));
        let mut cumulative = 0.0;
        let mut theta = 0.0;
        for (j, &u) in sorted.iter().enumerate() {
            cumulative += u;
            let candidate = (cumulative - 1.0) / (j + 1) as f64;
            if u - candidate > 0.0 {
                theta = candidate;
            }
        }
        for (i, &u) in col.iter().enumerate() {
            out[[i, n]] = (u - theta).max(0.0);
        }
    }
    AbundanceMatrix::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn simplex_cols(data: Array2<f64>) -> AbundanceMatrix {
        AbundanceMatrix::new(data).expect("valid abundances")
    }

    #[test]
    fn image_rejects_grid_mismatch() {
        let err = HyperspectralImage::new(Array2::zeros((3, 5)), 2, 3).unwrap_err();
        assert!(matches!(err, UnmixError::DimensionMismatch(_)));
    }

    #[test]
    fn image_rejects_non_finite() {
        let mut data = Array2::zeros((2, 4));
        data[[1, 2]] = f64::NAN;
        assert!(HyperspectralImage::new(data, 2, 2).is_err());
    }

    #[test]
    fn abundance_rejects_negative_entries() {
        let data = array![[1.2, 0.5], [-0.2, 0.5]];
        assert!(AbundanceMatrix::new(data).is_err());
    }

    #[test]
    fn abundance_rejects_bad_column_sum() {
        let data = array![[0.6, 0.5], [0.6, 0.5]];
        assert!(AbundanceMatrix::new(data).is_err());
    }

    #[test]
    fn endmember_rejects_all_zero_column() {
        let data = array![[0.4, 0.0], [0.6, 0.0]];
        assert!(EndmemberMatrix::new(data).is_err());
    }

    #[test]
    fn lmm_identity_endmembers_reproduce_abundances() {
        let s = EndmemberMatrix::new(Array2::eye(3)).unwrap();
        let a = simplex_cols(array![
            [0.2, 1.0, 0.0, 0.5],
            [0.3, 0.0, 1.0, 0.25],
            [0.5, 0.0, 0.0, 0.25]
        ]);
        let y = lmm_mix(&s, &a, (2, 2)).unwrap();
        assert_eq!(y.data(), a.data());
    }

    #[test]
    fn lmm_one_hot_columns_select_endmembers() {
        let s = EndmemberMatrix::new(array![[0.9, 0.1], [0.2, 0.8], [0.4, 0.3]]).unwrap();
        let a = simplex_cols(array![[1.0, 0.0], [0.0, 1.0]]);
        let y = lmm_mix(&s, &a, (1, 2)).unwrap();
        for b in 0..3 {
            assert_eq!(y.data()[[b, 0]], s.data()[[b, 0]]);
            assert_eq!(y.data()[[b, 1]], s.data()[[b, 1]]);
        }
    }

    #[test]
    fn lmm_rejects_dimension_mismatch() {
        let s = EndmemberMatrix::new(array![[1.0, 0.5], [0.5, 1.0]]).unwrap();
        let a = simplex_cols(array![[0.5], [0.25], [0.25]]);
        assert!(matches!(
            lmm_mix(&s, &a, (1, 1)),
            Err(UnmixError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn projection_leaves_simplex_columns_unchanged() {
        let m = array![[0.25, 1.0], [0.75, 0.0]];
        let p = project_simplex_columns(&m).unwrap();
        for (a, b) in p.data().iter().zip(m.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_matches_hand_cases() {
        let m = array![[1.0, -1.0], [0.5, -1.0]];
        let p = project_simplex_columns(&m).unwrap();
        assert!((p.data()[[0, 0]] - 0.75).abs() < 1e-12);
        assert!((p.data()[[1, 0]] - 0.25).abs() < 1e-12);
        assert!((p.data()[[0, 1]] - 0.5).abs() < 1e-12);
        assert!((p.data()[[1, 1]] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn projection_rejects_non_finite() {
        let m = array![[f64::INFINITY], [0.0]];
        assert!(project_simplex_columns(&m).is_err());
    }
}
