//! Evaluation metrics: abundance RMSE, mean spectral angle distance, mean
//! spectral information divergence, and reconstruction PSNR.
//!
//! Estimated endmembers carry no canonical ordering, so mSAD and mSID first
//! match estimated columns to ground-truth columns with the permutation that
//! minimizes total spectral angle (exhaustive search, R <= 8). The same
//! permutation should be applied to abundance rows before RMSE; see
//! [`sad_permutation`] and [`permute_abundance_rows`]. mSID uses the natural
//! logarithm.

use ndarray::Array2;

use crate::error::{Result, UnmixError};
use crate::hsi::{AbundanceMatrix, EndmemberMatrix, HyperspectralImage};

/// Largest endmember count for which the exhaustive permutation search runs.
pub const MAX_ALIGN_ENDMEMBERS: usize = 8;

/// Floor applied to normalized spectra before the mSID logarithm.
pub const SID_FLOOR: f64 = 1e-12;

/// Root mean square abundance error: sqrt(sum_i ||a_i - a_hat_i||^2 / (N R)).
///
/// No column or row matching is performed here; align rows first when the
/// estimate comes from a blind method.
pub fn rmse(a_true: &AbundanceMatrix, a_est: &AbundanceMatrix) -> Result<f64> {
    if a_true.data().dim() != a_est.data().dim() {
        return Err(UnmixError::DimensionMismatch(format!(
            "abundance shapes differ: {:?} vs {:?}",
            a_true.data().dim(),
            a_est.data().dim()
        )));
    }
    let n = a_true.pixels() as f64;
    let r = a_true.endmembers() as f64;
    let sq_sum: f64 = a_true
        .data()
        .iter()
        .zip(a_est.data().iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sq_sum / (n * r)).sqrt())
}

/// Spectral angle between two band vectors, in radians.
///
/// Computed as 2 atan2(||u_hat - v_hat||, ||u_hat + v_hat||) on the unit
/// vectors, which stays accurate near 0 and pi where the acos form loses
/// half the significant digits.
pub fn spectral_angle(u: &[f64], v: &[f64]) -> Result<f64> {
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (&a, &b) in u.iter().zip(v.iter()) {
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(UnmixError::InvalidInput(
            "spectral angle undefined for a zero-norm column".into(),
        ));
    }
    let (su, sv) = (nu.sqrt(), nv.sqrt());
    let mut diff = 0.0;
    let mut sum = 0.0;
    for (&a, &b) in u.iter().zip(v.iter()) {
        let (ua, vb) = (a / su, b / sv);
        diff += (ua - vb) * (ua - vb);
        sum += (ua + vb) * (ua + vb);
    }
    Ok(2.0 * diff.sqrt().atan2(sum.sqrt()))
}

fn column(s: &EndmemberMatrix, idx: usize) -> Vec<f64> {
    s.data().column(idx).to_vec()
}

fn visit_permutations(r: usize, mut f: impl FnMut(&[usize])) {
    // Heap's algorithm, iterative.
    let mut perm: Vec<usize> = (0..r).collect();
    let mut stack = vec![0usize; r];
    f(&perm);
    let mut i = 1;
    while i < r {
        if stack[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(stack[i], i);
            }
            f(&perm);
            stack[i] += 1;
            i = 1;
        } else {
            stack[i] = 0;
            i += 1;
        }
    }
}

/// Permutation matching estimated endmember columns to ground truth.
///
/// Returns `perm` with `perm[r]` the column of `s_est` assigned to column `r`
/// of `s_true`, chosen by exhaustive search to minimize the total spectral
/// angle. Limited to R <= [`MAX_ALIGN_ENDMEMBERS`].
pub fn sad_permutation(s_true: &EndmemberMatrix, s_est: &EndmemberMatrix) -> Result<Vec<usize>> {
    if s_true.data().dim() != s_est.data().dim() {
        return Err(UnmixError::DimensionMismatch(format!(
            "endmember shapes differ: {:?} vs {:?}",
            s_true.data().dim(),
            s_est.data().dim()
        )));
    }
    let r = s_true.count();
    if r > MAX_ALIGN_ENDMEMBERS {
        return Err(UnmixError::InvalidInput(format!(
            "exhaustive endmember alignment supports at most {MAX_ALIGN_ENDMEMBERS} columns, got {r}"
        )));
    }
    // Pairwise angle table, then score every assignment.
    let mut angles = Array2::<f64>::zeros((r, r));
    for i in 0..r {
        let t = column(s_true, i);
        for j in 0..r {
            angles[[i, j]] = spectral_angle(&t, &column(s_est, j))?;
        }
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    visit_permutations(r, |perm| {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| angles[[i, j]]).sum();
        if best.as_ref().is_none_or(|(s, _)| total < *s) {
            best = Some((total, perm.to_vec()));
        }
    });
    Ok(best.expect("at least one permutation").1)
}

/// Reorders endmember columns by `perm` (as produced by [`sad_permutation`]).
pub fn permute_endmember_columns(s: &EndmemberMatrix, perm: &[usize]) -> Result<EndmemberMatrix> {
    if perm.len() != s.count() {
        return Err(UnmixError::DimensionMismatch(
            "permutation length does not match endmember count".into(),
        ));
    }
    let mut out = Array2::<f64>::zeros(s.data().raw_dim());
    for (dst, &src) in perm.iter().enumerate() {
        out.column_mut(dst).assign(&s.data().column(src));
    }
    EndmemberMatrix::new(out)
}

/// Reorders abundance rows by `perm`, matching a column reorder of the
/// corresponding endmembers.
pub fn permute_abundance_rows(a: &AbundanceMatrix, perm: &[usize]) -> Result<AbundanceMatrix> {
    if perm.len() != a.endmembers() {
        return Err(UnmixError::DimensionMismatch(
            "permutation length does not match abundance rows".into(),
        ));
    }
    let mut out = Array2::<f64>::zeros(a.data().raw_dim());
    for (dst, &src) in perm.iter().enumerate() {
        out.row_mut(dst).assign(&a.data().row(src));
    }
    AbundanceMatrix::new(out)
}

/// Mean spectral angle distance in radians, after SAD-optimal column matching.
pub fn msad(s_true: &EndmemberMatrix, s_est: &EndmemberMatrix) -> Result<f64> {
    let perm = sad_permutation(s_true, s_est)?;
    let r = s_true.count();
    let mut total = 0.0;
    for (i, &j) in perm.iter().enumerate() {
        total += spectral_angle(&column(s_true, i), &column(s_est, j))?;
    }
    Ok(total / r as f64)
}

/// Mean spectral information divergence (natural log), using the same column
/// matching as [`msad`]. Spectra are normalized to unit sum and floored at
/// [`SID_FLOOR`] before the logarithm.
pub fn msid(s_true: &EndmemberMatrix, s_est: &EndmemberMatrix) -> Result<f64> {
    let perm = sad_permutation(s_true, s_est)?;
    let r = s_true.count();
    let mut total = 0.0;
    for (i, &j) in perm.iter().enumerate() {
        let p = normalized_spectrum(&column(s_true, i), i)?;
        let q = normalized_spectrum(&column(s_est, j), j)?;
        for (pb, qb) in p.iter().zip(q.iter()) {
            total += pb * (pb / qb).ln();
        }
    }
    Ok(total / r as f64)
}

fn normalized_spectrum(col: &[f64], idx: usize) -> Result<Vec<f64>> {
    let sum: f64 = col.iter().sum();
    if sum <= 0.0 {
        return Err(UnmixError::InvalidInput(format!(
            "endmember column {idx} sums to zero, SID undefined"
        )));
    }
    Ok(col.iter().map(|&v| (v / sum).max(SID_FLOOR)).collect())
}

/// Peak signal-to-noise ratio in dB: 10 log10(MAX^2 / MSE) with MAX taken
/// from the reconstructed image. Returns +infinity when the images match.
pub fn psnr(y_ref: &HyperspectralImage, y_rec: &HyperspectralImage) -> Result<f64> {
    if y_ref.data().dim() != y_rec.data().dim() {
        return Err(UnmixError::DimensionMismatch(format!(
            "image shapes differ: {:?} vs {:?}",
            y_ref.data().dim(),
            y_rec.data().dim()
        )));
    }
    let mse: f64 = y_ref
        .data()
        .iter()
        .zip(y_rec.data().iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / y_ref.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let max = y_rec.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(10.0 * (max * max / mse).log10())
}
