//! Seeded synthetic scene generation: spatially smooth simplex abundances
//! from softmax-mapped Gaussian random fields, procedural or library
//! endmembers, LMM mixing, and SNR-controlled additive Gaussian noise.
//!
//! Every generator is a pure function of its configuration and seed, so a
//! scene can be regenerated bit-for-bit.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UnmixError};
use crate::hsi::{lmm_mix, AbundanceMatrix, EndmemberMatrix, HyperspectralImage};
use crate::{denoise::reflect_index, metrics};

/// Scales the standardized Gaussian fields before the channel softmax.
/// At 1.5 the per-pixel maximum abundance typically falls in 0.5-0.9,
/// giving mixed pixels rather than near-pure ones.
pub const SOFTMAX_TEMPERATURE: f64 = 1.5;

/// Minimum spectral angle enforced between procedural endmembers (radians).
pub const MIN_ENDMEMBER_ANGLE: f64 = 0.15;

/// Where endmember spectra come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum EndmemberSource {
    /// Seeded sums of Gaussian bumps over the band axis.
    #[default]
    Procedural,
    /// Seeded draw of distinct columns from a CSV spectral library.
    Csv { path: String, selection_seed: u64 },
}

/// Full description of a synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    /// Endmember count.
    #[serde(rename = "R")]
    pub endmembers: usize,
    /// Spectral band count.
    #[serde(rename = "B")]
    pub bands: usize,
    /// Standard deviation, in pixels, of the Gaussian smoothing kernel.
    pub correlation_length: f64,
    /// Target SNR in dB; `None` disables noise.
    #[serde(default)]
    pub snr_db: Option<f64>,
    pub seed: u64,
    #[serde(default)]
    pub endmember_source: EndmemberSource,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.endmembers == 0 || self.bands == 0 {
            return Err(UnmixError::InvalidInput(
                "height, width, R and B must all be at least 1".into(),
            ));
        }
        if !(self.correlation_length > 0.0 && self.correlation_length.is_finite()) {
            return Err(UnmixError::InvalidInput(format!(
                "correlation_length must be positive and finite, got {}",
                self.correlation_length
            )));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(UnmixError::InvalidInput(format!(
                    "snr_db must be finite (omit it to disable noise), got {snr}"
                )));
            }
        }
        Ok(())
    }
}

/// A generated scene with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub y_clean: HyperspectralImage,
    pub y_noisy: HyperspectralImage,
    pub a_true: AbundanceMatrix,
    pub s_true: EndmemberMatrix,
    pub config: SceneConfig,
    /// SNR actually realized by the drawn noise, in dB; `None` when noise is
    /// disabled.
    pub realized_snr_db: Option<f64>,
    /// Standard deviation of the drawn noise; `None` when noise is disabled.
    pub noise_sigma: Option<f64>,
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k = Vec::with_capacity(2 * radius + 1);
    for i in -(radius as isize)..=(radius as isize) {
        let x = i as f64;
        k.push((-x * x / (2.0 * sigma * sigma)).exp());
    }
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable Gaussian blur with reflect padding.
fn gaussian_blur(x: &Array2<f64>, sigma: f64) -> Array2<f64> {
    let kernel = gaussian_kernel(sigma);
    let radius = kernel.len() / 2;
    let (h, w) = x.dim();
    let mut rows_done = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for xx in 0..w {
            let mut acc = 0.0;
            for (t, &kv) in kernel.iter().enumerate() {
                let sx = reflect_index(xx as isize + t as isize - radius as isize, w);
                acc += kv * x[[y, sx]];
            }
            rows_done[[y, xx]] = acc;
        }
    }
    let mut out = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for xx in 0..w {
            let mut acc = 0.0;
            for (t, &kv) in kernel.iter().enumerate() {
                let sy = reflect_index(y as isize + t as isize - radius as isize, h);
                acc += kv * rows_done[[sy, xx]];
            }
            out[[y, xx]] = acc;
        }
    }
    out
}

/// Spatially smooth simplex abundances.
///
/// Draws one white Gaussian field per endmember, smooths it with an isotropic
/// Gaussian kernel of standard deviation `correlation_length` (reflect
/// padded), standardizes each field over the grid, and maps each pixel's R
/// values through a softmax scaled by [`SOFTMAX_TEMPERATURE`]. The output
/// satisfies the sum-to-one and nonnegativity constraints exactly.
pub fn gaussian_field_abundances(
    height: usize,
    width: usize,
    endmembers: usize,
    correlation_length: f64,
    seed: u64,
) -> Result<AbundanceMatrix> {
    if height == 0 || width == 0 || endmembers == 0 {
        return Err(UnmixError::InvalidInput(
            "field dimensions and endmember count must be at least 1".into(),
        ));
    }
    if !(correlation_length > 0.0 && correlation_length.is_finite()) {
        return Err(UnmixError::InvalidInput(format!(
            "correlation_length must be positive and finite, got {correlation_length}"
        )));
    }
    let n = height * width;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fields = Vec::with_capacity(endmembers);
    for _ in 0..endmembers {
        let white = Array2::from_shape_fn((height, width), |_| rng.sample::<f64, _>(StandardNormal));
        let mut smooth = gaussian_blur(&white, correlation_length);
        let mean = smooth.sum() / n as f64;
        let var = smooth.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if std > 1e-12 {
            smooth.mapv_inplace(|v| (v - mean) / std);
        } else {
            smooth.fill(0.0);
        }
        fields.push(smooth);
    }
    let mut out = Array2::<f64>::zeros((endmembers, n));
    for y in 0..height {
        for x in 0..width {
            let pixel = y * width + x;
            let logits: Vec<f64> = fields
                .iter()
                .map(|f| SOFTMAX_TEMPERATURE * f[[y, x]])
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for (r, &l) in logits.iter().enumerate() {
                let e = (l - max).exp();
                out[[r, pixel]] = e;
                denom += e;
            }
            for r in 0..endmembers {
                out[[r, pixel]] /= denom;
            }
        }
    }
    AbundanceMatrix::new(out)
}

/// Procedurally generated endmember spectra.
///
/// Each column is a sum of 3-6 Gaussian bumps over the band axis plus a
/// positive offset, rescaled to peak in [0.4, 1.0]. Columns are redrawn (at
/// most 100 attempts each) until all pairwise spectral angles reach
/// [`MIN_ENDMEMBER_ANGLE`].
pub fn procedural_endmembers(bands: usize, endmembers: usize, seed: u64) -> Result<EndmemberMatrix> {
    if bands < 4 {
        return Err(UnmixError::InvalidInput(format!(
            "procedural endmembers need at least 4 bands, got {bands}"
        )));
    }
    if endmembers == 0 {
        return Err(UnmixError::InvalidInput("endmember count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = bands as f64;
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(endmembers);
    for r in 0..endmembers {
        let mut accepted = false;
        for _attempt in 0..100 {
            let n_bumps = rng.random_range(3..=6usize);
            let offset = rng.random_range(0.05..0.15);
            let mut curve = vec![offset; bands];
            for _ in 0..n_bumps {
                let center = rng.random_range(0.0..b);
                let width = rng.random_range(0.02 * b + 1.0..0.12 * b + 2.0);
                let amplitude = rng.random_range(0.3..1.0);
                for (i, v) in curve.iter_mut().enumerate() {
                    let d = (i as f64 - center) / width;
                    *v += amplitude * (-0.5 * d * d).exp();
                }
            }
            let peak = curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let target = rng.random_range(0.4..1.0);
            let scale = target / peak;
            for v in &mut curve {
                *v *= scale;
            }
            let separated = columns
                .iter()
                .all(|c| metrics::spectral_angle(c, &curve).unwrap_or(0.0) >= MIN_ENDMEMBER_ANGLE);
            if separated {
                columns.push(curve);
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(UnmixError::InvalidInput(format!(
                "could not draw endmember {r} with pairwise angle >= {MIN_ENDMEMBER_ANGLE} after 100 attempts; try fewer endmembers"
            )));
        }
    }
    let mut out = Array2::<f64>::zeros((bands, endmembers));
    for (r, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            out[[i, r]] = v;
        }
    }
    EndmemberMatrix::new(out)
}

/// Loads endmembers from a CSV spectral library: a header row of names, then
/// one numeric row per band, one spectrum per column. Picks `endmembers`
/// distinct columns by a seeded draw without replacement; negative readings
/// are clamped to zero.
pub fn load_endmembers_csv(
    path: &std::path::Path,
    endmembers: usize,
    selection_seed: u64,
) -> Result<EndmemberMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| UnmixError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| UnmixError::Parse {
        line: 1,
        message: "empty spectral library".into(),
    })?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let columns = names.len();
    if columns < endmembers {
        return Err(UnmixError::Parse {
            line: 1,
            message: format!("library has {columns} spectra but {endmembers} were requested"),
        });
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns {
            return Err(UnmixError::Parse {
                line: idx + 1,
                message: format!("expected {columns} cells, found {}", cells.len()),
            });
        }
        let mut row = Vec::with_capacity(columns);
        for cell in cells {
            let v: f64 = cell.parse().map_err(|_| UnmixError::Parse {
                line: idx + 1,
                message: format!("non-numeric cell {cell:?}"),
            })?;
            row.push(v.max(0.0));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(UnmixError::Parse {
            line: 1,
            message: "library has no band rows".into(),
        });
    }
    // Seeded draw without replacement: a partial Fisher-Yates shuffle.
    let mut rng = ChaCha8Rng::seed_from_u64(selection_seed);
    let mut indices: Vec<usize> = (0..columns).collect();
    for i in 0..endmembers {
        let j = rng.random_range(i..columns);
        indices.swap(i, j);
    }
    let bands = rows.len();
    let mut out = Array2::<f64>::zeros((bands, endmembers));
    for (dst, &src) in indices[..endmembers].iter().enumerate() {
        for (b, row) in rows.iter().enumerate() {
            out[[b, dst]] = row[src];
        }
    }
    EndmemberMatrix::new(out)
}

/// Adds i.i.d. zero-mean Gaussian noise at the requested SNR.
///
/// The noise variance is `mean(Y^2) / 10^(snr_db/10)`; SNR here is defined
/// against the signal power `mean(Y^2)`, not the signal variance. Returns the
/// noisy image, the realized SNR `10 log10(sum Y^2 / sum E^2)`, and the noise
/// standard deviation. Passing `f64::INFINITY` disables noise.
pub fn add_noise(
    y: &HyperspectralImage,
    snr_db: f64,
    seed: u64,
) -> Result<(HyperspectralImage, f64, f64)> {
    if snr_db == f64::INFINITY {
        return Ok((y.clone(), f64::INFINITY, 0.0));
    }
    if !snr_db.is_finite() {
        return Err(UnmixError::InvalidInput(format!("snr_db must be finite, got {snr_db}")));
    }
    let data = y.data();
    let count = data.len() as f64;
    let signal_power: f64 = data.iter().map(|v| v * v).sum::<f64>();
    let sigma = (signal_power / count / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noisy = data.clone();
    let mut noise_power = 0.0;
    for v in noisy.iter_mut() {
        let e: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
        noise_power += e * e;
        *v += e;
    }
    let realized = 10.0 * (signal_power / noise_power).log10();
    let (h, w) = y.grid();
    Ok((HyperspectralImage::new(noisy, h, w)?, realized, sigma))
}

/// Generates a full scene: abundances, endmembers, clean mixture, noise.
///
/// Sub-seeds are derived from `config.seed`: the abundance field uses the
/// seed itself, procedural endmembers use `seed + 1`, noise uses `seed + 2`.
pub fn make_scene(config: &SceneConfig) -> Result<SyntheticScene> {
    config.validate()?;
    let a_true = gaussian_field_abundances(
        config.height,
        config.width,
        config.endmembers,
        config.correlation_length,
        config.seed,
    )?;
    let s_true = match &config.endmember_source {
        EndmemberSource::Procedural => {
            procedural_endmembers(config.bands, config.endmembers, config.seed.wrapping_add(1))?
        }
        EndmemberSource::Csv { path, selection_seed } => {
            let s = load_endmembers_csv(std::path::Path::new(path), config.endmembers, *selection_seed)?;
            if s.bands() != config.bands {
                return Err(UnmixError::DimensionMismatch(format!(
                    "library provides {} bands but the scene requests {}",
                    s.bands(),
                    config.bands
                )));
            }
            s
        }
    };
    let y_clean = lmm_mix(&s_true, &a_true, (config.height, config.width))?;
    let (y_noisy, realized_snr_db, noise_sigma) = match config.snr_db {
        Some(snr) => {
            let (noisy, realized, sigma) = add_noise(&y_clean, snr, config.seed.wrapping_add(2))?;
            (noisy, Some(realized), Some(sigma))
        }
        None => (y_clean.clone(), None, None),
    };
    Ok(SyntheticScene {
        y_clean,
        y_noisy,
        a_true,
        s_true,
        config: config.clone(),
        realized_snr_db,
        noise_sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_endmember_field_is_all_ones() {
        let a = gaussian_field_abundances(5, 7, 1, 2.0, 3).unwrap();
        assert!(a.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn field_columns_are_simplex_points() {
        let a = gaussian_field_abundances(12, 9, 4, 3.0, 11).unwrap();
        for col in a.data().columns() {
            let sum: f64 = col.sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(col.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn field_generation_is_deterministic() {
        let a = gaussian_field_abundances(8, 8, 3, 2.5, 42).unwrap();
        let b = gaussian_field_abundances(8, 8, 3, 2.5, 42).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn field_autocorrelation_decays_with_lag() {
        // Sample autocorrelation of one channel at horizontal lag 1 vs lag 10.
        let a = gaussian_field_abundances(64, 64, 3, 5.0, 7).unwrap();
        let autocorr = |lag: usize| -> f64 {
            let w = 64;
            let chan = a.data().row(0);
            let n = chan.len() as f64;
            let mean = chan.sum() / n;
            let var: f64 = chan.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let mut acc = 0.0;
            let mut count = 0.0;
            for y in 0..64 {
                for x in 0..(w - lag) {
                    acc += (chan[y * w + x] - mean) * (chan[y * w + x + lag] - mean);
                    count += 1.0;
                }
            }
            acc / count / var
        };
        let r1 = autocorr(1);
        let r10 = autocorr(10);
        assert!(r1 > r10, "lag-1 autocorr {r1} should exceed lag-10 {r10}");
    }

    #[test]
    fn typical_max_abundance_is_mixed() {
        let a = gaussian_field_abundances(50, 50, 4, 5.0, 123).unwrap();
        let mut maxes: Vec<f64> = a
            .data()
            .columns()
            .into_iter()
            .map(|c| c.iter().cloned().fold(0.0, f64::max))
            .collect();
        maxes.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let median = maxes[maxes.len() / 2];
        assert!(
            (0.5..=0.9).contains(&median),
            "median per-pixel max abundance {median} outside the mixed-pixel band"
        );
    }

    #[test]
    fn procedural_endmembers_are_positive_and_separated() {
        let s = procedural_endmembers(60, 5, 9).unwrap();
        assert!(s.data().iter().all(|&v| v > 0.0));
        for i in 0..5 {
            for j in (i + 1)..5 {
                let a = s.data().column(i).to_vec();
                let b = s.data().column(j).to_vec();
                let angle = metrics::spectral_angle(&a, &b).unwrap();
                assert!(angle >= MIN_ENDMEMBER_ANGLE, "columns {i},{j} angle {angle}");
            }
        }
    }

    #[test]
    fn procedural_endmembers_deterministic() {
        let a = procedural_endmembers(40, 3, 5).unwrap();
        let b = procedural_endmembers(40, 3, 5).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn procedural_rejects_tiny_band_count() {
        assert!(procedural_endmembers(3, 2, 1).is_err());
    }

    #[test]
    fn procedural_reports_angular_saturation() {
        // Four bands cannot host 20 mutually separated smooth positive
        // spectra under rejection sampling; the generator must give up with
        // a hint rather than loop forever.
        let err = procedural_endmembers(4, 20, 123).unwrap_err();
        assert!(err.to_string().contains("fewer endmembers"), "{err}");
    }

    #[test]
    fn csv_loading_selects_seeded_distinct_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lib.csv");
        std::fs::write(&path, "alpha,beta,gamma\n0.1,0.5,0.9\n0.2,0.4,0.8\n-0.1,0.3,0.7\n").unwrap();
        let s = load_endmembers_csv(&path, 3, 7).unwrap();
        assert_eq!(s.data().dim(), (3, 3));
        // Negative readings clamp to zero.
        assert!(s.data().iter().all(|&v| v >= 0.0));
        let again = load_endmembers_csv(&path, 3, 7).unwrap();
        assert_eq!(s.data(), again.data());
        // All three columns present in some order.
        let mut firsts: Vec<f64> = (0..3).map(|c| s.data()[[0, c]]).collect();
        firsts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(firsts, vec![0.1, 0.5, 0.9]);
    }

    #[test]
    fn csv_loading_rejects_too_few_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lib.csv");
        std::fs::write(&path, "a,b\n0.1,0.2\n").unwrap();
        assert!(load_endmembers_csv(&path, 3, 0).is_err());
    }

    #[test]
    fn csv_loading_rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lib.csv");
        std::fs::write(&path, "a,b,c\n0.1,0.2,0.3\n0.4,0.5\n").unwrap();
        match load_endmembers_csv(&path, 2, 0) {
            Err(UnmixError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_loading_reports_bad_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lib.csv");
        std::fs::write(&path, "a,b\n0.1,0.2\n0.3,oops\n").unwrap();
        match load_endmembers_csv(&path, 2, 0) {
            Err(UnmixError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn noise_disabled_by_infinite_snr() {
        let y = HyperspectralImage::new(Array2::from_elem((3, 4), 0.5), 2, 2).unwrap();
        let (noisy, realized, sigma) = add_noise(&y, f64::INFINITY, 1).unwrap();
        assert_eq!(noisy.data(), y.data());
        assert_eq!(realized, f64::INFINITY);
        assert_eq!(sigma, 0.0);
    }

    #[test]
    fn noise_is_deterministic() {
        let y = HyperspectralImage::new(Array2::from_elem((5, 16), 0.3), 4, 4).unwrap();
        let (a, ra, _) = add_noise(&y, 20.0, 77).unwrap();
        let (b, rb, _) = add_noise(&y, 20.0, 77).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(ra, rb);
    }

    #[test]
    fn scene_is_consistent_and_exactly_mixed() {
        let config = SceneConfig {
            height: 20,
            width: 20,
            endmembers: 3,
            bands: 30,
            correlation_length: 3.0,
            snr_db: Some(20.0),
            seed: 4,
            endmember_source: EndmemberSource::Procedural,
        };
        let scene = make_scene(&config).unwrap();
        let remixed = lmm_mix(&scene.s_true, &scene.a_true, (20, 20)).unwrap();
        assert_eq!(scene.y_clean.data(), remixed.data());
        assert_eq!(metrics::rmse(&scene.a_true, &scene.a_true).unwrap(), 0.0);
        assert!(metrics::msad(&scene.s_true, &scene.s_true).unwrap() < 1e-12);
    }

    #[test]
    fn realized_snr_close_to_target_at_scale() {
        let config = SceneConfig {
            height: 100,
            width: 100,
            endmembers: 4,
            bands: 50,
            correlation_length: 5.0,
            snr_db: Some(20.0),
            seed: 10,
            endmember_source: EndmemberSource::Procedural,
        };
        let scene = make_scene(&config).unwrap();
        let realized = scene.realized_snr_db.unwrap();
        assert!(
            (realized - 20.0).abs() < 0.1,
            "realized SNR {realized} dB too far from 20 dB"
        );
    }
}
