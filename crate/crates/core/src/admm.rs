//! Outer solver: alternate autoencoder training, a denoiser-driven
//! fixed-point update of the auxiliary abundances, and dual ascent.
//!
//! One outer iteration runs
//!   1. `epochs` Adam steps on ||Y - S E(Y)||^2 + mu ||A - E(Y) - G||^2,
//!   2. J fixed-point sweeps A <- (lambda C(A) + mu (E + G)) / (lambda + mu),
//!   3. the dual update G <- G - A + E(Y).
//! The reported abundances are the encoder output (always simplex-feasible);
//! the auxiliary A is kept in the state and may drift slightly off-simplex,
//! which is recorded per iteration as the primal residual.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::denoise::{denoise, red_value, DenoiserSpec};
use crate::error::{Result, UnmixError};
use crate::hsi::{AbundanceMatrix, EndmemberMatrix, HyperspectralImage};
use crate::metrics;
use crate::nn::{
    encoder_forward, init_params, train_ae, AdamState, AeParams, EncoderSpec,
};

/// Solver configuration with the defaults used throughout: lambda = mu = 0.1
/// (the 20 dB noise setting; see [`default_lambda_mu`]), K = 15 outer
/// iterations, J = 1 inner sweep, 250 epochs per outer iteration, learning
/// rate 1e-3 with 1e-4 decoder fine-tuning, NLM denoiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    /// Endmember count R.
    #[serde(rename = "R")]
    pub endmembers: usize,
    /// RED regularization weight (>= 0).
    #[serde(default = "default_weight")]
    pub lambda: f64,
    /// ADMM penalty (> 0).
    #[serde(default = "default_weight")]
    pub mu: f64,
    /// Outer ADMM iterations.
    #[serde(rename = "K", default = "default_outer")]
    pub outer_iters: usize,
    /// Inner fixed-point iterations per outer step.
    #[serde(rename = "J", default = "default_inner")]
    pub inner_iters: usize,
    /// Training epochs per outer iteration.
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Encoder learning rate.
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Decoder (endmember) learning rate.
    #[serde(default = "default_lr_decoder")]
    pub lr_decoder: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "DenoiserSpec::nlm_default")]
    pub denoiser: DenoiserSpec,
    /// Hidden encoder widths; `None` selects 64 -> 32 -> 16 -> 2R.
    #[serde(default)]
    pub encoder_widths: Option<[usize; 4]>,
}

fn default_weight() -> f64 {
    0.1
}
fn default_outer() -> usize {
    15
}
fn default_inner() -> usize {
    1
}
fn default_epochs() -> usize {
    250
}
fn default_lr() -> f64 {
    1e-3
}
fn default_lr_decoder() -> f64 {
    1e-4
}

/// The noise-level schedule for the regularization weights: 0.5 up to 10 dB,
/// 0.1 around 20 dB, 0.01 from 30 dB up. Both lambda and mu use this value.
pub fn default_lambda_mu(snr_db: f64) -> f64 {
    if snr_db < 15.0 {
        0.5
    } else if snr_db < 25.0 {
        0.1
    } else {
        0.01
    }
}

impl AdmmConfig {
    pub fn new(endmembers: usize) -> Self {
        AdmmConfig {
            endmembers,
            lambda: default_weight(),
            mu: default_weight(),
            outer_iters: default_outer(),
            inner_iters: default_inner(),
            epochs: default_epochs(),
            lr: default_lr(),
            lr_decoder: default_lr_decoder(),
            seed: 0,
            denoiser: DenoiserSpec::nlm_default(),
            encoder_widths: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.endmembers == 0 {
            return Err(UnmixError::InvalidInput("R must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(UnmixError::InvalidInput(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(UnmixError::InvalidInput(format!("mu must be positive, got {}", self.mu)));
        }
        if self.outer_iters == 0 || self.inner_iters == 0 {
            return Err(UnmixError::InvalidInput("K and J must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(UnmixError::InvalidInput("epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr_decoder > 0.0) {
            return Err(UnmixError::InvalidInput("learning rates must be positive".into()));
        }
        self.denoiser.validate()
    }

    pub fn encoder_spec(&self, bands: usize) -> EncoderSpec {
        match self.encoder_widths {
            Some(hidden) => EncoderSpec::with_hidden_widths(bands, self.endmembers, hidden),
            None => EncoderSpec::desk_default(bands, self.endmembers),
        }
    }
}

/// Per-iteration diagnostics. `ae_loss` is the data-fit term
/// ||Y - S E(Y)||_F^2, so `ae_loss + lambda * red_value` reconstructs the
/// full objective; `primal_residual` is ||A - E(Y)||_F. Metric fields are
/// filled when ground truth is supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub ae_loss: f64,
    pub red_value: f64,
    pub primal_residual: f64,
    pub rmse: Option<f64>,
    pub msad: Option<f64>,
    pub msid: Option<f64>,
    pub psnr: Option<f64>,
}

/// Mutable solver state, returned alongside the estimates.
#[derive(Debug, Clone)]
pub struct AdmmState {
    /// Auxiliary abundance matrix A (may drift slightly off-simplex).
    pub aux_abundance: Array2<f64>,
    /// Scaled dual variable G.
    pub dual: Array2<f64>,
    pub params: AeParams,
    pub spec: EncoderSpec,
    /// Adam moments, persisted across outer iterations.
    pub adam: AdamState,
    /// Completed outer iterations.
    pub iteration: usize,
    pub history: Vec<IterationRecord>,
}

/// Reference data for per-iteration metric logging. Abundance and endmember
/// metrics need both `a_true` and `s_true` (alignment runs on the
/// endmembers); PSNR falls back to the observed image when `y_clean` is
/// absent, mirroring how real data is evaluated.
#[derive(Debug, Clone, Copy, Default)]
pub struct GroundTruth<'a> {
    pub a_true: Option<&'a AbundanceMatrix>,
    pub s_true: Option<&'a EndmemberMatrix>,
    pub y_clean: Option<&'a HyperspectralImage>,
}

/// J sweeps of the RED fixed-point recursion
/// A <- (lambda C(A) + mu (E + G)) / (lambda + mu), starting from `a`.
///
/// At lambda = 0 the recursion collapses to A = E + G after a single sweep
/// independent of A and of the denoiser, so the denoiser is never invoked.
pub fn update_abundance(
    a: &Array2<f64>,
    e_out: &Array2<f64>,
    g: &Array2<f64>,
    lambda: f64,
    mu: f64,
    inner_iters: usize,
    grid: (usize, usize),
    denoiser: &DenoiserSpec,
) -> Result<Array2<f64>> {
    if a.dim() != e_out.dim() || a.dim() != g.dim() {
        return Err(UnmixError::DimensionMismatch(format!(
            "abundance update shapes disagree: A {:?}, E {:?}, G {:?}",
            a.dim(),
            e_out.dim(),
            g.dim()
        )));
    }
    if !(lambda >= 0.0) || !(mu > 0.0) {
        return Err(UnmixError::InvalidInput(format!(
            "need lambda >= 0 and mu > 0, got lambda={lambda}, mu={mu}"
        )));
    }
    if inner_iters == 0 {
        return Err(UnmixError::InvalidInput("inner iteration count must be at least 1".into()));
    }
    if lambda == 0.0 {
        return Ok(e_out + g);
    }
    let scale = 1.0 / (lambda + mu);
    let anchor = e_out + g;
    let mut current = a.clone();
    for j in 0..inner_iters {
        let denoised = denoise(&current, grid, denoiser)?;
        current = scale * (lambda * &denoised + mu * &anchor);
        if !current.iter().all(|v| v.is_finite()) {
            return Err(UnmixError::Numeric(format!(
                "abundance update produced non-finite values at inner iteration {j}"
            )));
        }
    }
    Ok(current)
}

/// Dual ascent step G <- G - A + E(Y).
pub fn update_dual(
    g: &Array2<f64>,
    a: &Array2<f64>,
    e_out: &Array2<f64>,
) -> Result<Array2<f64>> {
    if g.dim() != a.dim() || g.dim() != e_out.dim() {
        return Err(UnmixError::DimensionMismatch(format!(
            "dual update shapes disagree: G {:?}, A {:?}, E {:?}",
            g.dim(),
            a.dim(),
            e_out.dim()
        )));
    }
    Ok(g - a + e_out)
}

fn frob_norm(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn record_iteration(
    k: usize,
    params: &AeParams,
    e: &AbundanceMatrix,
    aux: &Array2<f64>,
    y: &HyperspectralImage,
    grid: (usize, usize),
    lambda: f64,
    denoiser: &DenoiserSpec,
    truth: Option<&GroundTruth<'_>>,
) -> Result<IterationRecord> {
    let y_hat = params.decoder_s.dot(e.data());
    let ae_loss: f64 = (&y_hat - y.data()).iter().map(|v| v * v).sum();
    // The RED value is a diagnostic; with lambda = 0 it never enters the
    // objective, so skip the denoiser call entirely.
    let red = if lambda == 0.0 {
        0.0
    } else {
        red_value(aux, grid, denoiser)?
    };
    let primal = frob_norm(&(aux - e.data()));
    let mut rec = IterationRecord {
        k,
        ae_loss,
        red_value: red,
        primal_residual: primal,
        rmse: None,
        msad: None,
        msid: None,
        psnr: None,
    };
    let truth = truth.copied().unwrap_or_default();
    if let (Some(a_true), Some(s_true)) = (truth.a_true, truth.s_true) {
        let s_hat = EndmemberMatrix::new(params.decoder_s.clone())?;
        let perm = metrics::sad_permutation(s_true, &s_hat)?;
        let aligned = metrics::permute_abundance_rows(e, &perm)?;
        rec.rmse = Some(metrics::rmse(a_true, &aligned)?);
        rec.msad = Some(metrics::msad(s_true, &s_hat)?);
        rec.msid = Some(metrics::msid(s_true, &s_hat)?);
    }
    let reference = truth.y_clean.unwrap_or(y);
    let y_hat_img = HyperspectralImage::new(y_hat, grid.0, grid.1)?;
    rec.psnr = Some(metrics::psnr(reference, &y_hat_img)?);
    Ok(rec)
}

/// Runs the full solver on an observed image.
///
/// Starts from `init` (or a fresh seeded initialization), sets A to the
/// initial encoder output and G to zero, then alternates training, the
/// fixed-point abundance update, and the dual step for `outer_iters`
/// rounds. Returns the final encoder output (simplex-feasible), the decoder
/// endmembers, and the full state with per-iteration history. On failure the
/// history gathered so far rides along in the error.
pub fn run_ae_red(
    y: &HyperspectralImage,
    config: &AdmmConfig,
    init: Option<AeParams>,
    truth: Option<&GroundTruth<'_>>,
) -> Result<(AbundanceMatrix, EndmemberMatrix, AdmmState)> {
    config.validate()?;
    let grid = y.grid();
    let spec = config.encoder_spec(y.bands());
    let mut params = match init {
        Some(p) => {
            p.congruent_with(&spec)?;
            p
        }
        None => init_params(&spec, y, config.endmembers, config.seed)?,
    };
    let mut adam = AdamState::new(&params);
    let e0 = encoder_forward(&params, &spec, y)?;
    let mut aux = e0.data().clone();
    let mut dual = Array2::<f64>::zeros(aux.raw_dim());
    let mut history: Vec<IterationRecord> = Vec::with_capacity(config.outer_iters);

    let fail = |k: usize, history: &[IterationRecord], message: String| UnmixError::RunFailed {
        iteration: k,
        message,
        history: history.to_vec(),
    };

    let mut encoder_out = e0;
    for k in 1..=config.outer_iters {
        train_ae(
            &mut params,
            &mut adam,
            &spec,
            y,
            &aux,
            &dual,
            config.mu,
            config.epochs,
            config.lr,
            config.lr_decoder,
        )
        .map_err(|e| fail(k, &history, e.to_string()))?;
        encoder_out =
            encoder_forward(&params, &spec, y).map_err(|e| fail(k, &history, e.to_string()))?;
        aux = update_abundance(
            &aux,
            encoder_out.data(),
            &dual,
            config.lambda,
            config.mu,
            config.inner_iters,
            grid,
            &config.denoiser,
        )
        .map_err(|e| fail(k, &history, e.to_string()))?;
        dual = update_dual(&dual, &aux, encoder_out.data())
            .map_err(|e| fail(k, &history, e.to_string()))?;
        let record = record_iteration(
            k,
            &params,
            &encoder_out,
            &aux,
            y,
            grid,
            config.lambda,
            &config.denoiser,
            truth,
        )
        .map_err(|e| fail(k, &history, e.to_string()))?;
        history.push(record);
    }

    let endmembers = EndmemberMatrix::new(params.decoder_s.clone())
        .map_err(|e| fail(config.outer_iters, &history, e.to_string()))?;
    let state = AdmmState {
        aux_abundance: aux,
        dual,
        params,
        spec,
        adam,
        iteration: config.outer_iters,
        history,
    };
    Ok((encoder_out, endmembers, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn lambda_zero_collapses_to_anchor() {
        let a = array![[9.0, -3.0], [2.0, 2.0]];
        let e = array![[0.5, 0.25], [0.5, 0.75]];
        let g = array![[0.1, -0.1], [0.0, 0.2]];
        // J is irrelevant at lambda = 0; the denoiser must never run, which
        // the NLM spec would reject on this 1x2 grid anyway.
        let out = update_abundance(&a, &e, &g, 0.0, 0.7, 5, (1, 2), &DenoiserSpec::nlm_default())
            .unwrap();
        assert_eq!(out, &e + &g);
    }

    #[test]
    fn identity_denoiser_single_sweep_matches_algebra() {
        let a0 = array![[0.9, 0.1], [0.1, 0.9]];
        let e = array![[0.6, 0.4], [0.4, 0.6]];
        let g = array![[0.05, 0.0], [-0.05, 0.0]];
        let (lambda, mu) = (0.3, 0.7);
        let out =
            update_abundance(&a0, &e, &g, lambda, mu, 1, (1, 2), &DenoiserSpec::Identity).unwrap();
        let expected = (lambda * &a0 + mu * (&e + &g)) / (lambda + mu);
        for (x, y) in out.iter().zip(expected.iter()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_denoiser_converges_to_anchor() {
        let a0 = array![[5.0, -5.0]];
        let e = array![[0.5, 0.5]];
        let g = array![[0.25, -0.25]];
        let out = update_abundance(&a0, &e, &g, 1.0, 1.0, 300, (1, 2), &DenoiserSpec::Identity)
            .unwrap();
        // Fixed point of the identity-denoiser recursion is E + G.
        let anchor = &e + &g;
        for (x, y) in out.iter().zip(anchor.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dual_update_accumulates_linearly() {
        let close = |m: &Array2<f64>, want: [f64; 2]| {
            assert!((m[[0, 0]] - want[0]).abs() < 1e-12, "{m:?} vs {want:?}");
            assert!((m[[0, 1]] - want[1]).abs() < 1e-12, "{m:?} vs {want:?}");
        };
        let g = array![[0.0, 0.0]];
        let e = array![[0.5, 0.5]];
        let a = array![[0.7, 0.3]];
        let g1 = update_dual(&g, &a, &e).unwrap();
        close(&g1, [-0.2, 0.2]);
        let g2 = update_dual(&g1, &a, &e).unwrap();
        close(&g2, [-0.4, 0.4]);
        // A equal to E leaves the dual unchanged.
        let same = update_dual(&g2, &e, &e).unwrap();
        assert_eq!(same, g2);
    }

    #[test]
    fn abundance_update_reports_non_finite_with_inner_index() {
        let a = array![[1.0e308, 1.0e308]];
        let e = array![[0.5, 0.5]];
        let g = array![[0.0, 0.0]];
        let err = update_abundance(&a, &e, &g, 3.0, 1.0, 4, (1, 2), &DenoiserSpec::Identity)
            .unwrap_err();
        assert!(err.to_string().contains("inner iteration"), "{err}");
    }

    #[test]
    fn config_validation_catches_bad_values() {
        let mut c = AdmmConfig::new(3);
        c.mu = 0.0;
        assert!(c.validate().is_err());
        let mut c = AdmmConfig::new(3);
        c.lambda = -0.5;
        assert!(c.validate().is_err());
        let mut c = AdmmConfig::new(3);
        c.outer_iters = 0;
        assert!(c.validate().is_err());
        assert!(AdmmConfig::new(0).validate().is_err());
    }

    #[test]
    fn lambda_mu_schedule_matches_noise_levels() {
        assert_eq!(default_lambda_mu(5.0), 0.5);
        assert_eq!(default_lambda_mu(10.0), 0.5);
        assert_eq!(default_lambda_mu(20.0), 0.1);
        assert_eq!(default_lambda_mu(30.0), 0.01);
    }
}
