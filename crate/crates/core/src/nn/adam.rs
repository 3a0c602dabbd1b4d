//! Bias-corrected Adam with nonnegativity projection on the decoder weights.

use ndarray::{Array1, Array2};

use super::{AeGrads, AeParams, TensorBlock};
use crate::error::{Result, UnmixError};

/// Optimizer state: first/second moment accumulators congruent to the
/// parameters, plus the step counter and hyperparameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub m: AeGrads,
    pub v: AeGrads,
}

impl AdamState {
    /// Zero-initialized state congruent to `params`, with the usual
    /// beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8.
    pub fn new(params: &AeParams) -> Self {
        let zeros = || AeGrads {
            encoder: params
                .encoder
                .iter()
                .map(|b| TensorBlock {
                    weights: Array2::zeros(b.weights.raw_dim()),
                    bias: Array1::zeros(b.bias.raw_dim()),
                })
                .collect(),
            decoder_s: Array2::zeros(params.decoder_s.raw_dim()),
        };
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

fn check_finite<'a>(name: &str, mut values: impl Iterator<Item = &'a f64>) -> Result<()> {
    if values.any(|v| !v.is_finite()) {
        return Err(UnmixError::Numeric(format!(
            "non-finite gradient in block {name}"
        )));
    }
    Ok(())
}

/// One Adam update. Encoder blocks step with `lr`, the decoder endmember
/// matrix with `lr_decoder`; after the update the decoder weights are clamped
/// elementwise at zero so the endmember nonnegativity constraint holds at
/// every observable point.
pub fn adam_step(
    params: &mut AeParams,
    grads: &AeGrads,
    state: &mut AdamState,
    lr: f64,
    lr_decoder: f64,
) -> Result<()> {
    if !(lr > 0.0 && lr_decoder > 0.0) {
        return Err(UnmixError::InvalidInput(format!(
            "learning rates must be positive, got lr={lr}, lr_decoder={lr_decoder}"
        )));
    }
    if grads.encoder.len() != params.encoder.len() {
        return Err(UnmixError::DimensionMismatch(
            "gradient block count does not match parameters".into(),
        ));
    }
    for (i, (p, g)) in params.encoder.iter().zip(grads.encoder.iter()).enumerate() {
        if p.weights.raw_dim() != g.weights.raw_dim() || p.bias.raw_dim() != g.bias.raw_dim() {
            return Err(UnmixError::DimensionMismatch(format!(
                "gradient shapes for encoder block {i} do not match parameters"
            )));
        }
        check_finite(&format!("encoder block {i} weights"), g.weights.iter())?;
        check_finite(&format!("encoder block {i} bias"), g.bias.iter())?;
    }
    if params.decoder_s.raw_dim() != grads.decoder_s.raw_dim() {
        return Err(UnmixError::DimensionMismatch(
            "decoder_s gradient shape does not match parameters".into(),
        ));
    }
    check_finite("decoder_s", grads.decoder_s.iter())?;

    state.step += 1;
    let bc1 = 1.0 - state.beta1.powi(state.step as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step as i32);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64, rate: f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= rate * m_hat / (v_hat.sqrt() + eps);
    };

    for ((p, g), (ms, vs)) in params
        .encoder
        .iter_mut()
        .zip(grads.encoder.iter())
        .zip(state.m.encoder.iter_mut().zip(state.v.encoder.iter_mut()))
    {
        for (((pw, &gw), mw), vw) in p
            .weights
            .iter_mut()
            .zip(g.weights.iter())
            .zip(ms.weights.iter_mut())
            .zip(vs.weights.iter_mut())
        {
            update(pw, gw, mw, vw, lr);
        }
        for (((pb, &gb), mb), vb) in p
            .bias
            .iter_mut()
            .zip(g.bias.iter())
            .zip(ms.bias.iter_mut())
            .zip(vs.bias.iter_mut())
        {
            update(pb, gb, mb, vb, lr);
        }
    }
    for (((pd, &gd), md), vd) in params
        .decoder_s
        .iter_mut()
        .zip(grads.decoder_s.iter())
        .zip(state.m.decoder_s.iter_mut())
        .zip(state.v.decoder_s.iter_mut())
    {
        update(pd, gd, md, vd, lr_decoder);
        if *pd < 0.0 {
            *pd = 0.0;
        }
    }
    Ok(())
}
