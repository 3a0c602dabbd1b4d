//! Minimal dense/convolutional network machinery for the unmixing
//! autoencoder: forward pass, reverse-mode gradients, Adam, and the
//! constraint-respecting training loop.
//!
//! The encoder is five convolution blocks over the whole image (two 3x3, then
//! three 1x1), LeakyReLU activations except for a channelwise softmax on the
//! final block, which makes every output column a simplex point by
//! construction. The decoder is a single linear map whose weight matrix is
//! the endmember matrix, kept nonnegative by projection after every
//! optimizer step.

mod adam;
mod conv;

pub use adam::{adam_step, AdamState};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, UnmixError};
use crate::hsi::{lmm_mix, AbundanceMatrix, EndmemberMatrix, HyperspectralImage};
use conv::{col2im, im2col};

/// Kernel sizes of the five encoder blocks.
pub const ENCODER_KERNELS: [usize; 5] = [3, 3, 1, 1, 1];

/// Negative-side slope of the LeakyReLU activations.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Structural description of the encoder: input band count and the output
/// channel width of each block. The final width is the endmember count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderSpec {
    pub in_bands: usize,
    pub widths: [usize; 5],
}

impl EncoderSpec {
    /// Desk-scale defaults: B -> 64 -> 32 -> 16 -> 2R -> R.
    pub fn desk_default(bands: usize, endmembers: usize) -> Self {
        EncoderSpec {
            in_bands: bands,
            widths: [64, 32, 16, 2 * endmembers, endmembers],
        }
    }

    /// Spec with custom hidden widths; the final block stays at `endmembers`.
    pub fn with_hidden_widths(bands: usize, endmembers: usize, hidden: [usize; 4]) -> Self {
        EncoderSpec {
            in_bands: bands,
            widths: [hidden[0], hidden[1], hidden[2], hidden[3], endmembers],
        }
    }

    /// Endmember count R produced by the final softmax block.
    pub fn output_channels(&self) -> usize {
        self.widths[4]
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_bands == 0 || self.widths.iter().any(|&w| w == 0) {
            return Err(UnmixError::InvalidInput(
                "encoder band count and block widths must be positive".into(),
            ));
        }
        Ok(())
    }

    fn in_channels(&self, block: usize) -> usize {
        if block == 0 {
            self.in_bands
        } else {
            self.widths[block - 1]
        }
    }
}

/// One convolution block: weights are stored as a
/// (out_channels, in_channels * k * k) matrix plus a per-channel bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub kernel: usize,
}

impl ConvBlock {
    pub fn out_channels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn in_channels(&self) -> usize {
        self.weights.ncols() / (self.kernel * self.kernel)
    }
}

/// All trainable parameters: the encoder blocks and the decoder weight
/// matrix, which is the B x R endmember matrix itself.
#[derive(Debug, Clone, PartialEq)]
pub struct AeParams {
    pub encoder: Vec<ConvBlock>,
    pub decoder_s: Array2<f64>,
}

/// A weight/bias tensor pair congruent to one encoder block; used for
/// gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBlock {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradient blocks congruent to [`AeParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct AeGrads {
    pub encoder: Vec<TensorBlock>,
    pub decoder_s: Array2<f64>,
}

impl AeParams {
    /// Verifies the parameter shapes agree with `spec`.
    pub fn congruent_with(&self, spec: &EncoderSpec) -> Result<()> {
        spec.validate()?;
        if self.encoder.len() != 5 {
            return Err(UnmixError::DimensionMismatch(format!(
                "encoder has {} blocks, expected 5",
                self.encoder.len()
            )));
        }
        for (i, block) in self.encoder.iter().enumerate() {
            let k = ENCODER_KERNELS[i];
            let (c_out, c_in) = (spec.widths[i], spec.in_channels(i));
            if block.kernel != k
                || block.weights.dim() != (c_out, c_in * k * k)
                || block.bias.len() != c_out
            {
                return Err(UnmixError::DimensionMismatch(format!(
                    "encoder block {i} has shape {:?} (kernel {}), expected ({}, {}) with kernel {k}",
                    block.weights.dim(),
                    block.kernel,
                    c_out,
                    c_in * k * k
                )));
            }
        }
        if self.decoder_s.dim() != (spec.in_bands, spec.output_channels()) {
            return Err(UnmixError::DimensionMismatch(format!(
                "decoder_s has shape {:?}, expected ({}, {})",
                self.decoder_s.dim(),
                spec.in_bands,
                spec.output_channels()
            )));
        }
        Ok(())
    }

    /// Endmember count produced by this parameter set.
    pub fn endmembers(&self) -> usize {
        self.decoder_s.ncols()
    }
}

fn leaky(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        LEAKY_SLOPE * v
    }
}

fn leaky_grad(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Channelwise softmax over an R x N pre-activation.
fn softmax_columns(z: &Array2<f64>) -> Array2<f64> {
    let (r, n) = z.dim();
    let mut out = Array2::<f64>::zeros((r, n));
    for col in 0..n {
        let mut max = f64::NEG_INFINITY;
        for row in 0..r {
            max = max.max(z[[row, col]]);
        }
        let mut denom = 0.0;
        for row in 0..r {
            let e = (z[[row, col]] - max).exp();
            out[[row, col]] = e;
            denom += e;
        }
        for row in 0..r {
            out[[row, col]] /= denom;
        }
    }
    out
}

/// Backward through the channelwise softmax: given outputs `e` and upstream
/// gradient `de`, returns the pre-activation gradient.
fn softmax_backward(e: &Array2<f64>, de: &Array2<f64>) -> Array2<f64> {
    let (r, n) = e.dim();
    let mut dz = Array2::<f64>::zeros((r, n));
    for col in 0..n {
        let mut dot = 0.0;
        for row in 0..r {
            dot += de[[row, col]] * e[[row, col]];
        }
        for row in 0..r {
            dz[[row, col]] = e[[row, col]] * (de[[row, col]] - dot);
        }
    }
    dz
}

fn add_bias(z: &mut Array2<f64>, bias: &Array1<f64>) {
    for (mut row, &b) in z.rows_mut().into_iter().zip(bias.iter()) {
        row.mapv_inplace(|v| v + b);
    }
}

/// Everything the backward pass needs from a forward evaluation.
struct ForwardPass {
    /// Pre-activations z_i of every block.
    preacts: Vec<Array2<f64>>,
    /// Post-activation outputs a_i of blocks 0..4 (block 4's output is `e`).
    acts: Vec<Array2<f64>>,
    /// im2col expansion of block 1's input (block 0's uses the shared image
    /// expansion passed in by the caller).
    cols1: Array2<f64>,
    /// Softmax output: the R x N latent abundances.
    e: Array2<f64>,
}

/// Forward pass with caching. `y_cols` is the im2col expansion of the input
/// image for block 0; it never changes during training, so callers compute it
/// once.
fn forward_cached(params: &AeParams, y_cols: &Array2<f64>, grid: (usize, usize)) -> ForwardPass {
    let mut preacts = Vec::with_capacity(5);
    let mut acts = Vec::with_capacity(4);

    // Block 0 (3x3).
    let mut z0 = params.encoder[0].weights.dot(y_cols);
    add_bias(&mut z0, &params.encoder[0].bias);
    let a0 = z0.mapv(leaky);
    preacts.push(z0);

    // Block 1 (3x3).
    let cols1 = im2col(&a0, grid, 3);
    acts.push(a0);
    let mut z1 = params.encoder[1].weights.dot(&cols1);
    add_bias(&mut z1, &params.encoder[1].bias);
    let a1 = z1.mapv(leaky);
    preacts.push(z1);
    acts.push(a1);

    // Blocks 2..4 (1x1).
    for i in 2..5 {
        let mut z = params.encoder[i].weights.dot(acts.last().expect("previous activation"));
        add_bias(&mut z, &params.encoder[i].bias);
        if i < 4 {
            let a = z.mapv(leaky);
            preacts.push(z);
            acts.push(a);
        } else {
            let e = softmax_columns(&z);
            preacts.push(z);
            return ForwardPass { preacts, acts, cols1, e };
        }
    }
    unreachable!("loop returns at block 4")
}

/// Backward pass: gradient of the loss with respect to every encoder block,
/// given the gradient `de` at the softmax output. Consumes the cache.
fn backward_cached(
    params: &AeParams,
    pass: &ForwardPass,
    y_cols: &Array2<f64>,
    grid: (usize, usize),
    de: &Array2<f64>,
) -> Vec<TensorBlock> {
    let mut grads: Vec<Option<TensorBlock>> = (0..5).map(|_| None).collect();

    // Softmax block.
    let dz4 = softmax_backward(&pass.e, de);
    grads[4] = Some(TensorBlock {
        weights: dz4.dot(&pass.acts[3].t()),
        bias: row_sums(&dz4),
    });
    let mut da = params.encoder[4].weights.t().dot(&dz4);

    // 1x1 blocks 3 and 2.
    for i in [3usize, 2] {
        let dz = &da * &pass.preacts[i].mapv(leaky_grad);
        grads[i] = Some(TensorBlock {
            weights: dz.dot(&pass.acts[i - 1].t()),
            bias: row_sums(&dz),
        });
        da = params.encoder[i].weights.t().dot(&dz);
    }

    // Block 1 (3x3).
    let dz1 = &da * &pass.preacts[1].mapv(leaky_grad);
    grads[1] = Some(TensorBlock {
        weights: dz1.dot(&pass.cols1.t()),
        bias: row_sums(&dz1),
    });
    let dcols1 = params.encoder[1].weights.t().dot(&dz1);
    let da0 = col2im(&dcols1, pass.acts[0].nrows(), grid, 3);

    // Block 0 (3x3); no input gradient needed.
    let dz0 = &da0 * &pass.preacts[0].mapv(leaky_grad);
    grads[0] = Some(TensorBlock {
        weights: dz0.dot(&y_cols.t()),
        bias: row_sums(&dz0),
    });

    grads.into_iter().map(|g| g.expect("all blocks filled")).collect()
}

fn row_sums(m: &Array2<f64>) -> Array1<f64> {
    let mut out = Array1::<f64>::zeros(m.nrows());
    for (i, row) in m.rows().into_iter().enumerate() {
        out[i] = row.sum();
    }
    out
}

fn check_training_inputs(
    params: &AeParams,
    spec: &EncoderSpec,
    y: &HyperspectralImage,
    a: &Array2<f64>,
    g: &Array2<f64>,
    mu: f64,
) -> Result<()> {
    params.congruent_with(spec)?;
    if y.bands() != spec.in_bands {
        return Err(UnmixError::DimensionMismatch(format!(
            "image has {} bands but the encoder expects {}",
            y.bands(),
            spec.in_bands
        )));
    }
    let shape = (spec.output_channels(), y.pixels());
    if a.dim() != shape || g.dim() != shape {
        return Err(UnmixError::DimensionMismatch(format!(
            "auxiliary matrices must be {shape:?}, got {:?} and {:?}",
            a.dim(),
            g.dim()
        )));
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(UnmixError::InvalidInput(format!("mu must be nonnegative, got {mu}")));
    }
    Ok(())
}

/// Runs the encoder over the whole image and returns the latent abundances.
/// The softmax head guarantees simplex-feasible columns.
pub fn encoder_forward(
    params: &AeParams,
    spec: &EncoderSpec,
    y: &HyperspectralImage,
) -> Result<AbundanceMatrix> {
    params.congruent_with(spec)?;
    if y.bands() != spec.in_bands {
        return Err(UnmixError::DimensionMismatch(format!(
            "image has {} bands but the encoder expects {}",
            y.bands(),
            spec.in_bands
        )));
    }
    let y_cols = im2col(y.data(), y.grid(), 3);
    let pass = forward_cached(params, &y_cols, y.grid());
    AbundanceMatrix::new(pass.e)
}

/// Decoder forward: mixes abundances with the endmember matrix. This is the
/// same code path as the linear mixing model.
pub fn decoder_forward(
    s: &EndmemberMatrix,
    a: &AbundanceMatrix,
    grid: (usize, usize),
) -> Result<HyperspectralImage> {
    lmm_mix(s, a, grid)
}

fn loss_terms(
    params: &AeParams,
    e: &Array2<f64>,
    y: &HyperspectralImage,
    a: &Array2<f64>,
    g: &Array2<f64>,
    mu: f64,
) -> (f64, Array2<f64>) {
    let resid = &params.decoder_s.dot(e) - y.data();
    let recon: f64 = resid.iter().map(|v| v * v).sum();
    let mut penalty = 0.0;
    for ((&ev, &av), &gv) in e.iter().zip(a.iter()).zip(g.iter()) {
        let d = av - ev - gv;
        penalty += d * d;
    }
    (recon + mu * penalty, resid)
}

/// Training objective: ||Y - S E(Y)||_F^2 + mu ||A - E(Y) - G||_F^2.
pub fn ae_loss(
    params: &AeParams,
    spec: &EncoderSpec,
    y: &HyperspectralImage,
    a: &Array2<f64>,
    g: &Array2<f64>,
    mu: f64,
) -> Result<f64> {
    check_training_inputs(params, spec, y, a, g, mu)?;
    let y_cols = im2col(y.data(), y.grid(), 3);
    let pass = forward_cached(params, &y_cols, y.grid());
    Ok(loss_terms(params, &pass.e, y, a, g, mu).0)
}

/// Loss value and exact gradients for every parameter block.
pub fn ae_loss_gradients(
    params: &AeParams,
    spec: &EncoderSpec,
    y: &HyperspectralImage,
    a: &Array2<f64>,
    g: &Array2<f64>,
    mu: f64,
) -> Result<(f64, AeGrads)> {
    check_training_inputs(params, spec, y, a, g, mu)?;
    let y_cols = im2col(y.data(), y.grid(), 3);
    Ok(loss_and_grads_cached(params, &y_cols, y, a, g, mu))
}

fn loss_and_grads_cached(
    params: &AeParams,
    y_cols: &Array2<f64>,
    y: &HyperspectralImage,
    a: &Array2<f64>,
    g: &Array2<f64>,
    mu: f64,
) -> (f64, AeGrads) {
    let grid = y.grid();
    let pass = forward_cached(params, y_cols, grid);
    let (loss, resid) = loss_terms(params, &pass.e, y, a, g, mu);

    // dL/dS = 2 (S E - Y) E^T; the mu-term does not touch S.
    let d_decoder = 2.0 * resid.dot(&pass.e.t());
    // dL/dE = 2 S^T (S E - Y) + 2 mu (E + G - A).
    let mut de = 2.0 * params.decoder_s.t().dot(&resid);
    for ((dv, (&ev, &av)), &gv) in de.iter_mut().zip(pass.e.iter().zip(a.iter())).zip(g.iter()) {
        *dv += 2.0 * mu * (ev + gv - av);
    }

    let encoder = backward_cached(params, &pass, y_cols, grid, &de);
    (loss, AeGrads { encoder, decoder_s: d_decoder })
}

/// Gradient of the reconstruction term with respect to the decoder weights
/// for a fixed latent matrix `e`: 2 (S e - Y) e^T. Used to drive
/// decoder-only (frozen encoder) training in tests and diagnostics.
pub fn decoder_residual_grad(
    s: &Array2<f64>,
    e: &Array2<f64>,
    y: &HyperspectralImage,
) -> Result<(f64, Array2<f64>)> {
    if s.ncols() != e.nrows() || s.nrows() != y.bands() || e.ncols() != y.pixels() {
        return Err(UnmixError::DimensionMismatch(format!(
            "decoder shapes disagree: S {:?}, E {:?}, Y {:?}",
            s.dim(),
            e.dim(),
            y.data().dim()
        )));
    }
    let resid = &s.dot(e) - y.data();
    let loss: f64 = resid.iter().map(|v| v * v).sum();
    Ok((loss, 2.0 * resid.dot(&e.t())))
}

/// Seeded parameter initialization.
///
/// Encoder kernels draw from a uniform He-style distribution scaled by
/// sqrt(6 / fan_in); biases start at zero. The decoder starts from R distinct
/// pixel spectra picked by a farthest-point sweep (first the pixel farthest
/// from the mean spectrum, then repeated max-min selection), clamped at zero.
pub fn init_params(
    spec: &EncoderSpec,
    y: &HyperspectralImage,
    endmembers: usize,
    seed: u64,
) -> Result<AeParams> {
    spec.validate()?;
    if spec.output_channels() != endmembers {
        return Err(UnmixError::DimensionMismatch(format!(
            "spec produces {} channels but {endmembers} endmembers were requested",
            spec.output_channels()
        )));
    }
    if y.bands() != spec.in_bands {
        return Err(UnmixError::DimensionMismatch(format!(
            "image has {} bands but the encoder expects {}",
            y.bands(),
            spec.in_bands
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut encoder = Vec::with_capacity(5);
    for i in 0..5 {
        let k = ENCODER_KERNELS[i];
        let c_in = spec.in_channels(i);
        let c_out = spec.widths[i];
        let fan_in = (c_in * k * k) as f64;
        let limit = (6.0 / fan_in).sqrt();
        let weights =
            Array2::from_shape_fn((c_out, c_in * k * k), |_| rng.random_range(-limit..limit));
        encoder.push(ConvBlock {
            weights,
            bias: Array1::zeros(c_out),
            kernel: k,
        });
    }
    let decoder_s = farthest_point_pixels(y, endmembers)?;
    Ok(AeParams { encoder, decoder_s })
}

/// Picks `count` distinct pixel spectra spread across the data cloud: first
/// the pixel farthest from the mean spectrum, then repeatedly the pixel
/// maximizing the distance to the nearest already-chosen one. Ties break on
/// the lowest pixel index. Selected spectra are clamped at zero.
fn farthest_point_pixels(y: &HyperspectralImage, count: usize) -> Result<Array2<f64>> {
    let data = y.data();
    let (bands, pixels) = data.dim();
    // Distinctness check on exact bit patterns.
    let mut seen = std::collections::HashSet::new();
    for col in data.columns() {
        let key: Vec<u64> = col.iter().map(|v| v.to_bits()).collect();
        seen.insert(key);
        if seen.len() >= count {
            break;
        }
    }
    if seen.len() < count {
        return Err(UnmixError::InvalidInput(format!(
            "image has only {} distinct pixels but {count} endmembers were requested",
            seen.len()
        )));
    }

    let dist2 = |i: usize, j: usize| -> f64 {
        let mut acc = 0.0;
        for b in 0..bands {
            let d = data[[b, i]] - data[[b, j]];
            acc += d * d;
        }
        acc
    };
    let mut mean = vec![0.0f64; bands];
    for col in data.columns() {
        for (m, &v) in mean.iter_mut().zip(col.iter()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= pixels as f64;
    }
    let mut first = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..pixels {
        let mut acc = 0.0;
        for b in 0..bands {
            let d = data[[b, i]] - mean[b];
            acc += d * d;
        }
        if acc > best {
            best = acc;
            first = i;
        }
    }
    let mut chosen = vec![first];
    let mut min_dist: Vec<f64> = (0..pixels).map(|i| dist2(i, first)).collect();
    while chosen.len() < count {
        let mut next = 0;
        let mut best = f64::NEG_INFINITY;
        for (i, &d) in min_dist.iter().enumerate() {
            if d > best {
                best = d;
                next = i;
            }
        }
        chosen.push(next);
        for (i, d) in min_dist.iter_mut().enumerate() {
            *d = d.min(dist2(i, next));
        }
    }
    let mut out = Array2::<f64>::zeros((bands, count));
    for (c, &pix) in chosen.iter().enumerate() {
        for b in 0..bands {
            out[[b, c]] = data[[b, pix]].max(0.0);
        }
    }
    Ok(out)
}

/// Trains the autoencoder for `epochs` full-batch Adam steps on the
/// objective of [`ae_loss`], mutating `params` and `adam` in place (warm
/// starts across outer iterations keep both). Returns the loss recorded
/// before each step.
#[allow(clippy::too_many_arguments)]
pub fn train_ae(
    params: &mut AeParams,
    adam: &mut AdamState,
    spec: &EncoderSpec,
    y: &HyperspectralImage,
    a: &Array2<f64>,
    g: &Array2<f64>,
    mu: f64,
    epochs: usize,
    lr: f64,
    lr_decoder: f64,
) -> Result<Vec<f64>> {
    if epochs == 0 {
        return Err(UnmixError::InvalidInput("epochs must be at least 1".into()));
    }
    check_training_inputs(params, spec, y, a, g, mu)?;
    let y_cols = im2col(y.data(), y.grid(), 3);
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let (loss, grads) = loss_and_grads_cached(params, &y_cols, y, a, g, mu);
        if !loss.is_finite() {
            return Err(UnmixError::Numeric(format!(
                "training loss became non-finite at epoch {epoch}"
            )));
        }
        adam_step(params, &grads, adam, lr, lr_decoder)?;
        losses.push(loss);
    }
    Ok(losses)
}
