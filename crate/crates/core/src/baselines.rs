//! Reference solvers: fully constrained least squares with known endmembers,
//! and the plain autoencoder (the lambda = 0 ablation with an equal training
//! budget).

use ndarray::Array2;

use crate::admm::{run_ae_red, AdmmConfig, AdmmState, GroundTruth};
use crate::error::{Result, UnmixError};
use crate::hsi::{project_simplex_columns, AbundanceMatrix, EndmemberMatrix, HyperspectralImage};

/// Power-iteration estimate of the largest eigenvalue of a symmetric
/// positive semidefinite matrix.
pub fn largest_eigenvalue(g: &Array2<f64>, iters: usize) -> f64 {
    let n = g.nrows();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut eig = 0.0;
    for _ in 0..iters {
        let mut gv = vec![0.0; n];
        for (i, gvi) in gv.iter_mut().enumerate() {
            for (j, &vj) in v.iter().enumerate() {
                *gvi += g[[i, j]] * vj;
            }
        }
        let norm = gv.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        eig = v.iter().zip(gv.iter()).map(|(a, b)| a * b).sum();
        for (vi, gvi) in v.iter_mut().zip(gv.iter()) {
            *vi = gvi / norm;
        }
    }
    eig
}

/// Fully constrained least squares: projected gradient descent on
/// ||Y - S A||_F^2 with a per-column simplex projection after every step.
///
/// The step defaults to 1/L, where L is the largest eigenvalue of S^T S
/// estimated by 50 power iterations; the recursion then descends
/// monotonically. Ten consecutive objective increases abort with an error
/// suggesting a smaller step.
pub fn fcls(
    y: &HyperspectralImage,
    s: &EndmemberMatrix,
    iters: usize,
    step: Option<f64>,
) -> Result<AbundanceMatrix> {
    if s.bands() != y.bands() {
        return Err(UnmixError::DimensionMismatch(format!(
            "endmembers have {} bands but the image has {}",
            s.bands(),
            y.bands()
        )));
    }
    if iters == 0 {
        return Err(UnmixError::InvalidInput("fcls needs at least one iteration".into()));
    }
    let r = s.count();
    let n = y.pixels();
    let gram = s.data().t().dot(s.data());
    let sty = s.data().t().dot(y.data());
    let step = match step {
        Some(v) if v > 0.0 && v.is_finite() => v,
        Some(v) => {
            return Err(UnmixError::InvalidInput(format!(
                "step must be positive and finite, got {v}"
            )))
        }
        None => {
            let l = largest_eigenvalue(&gram, 50);
            if l <= 0.0 {
                return Err(UnmixError::Numeric(
                    "could not estimate a positive Lipschitz constant for S^T S".into(),
                ));
            }
            1.0 / l
        }
    };

    let mut a = project_simplex_columns(&Array2::from_elem((r, n), 1.0 / r as f64))?;
    let mut last_loss = f64::INFINITY;
    let mut increases = 0;
    for _ in 0..iters {
        // Gradient of (1/2)||Y - S A||^2 is S^T S A - S^T Y.
        let grad = gram.dot(a.data()) - &sty;
        let candidate = a.data() - &(step * grad);
        a = project_simplex_columns(&candidate)?;
        let resid = s.data().dot(a.data()) - y.data();
        let loss: f64 = resid.iter().map(|v| v * v).sum();
        if loss > last_loss {
            increases += 1;
            if increases >= 10 {
                return Err(UnmixError::Numeric(format!(
                    "fcls objective increased 10 times in a row (now {loss:.6e}); try a smaller step"
                )));
            }
        } else {
            increases = 0;
        }
        last_loss = loss;
    }
    Ok(a)
}

/// Plain autoencoder ablation: the full solver with lambda = 0 and a single
/// outer iteration whose epoch budget equals `outer_iters * epochs` of the
/// configured run, so both methods consume the same number of training steps.
pub fn plain_ae(
    y: &HyperspectralImage,
    config: &AdmmConfig,
    truth: Option<&GroundTruth<'_>>,
) -> Result<(AbundanceMatrix, EndmemberMatrix, AdmmState)> {
    config.validate()?;
    let mut ablated = config.clone();
    ablated.lambda = 0.0;
    ablated.epochs = config.epochs.saturating_mul(config.outer_iters);
    ablated.outer_iters = 1;
    run_ae_red(y, &ablated, None, truth)
}
