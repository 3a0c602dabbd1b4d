//! Blind hyperspectral unmixing under the linear mixing model.
//!
//! The solver couples a convolutional autoencoder (whose decoder weights are
//! the endmember spectra) with a regularization-by-denoising prior on the
//! abundances, alternated in an ADMM splitting scheme. The crate also ships
//! the pieces needed to benchmark it at desk scale: a seeded synthetic scene
//! generator, an FCLS reference solver, evaluation metrics, and a small
//! binary matrix format (`fmx`) for persistence.

pub mod admm;
pub mod baselines;
pub mod denoise;
pub mod error;
pub mod fmx;
pub mod hsi;
pub mod metrics;
pub mod nn;
pub mod runio;
pub mod synth;

pub use error::{Result, UnmixError};
