//! Reconstruction of images from multilook, speckle-corrupted, undersampled coherent
//! measurements.
//!
//! The estimator is projected gradient descent on the multilook negative
//! log-likelihood. Each projection fits small untrained convolutional decoders to
//! non-overlapping patches at several scales and averages the reassembled images. The
//! inverse covariance needed by the gradient is carried from one iteration to the next
//! with a single Newton-Schulz step and only recomputed exactly after large moves.
//!
//! Module map:
//!
//! * [`linalg`]: dense real matrices, complex matrices as `U + iV` planes, exact and
//!   Newton-Schulz inversion.
//! * [`measurement`]: sensing ensembles, look generation, initialization.
//! * [`likelihood`]: `f_L`, its gradients, covariance/inverse upkeep.
//! * [`decoder`]: the untrained decoder, hand-written backward pass, Adam fitting.
//! * [`bagging`]: multi-scale patch projection.
//! * [`pgd`]: the outer reconstruction loop.
//! * [`theory`]: MSE scaling sweeps and matrix lemma checks on the real model.
//! * [`checks`], [`bench`]: gradient oracles, warm-start calibration, inversion timing.
//! * [`metrics`], [`io`], [`cli`]: PSNR/SSIM, file formats, command line.
//! * [`rng`], [`error`]: seeded stream derivation and the error type.

pub mod bagging;
pub mod bench;
pub mod checks;
pub mod cli;
pub mod decoder;
pub mod error;
pub mod io;
pub mod linalg;
pub mod likelihood;
pub mod measurement;
pub mod metrics;
pub mod pgd;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
