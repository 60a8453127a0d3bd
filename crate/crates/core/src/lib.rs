//! Prediction of noisy dynamical time series from delay coordinates.
//!
//! Three predictors are provided: ε-SVR and kernel ridge regression on delay
//! vectors of the noisy samples, and a two-stage method that first denoises
//! the samples with a cross-validated cubic smoothing spline and then fits
//! kernel ridge regression on delay vectors of the smoothed signal.
//!
//! ```no_run
//! use splinekrr::predictor::{evaluate, fit_predictor, EvalMode, Method, PredictorSpec};
//! use splinekrr::signal::{add_noise, generate_mackey_glass, NoiseSpec};
//!
//! let clean = generate_mackey_glass(0.1, 40_000, 1000.0)?.downsample(10)?;
//! let train = clean.segment(0, 1031)?;
//! let test = clean.segment(1100, 1031)?;
//! let noisy = add_noise(&train, NoiseSpec::new(0.2, 7)?)?;
//! let spec = PredictorSpec::new(Method::SplineKrr, 6.0, 6, 1.0);
//! let fitted = fit_predictor(&noisy, &spec)?;
//! println!("rms = {}", evaluate(&fitted, &test, EvalMode::Direct)?);
//! # Ok::<(), splinekrr::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod embedding;
pub mod error;
pub mod kernel;
mod linalg;
pub mod predictor;
pub mod selection;
pub mod signal;
pub mod spline;

pub use error::{Error, Result};
pub use linalg::Cholesky;
