//! End-to-end predictors for noisy scalar signals and their evaluation
//! against the noise-free signal.
//!
//! * `svr_noisy`: ε-SVR on delay vectors of the noisy samples.
//! * `krr_noisy`: kernel ridge regression on delay vectors of the noisy samples.
//! * `spline_krr`: smooth the noisy samples with a cross-validated cubic
//!   smoothing spline, then kernel ridge regression on delay vectors of the
//!   smoothed signal.

use std::fmt;
use std::str::FromStr;

use crate::embedding::{steps_of, DelayDataset};
use crate::error::{Error, Result};
use crate::kernel::{fit_krr, fit_svr_with, KernelModel, LossKind};
use crate::selection::{cross_validate_with, CvGrid, CvOptions, CvOutcome};
use crate::signal::SampledSignal;
use crate::spline::{self, default_lambda_grid, select_lambda_cv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    SvrNoisy,
    KrrNoisy,
    SplineKrr,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::SvrNoisy, Method::KrrNoisy, Method::SplineKrr];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::SvrNoisy => "svr_noisy",
            Method::KrrNoisy => "krr_noisy",
            Method::SplineKrr => "spline_krr",
        }
    }

    pub fn loss(&self) -> LossKind {
        match self {
            Method::SvrNoisy => LossKind::EpsilonInsensitive,
            Method::KrrNoisy | Method::SplineKrr => LossKind::Squared,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorSpec {
    pub method: Method,
    pub tau: f64,
    pub dim: usize,
    pub lookahead: f64,
    pub cv_grid: CvGrid,
    /// Folds for the spline's λ selection (`spline_krr` only).
    pub spline_folds: usize,
    /// Candidate spline λ values; `None` uses [`default_lambda_grid`].
    pub spline_grid: Option<Vec<f64>>,
    pub cv_options: CvOptions,
}

impl PredictorSpec {
    pub fn new(method: Method, tau: f64, dim: usize, lookahead: f64) -> Self {
        Self {
            method,
            tau,
            dim,
            lookahead,
            cv_grid: CvGrid::default(),
            spline_folds: 5,
            spline_grid: None,
            cv_options: CvOptions::default(),
        }
    }

    pub fn with_lookahead(&self, lookahead: f64) -> Self {
        Self { lookahead, ..self.clone() }
    }
}

/// Hyperparameters chosen during fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selected {
    pub gamma_over_2d: f64,
    pub gamma: f64,
    pub lambda_reg: f64,
    pub epsilon: Option<f64>,
    pub spline_lambda: Option<f64>,
    pub cv_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedPredictor {
    pub spec: PredictorSpec,
    pub kernel_model: KernelModel,
    pub selected: Selected,
    pub cv: CvOutcome,
    /// Fitted smoothing spline (`spline_krr` only).
    pub spline: Option<spline::SplineModel>,
    /// Time span `[first, last]` of the samples used for training.
    pub training_span: (f64, f64),
}

/// Embeds the (possibly smoothed) signal, selects kernel hyperparameters by
/// cross-validation and refits on every row.
pub fn fit_predictor(noisy: &SampledSignal, spec: &PredictorSpec) -> Result<FittedPredictor> {
    if spec.dim == 0 {
        return Err(Error::InvalidParameter("embedding dimension must be >= 1".into()));
    }
    steps_of("tau", spec.tau, noisy.h())?;
    steps_of("lookahead", spec.lookahead, noisy.h())?;

    let (data, spline_model) = match spec.method {
        Method::SvrNoisy | Method::KrrNoisy => (DelayDataset::build(noisy, spec.tau, spec.dim, spec.lookahead)?, None),
        Method::SplineKrr => {
            let times = noisy.times();
            let grid = spec.spline_grid.clone().unwrap_or_else(|| default_lambda_grid(noisy.len()));
            let choice = select_lambda_cv(&times, noisy.values(), &grid, spec.spline_folds)?;
            let model = spline::fit(&times, noisy.values(), choice.best_lambda)?;
            let data = DelayDataset::build_from_spline(
                &model,
                noisy.t0(),
                noisy.h(),
                noisy.len(),
                spec.tau,
                spec.dim,
                spec.lookahead,
            )?;
            (data, Some(model))
        }
    };

    let needed = spec.cv_grid.folds * spec.dim;
    if data.len() < needed {
        return Err(Error::InsufficientData(format!(
            "{} rows; need at least folds x dim = {needed}",
            data.len()
        )));
    }

    let loss = spec.method.loss();
    let cv = cross_validate_with(&data, &spec.cv_grid, loss, spec.cv_options)?;
    let best = &cv.best;
    let kernel_model = match loss {
        LossKind::Squared => fit_krr(&data, best.gamma, best.lambda_reg)?,
        LossKind::EpsilonInsensitive => {
            fit_svr_with(&data, best.gamma, best.lambda_reg, best.epsilon, spec.cv_options.svr)?
        }
    };
    let selected = Selected {
        gamma_over_2d: best.gamma_over_2d,
        gamma: best.gamma,
        lambda_reg: best.lambda_reg,
        epsilon: (loss == LossKind::EpsilonInsensitive).then_some(best.epsilon),
        spline_lambda: spline_model.as_ref().map(|m| m.lambda()),
        cv_score: best.mean_score,
    };
    Ok(FittedPredictor {
        spec: spec.clone(),
        kernel_model,
        selected,
        cv,
        spline: spline_model,
        training_span: (noisy.t0(), noisy.end_time()),
    })
}

impl FittedPredictor {
    pub fn predict_direct(&self, x: &[f64]) -> Result<f64> {
        self.kernel_model.predict(x)
    }

    /// Iterates this one-step predictor `k` times from `history`, whose samples
    /// are spaced by the predictor's lookahead (oldest first). Each step forms
    /// the delay vector from the rolling buffer with stride `τ / lookahead`
    /// and appends the prediction; the `k`-th appended value is returned.
    pub fn predict_iterated(&self, history: &[f64], k: usize) -> Result<f64> {
        let stride = steps_of("tau", self.spec.tau, self.spec.lookahead)?;
        let dim = self.spec.dim;
        let span = (dim - 1) * stride + 1;
        if history.len() < span {
            return Err(Error::InsufficientData(format!(
                "history of {} values; need {span}",
                history.len()
            )));
        }
        if k == 0 {
            return Err(Error::InvalidParameter("iteration count must be >= 1".into()));
        }
        let mut buf: Vec<f64> = history[history.len() - span..].to_vec();
        buf.reserve(k);
        let mut x = vec![0.0; dim];
        let mut last = f64::NAN;
        for _ in 0..k {
            let end = buf.len() - 1;
            for (m, slot) in x.iter_mut().enumerate() {
                *slot = buf[end - m * stride];
            }
            last = self.kernel_model.predict(&x)?;
            buf.push(last);
        }
        Ok(last)
    }

    fn check_disjoint(&self, clean: &SampledSignal) -> Result<()> {
        let (start, end) = self.training_span;
        let tol = 1e-9 * clean.h();
        if clean.end_time() >= start - tol && clean.t0() <= end + tol {
            return Err(Error::InvalidData(format!(
                "evaluation span [{}, {}] overlaps training span [{start}, {end}]",
                clean.t0(),
                clean.end_time()
            )));
        }
        Ok(())
    }
}

/// How the evaluation horizon is reached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalMode {
    /// One evaluation of the predictor; horizon is its own lookahead.
    Direct,
    /// Compose the (one-step) predictor `horizon / lookahead` times.
    Iterated { horizon: f64 },
}

/// Minimum number of evaluation rows.
pub const MIN_EVAL_ROWS: usize = 100;

/// Root-mean-square prediction error on a noise-free stretch that does not
/// overlap the training samples.
pub fn evaluate(p: &FittedPredictor, clean: &SampledSignal, mode: EvalMode) -> Result<f64> {
    p.check_disjoint(clean)?;
    let spec = &p.spec;
    let sq_err: Vec<f64> = match mode {
        EvalMode::Direct => {
            let data = DelayDataset::build(clean, spec.tau, spec.dim, spec.lookahead)?;
            check_rows(data.len())?;
            let pred = p.kernel_model.predict_batch(data.inputs())?;
            pred.iter().zip(data.targets()).map(|(f, y)| (f - y) * (f - y)).collect()
        }
        EvalMode::Iterated { horizon } => {
            let h = clean.h();
            let step = steps_of("lookahead", spec.lookahead, h)?;
            let n_tau = steps_of("tau", spec.tau, h)?;
            let n_horizon = steps_of("horizon", horizon, h)?;
            if n_horizon % step != 0 {
                return Err(Error::GridMismatch { what: "horizon", value: horizon, h: spec.lookahead });
            }
            let k = n_horizon / step;
            let stride = steps_of("tau", spec.tau, spec.lookahead)?;
            let span = (spec.dim - 1) * stride + 1;
            let first = (spec.dim - 1) * n_tau;
            let values = clean.values();
            if values.len() <= first + n_horizon {
                return Err(Error::InsufficientData("clean signal shorter than one evaluation window".into()));
            }
            let rows = values.len() - first - n_horizon;
            check_rows(rows)?;
            let mut out = Vec::with_capacity(rows);
            let mut history = vec![0.0; span];
            for i in first..first + rows {
                for (m, slot) in history.iter_mut().enumerate() {
                    *slot = values[i - (span - 1 - m) * step];
                }
                let f = p.predict_iterated(&history, k)?;
                let y = values[i + n_horizon];
                out.push((f - y) * (f - y));
            }
            out
        }
    };
    Ok((sq_err.iter().sum::<f64>() / sq_err.len() as f64).sqrt())
}

fn check_rows(rows: usize) -> Result<()> {
    if rows < MIN_EVAL_ROWS {
        return Err(Error::InsufficientData(format!(
            "{rows} evaluation rows; need at least {MIN_EVAL_ROWS}"
        )));
    }
    Ok(())
}
