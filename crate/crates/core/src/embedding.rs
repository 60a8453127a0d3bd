//! Delay-coordinate datasets: rows `(u(t), u(t-τ), …, u(t-(D-1)τ))` with
//! targets `u(t + t_f)`.

use crate::error::{Error, Result};
use crate::signal::SampledSignal;
use crate::spline::SplineModel;

const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DelayDataset {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    times: Vec<f64>,
    tau: f64,
    dim: usize,
    lookahead: f64,
    h: f64,
}

/// Number of grid steps in `value`, which must be a positive integer multiple of `h`.
pub fn steps_of(what: &'static str, value: f64, h: f64) -> Result<usize> {
    let ratio = value / h;
    let rounded = ratio.round();
    if !ratio.is_finite() || rounded < 1.0 || (ratio - rounded).abs() > GRID_TOL * ratio.abs() {
        return Err(Error::GridMismatch { what, value, h });
    }
    Ok(rounded as usize)
}

/// Rows available from `len` samples: `len - (dim-1)·τ/h - t_f/h`, or 0.
pub fn row_count(len: usize, tau_steps: usize, dim: usize, lookahead_steps: usize) -> usize {
    len.saturating_sub((dim - 1) * tau_steps + lookahead_steps)
}

impl DelayDataset {
    /// Builds a dataset directly from sample values.
    pub fn build(signal: &SampledSignal, tau: f64, dim: usize, lookahead: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("embedding dimension must be >= 1".into()));
        }
        let h = signal.h();
        let n_tau = steps_of("tau", tau, h)?;
        let n_f = steps_of("lookahead", lookahead, h)?;
        let values = signal.values();
        let rows = row_count(values.len(), n_tau, dim, n_f);
        if rows == 0 {
            return Err(Error::InsufficientData(format!(
                "{} samples cannot hold a window of {} steps",
                values.len(),
                (dim - 1) * n_tau + n_f + 1
            )));
        }
        let first = (dim - 1) * n_tau;
        let mut inputs = Vec::with_capacity(rows * dim);
        let mut targets = Vec::with_capacity(rows);
        let mut times = Vec::with_capacity(rows);
        for i in first..first + rows {
            inputs.extend((0..dim).map(|k| values[i - k * n_tau]));
            targets.push(values[i + n_f]);
            times.push(signal.time(i));
        }
        Ok(Self { inputs, targets, times, tau, dim, lookahead, h })
    }

    /// Builds a dataset from spline values on the grid `t0 + j·h`, `j < n_points`.
    /// Grid points outside the spline's knot range are dropped, so neither
    /// inputs nor targets are extrapolated.
    pub fn build_from_spline(
        model: &SplineModel,
        t0: f64,
        h: f64,
        n_points: usize,
        tau: f64,
        dim: usize,
        lookahead: f64,
    ) -> Result<Self> {
        let signal = resample_within(model, t0, h, n_points)?;
        Self::build(&signal, tau, dim, lookahead)
    }

    /// Assembles a dataset from explicit rows.
    pub fn from_rows(rows: Vec<Vec<f64>>, targets: Vec<f64>, tau: f64, lookahead: f64, h: f64) -> Result<Self> {
        if rows.is_empty() || rows.len() != targets.len() {
            return Err(Error::InsufficientData("need matching non-empty rows and targets".into()));
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(Error::InvalidParameter("embedding dimension must be >= 1".into()));
        }
        let mut inputs = Vec::with_capacity(rows.len() * dim);
        for r in &rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
            inputs.extend_from_slice(r);
        }
        if inputs.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite entry".into()));
        }
        let times = (0..rows.len()).map(|i| i as f64 * h).collect();
        Ok(Self { inputs, targets, times, tau, dim, lookahead, h })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn lookahead(&self) -> f64 {
        self.lookahead
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.chunks_exact(self.dim)
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Time `t_i` of the leading coordinate of each row.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Rows selected by `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut inputs = Vec::with_capacity(indices.len() * self.dim);
        let mut targets = Vec::with_capacity(indices.len());
        let mut times = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
            times.push(self.times[i]);
        }
        Self { inputs, targets, times, ..self.clone_meta() }
    }

    fn clone_meta(&self) -> Self {
        Self {
            inputs: Vec::new(),
            targets: Vec::new(),
            times: Vec::new(),
            tau: self.tau,
            dim: self.dim,
            lookahead: self.lookahead,
            h: self.h,
        }
    }

    /// Delimited table: one column per lag, then the target.
    pub fn to_table(&self, delimiter: char) -> String {
        let d = delimiter.to_string();
        let mut header: Vec<String> = (0..self.dim).map(|k| format!("lag_{k}")).collect();
        header.push("target".into());
        let mut out = header.join(&d);
        out.push('\n');
        for (row, target) in self.rows().zip(&self.targets) {
            let cells: Vec<String> = row.iter().chain(std::iter::once(target)).map(|v| v.to_string()).collect();
            out.push_str(&cells.join(&d));
            out.push('\n');
        }
        out
    }
}

/// Spline values on `t0 + j·h`, keeping only grid points inside the knot range.
pub fn resample_within(model: &SplineModel, t0: f64, h: f64, n_points: usize) -> Result<SampledSignal> {
    let span = model.last_knot() - model.first_knot();
    let slack = GRID_TOL * span.max(h);
    let inside = |t: f64| t >= model.first_knot() - slack && t <= model.last_knot() + slack;
    let first = (0..n_points).find(|&j| inside(t0 + j as f64 * h));
    let Some(first) = first else {
        return Err(Error::InsufficientData("no grid point lies within the spline's knot range".into()));
    };
    let count = (first..n_points).take_while(|&j| inside(t0 + j as f64 * h)).count();
    let start = t0 + first as f64 * h;
    let values = (0..count).map(|j| model.evaluate(start + j as f64 * h)).collect();
    SampledSignal::new(start, h, values)
}
