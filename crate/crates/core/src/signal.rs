//! Noise-free Mackey-Glass and Lorenz signals, Gaussian observation noise
//! at a prescribed variance ratio, and basic sample statistics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// A uniformly sampled scalar signal: sample `j` sits at time `t0 + j * h`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    t0: f64,
    h: f64,
    values: Vec<f64>,
}

impl SampledSignal {
    pub fn new(t0: f64, h: f64, values: Vec<f64>) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidGrid(format!("step h must be positive, got {h}")));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidGrid(format!("start time must be finite, got {t0}")));
        }
        if values.is_empty() {
            return Err(Error::InsufficientData("signal has no samples".into()));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("sample {j} is not finite")));
        }
        Ok(Self { t0, h, values })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Time of sample `j`.
    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.h
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.time(j)).collect()
    }

    /// Time of the last sample.
    pub fn end_time(&self) -> f64 {
        self.time(self.len() - 1)
    }

    /// Keeps every `factor`-th sample, starting with the first.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidParameter("downsampling factor must be >= 1".into()));
        }
        let values = self.values.iter().step_by(factor).copied().collect();
        Self::new(self.t0, self.h * factor as f64, values)
    }

    /// Contiguous sub-signal of `len` samples starting at sample `start`.
    pub fn segment(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.len() {
            return Err(Error::InsufficientData(format!(
                "segment [{start}, {}) exceeds signal of length {}",
                start + len,
                self.len()
            )));
        }
        Self::new(self.time(start), self.h, self.values[start..start + len].to_vec())
    }

    /// Two-column `time value` table with `#`-prefixed header lines for `t0` and `h`.
    pub fn to_table(&self) -> String {
        let mut out = String::with_capacity(32 * self.len() + 64);
        out.push_str(&format!("# t0 = {}\n# h = {}\n# time value\n", self.t0, self.h));
        for (j, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{} {}\n", self.time(j), v));
        }
        out
    }

    /// Parses the format written by [`SampledSignal::to_table`].
    pub fn from_table(text: &str) -> Result<Self> {
        let mut t0 = None;
        let mut h = None;
        let mut values = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = idx + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                if let Some((key, val)) = header.split_once('=') {
                    let parsed = parse_f64(val.trim(), lineno)?;
                    match key.trim() {
                        "t0" => t0 = Some(parsed),
                        "h" => h = Some(parsed),
                        _ => {}
                    }
                }
                continue;
            }
            let mut cols = line.split_whitespace();
            let (Some(_time), Some(value), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::Parse {
                    line: lineno,
                    message: "expected two columns".into(),
                });
            };
            values.push(parse_f64(value, lineno)?);
        }
        let t0 = t0.ok_or(Error::Parse { line: 0, message: "missing '# t0 =' header".into() })?;
        let h = h.ok_or(Error::Parse { line: 0, message: "missing '# h =' header".into() })?;
        Self::new(t0, h, values)
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::Parse { line, message: format!("'{s}': {e}") })
}

/// Observation noise: i.i.d. zero-mean Gaussian with variance `snr * Var(signal)`.
///
/// Draws come from a ChaCha8 stream seeded with `seed`, mapped to normals by
/// the `rand_distr` ziggurat sampler, so sequences do not depend on platform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub snr: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(snr: f64, seed: u64) -> Result<Self> {
        if !(snr >= 0.0) || !snr.is_finite() {
            return Err(Error::InvalidParameter(format!("snr must be >= 0, got {snr}")));
        }
        Ok(Self { snr, seed })
    }

    /// Noise standard deviation for a signal of the given variance.
    pub fn sigma_for(&self, variance: f64) -> f64 {
        (self.snr * variance).sqrt()
    }
}

/// Adds Gaussian noise whose variance is `spec.snr` times the sample variance
/// of `signal`.
pub fn add_noise(signal: &SampledSignal, spec: NoiseSpec) -> Result<SampledSignal> {
    let spec = NoiseSpec::new(spec.snr, spec.seed)?;
    if spec.snr == 0.0 {
        return Ok(signal.clone());
    }
    let stats = signal_stats(signal);
    let sigma = spec.sigma_for(stats.variance);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let values = signal.values.iter().map(|v| v + normal.sample(&mut rng)).collect();
    SampledSignal::new(signal.t0, signal.h, values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalStats {
    pub mean: f64,
    /// Unbiased (n - 1) sample variance; zero for a single sample.
    pub variance: f64,
    pub std_dev: f64,
}

pub fn signal_stats(signal: &SampledSignal) -> SignalStats {
    sample_stats(signal.values())
}

pub(crate) fn sample_stats(values: &[f64]) -> SignalStats {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = if values.len() < 2 {
        0.0
    } else {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    };
    SignalStats { mean, variance, std_dev: variance.sqrt() }
}

fn steps_for(duration: f64, dt: f64) -> usize {
    (duration / dt).round() as usize
}

/// Mackey-Glass delay equation `x' = -b x(t) + a x(t - delay) / (1 + x(t - delay)^p)`
/// integrated by RK4 on a fixed step with a constant initial history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MackeyGlass {
    pub a: f64,
    pub b: f64,
    pub power: i32,
    pub delay: f64,
    /// Constant value of the history on `[-delay, 0]`.
    pub history: f64,
}

impl Default for MackeyGlass {
    fn default() -> Self {
        Self { a: 0.2, b: 0.1, power: 10, delay: 17.0, history: 1.2 }
    }
}

impl MackeyGlass {
    pub fn with_history(mut self, history: f64) -> Self {
        self.history = history;
        self
    }

    fn rhs(&self, x: f64, delayed: f64) -> f64 {
        -self.b * x + self.a * delayed / (1.0 + delayed.powi(self.power))
    }

    /// Integrates with step `dt`, drops `transient` time units, then returns
    /// `n_samples` samples spaced `dt` apart.
    pub fn generate(&self, dt: f64, n_samples: usize, transient: f64) -> Result<SampledSignal> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if !(transient >= 0.0) {
            return Err(Error::InvalidParameter(format!("transient must be >= 0, got {transient}")));
        }
        if n_samples == 0 {
            return Err(Error::InvalidParameter("n_samples must be >= 1".into()));
        }
        let lag = {
            let raw = self.delay / dt;
            if (raw - raw.round()).abs() <= 1e-9 * raw.abs().max(1.0) {
                raw.round()
            } else {
                raw
            }
        };
        if lag < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "dt = {dt} must not exceed the delay {}",
                self.delay
            )));
        }

        let skip = steps_for(transient, dt);
        let total = skip + n_samples;
        let mut values = Vec::with_capacity(total);
        let mut derivs = Vec::with_capacity(total);

        // Delayed value at fractional step position `p` (step units from t = 0).
        let delayed = |p: f64, values: &[f64], derivs: &[f64]| -> f64 {
            if p <= 0.0 {
                return self.history;
            }
            let i = p.floor() as usize;
            let theta = p - i as f64;
            if theta == 0.0 {
                return values[i];
            }
            hermite(values[i], values[i + 1], derivs[i], derivs[i + 1], theta, dt)
        };

        let x0 = self.history;
        values.push(x0);
        derivs.push(self.rhs(x0, self.history));

        for k in 0..total - 1 {
            let x = values[k];
            let base = k as f64 - lag;
            let d0 = delayed(base, &values, &derivs);
            let dh = delayed(base + 0.5, &values, &derivs);
            let d1 = delayed(base + 1.0, &values, &derivs);

            let k1 = self.rhs(x, d0);
            let k2 = self.rhs(x + 0.5 * dt * k1, dh);
            let k3 = self.rhs(x + 0.5 * dt * k2, dh);
            let k4 = self.rhs(x + dt * k3, d1);
            let next = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if !next.is_finite() {
                return Err(Error::IntegrationDiverged { time: (k + 1) as f64 * dt });
            }
            values.push(next);
            derivs.push(self.rhs(next, d1));
        }

        SampledSignal::new(skip as f64 * dt, dt, values.split_off(skip))
    }
}

/// Cubic Hermite interpolation on one interval of width `dt` at fraction `theta`.
fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, theta: f64, dt: f64) -> f64 {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y0 + h10 * dt * d0 + h01 * y1 + h11 * dt * d1
}

/// Mackey-Glass with the default parameters (`delay = 17`, history 1.2).
pub fn generate_mackey_glass(dt: f64, n_samples: usize, transient: f64) -> Result<SampledSignal> {
    MackeyGlass::default().generate(dt, n_samples, transient)
}

/// Lorenz system observed through its x-coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lorenz {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub initial: [f64; 3],
    /// Upper bound on the internal RK4 step; each output step is subdivided to respect it.
    pub max_substep: f64,
}

impl Default for Lorenz {
    fn default() -> Self {
        Self { sigma: 10.0, rho: 28.0, beta: 8.0 / 3.0, initial: [1.0, 1.0, 1.0], max_substep: 0.001 }
    }
}

impl Lorenz {
    pub fn with_max_substep(mut self, max_substep: f64) -> Self {
        self.max_substep = max_substep;
        self
    }

    fn rhs(&self, s: [f64; 3]) -> [f64; 3] {
        [
            self.sigma * (s[1] - s[0]),
            self.rho * s[0] - s[1] - s[0] * s[2],
            -self.beta * s[2] + s[0] * s[1],
        ]
    }

    /// One classical RK4 step.
    pub fn rk4_step(&self, s: [f64; 3], step: f64) -> [f64; 3] {
        let axpy = |a: [f64; 3], k: [f64; 3], c: f64| [a[0] + c * k[0], a[1] + c * k[1], a[2] + c * k[2]];
        let k1 = self.rhs(s);
        let k2 = self.rhs(axpy(s, k1, 0.5 * step));
        let k3 = self.rhs(axpy(s, k2, 0.5 * step));
        let k4 = self.rhs(axpy(s, k3, step));
        let mut out = s;
        for i in 0..3 {
            out[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    /// Advances `state` by `n_steps` RK4 steps of size `step`.
    pub fn integrate(&self, mut state: [f64; 3], step: f64, n_steps: usize) -> [f64; 3] {
        for _ in 0..n_steps {
            state = self.rk4_step(state, step);
        }
        state
    }

    pub fn generate(&self, dt: f64, n_samples: usize, transient: f64) -> Result<SampledSignal> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if !(transient >= 0.0) {
            return Err(Error::InvalidParameter(format!("transient must be >= 0, got {transient}")));
        }
        if n_samples == 0 {
            return Err(Error::InvalidParameter("n_samples must be >= 1".into()));
        }
        if !(self.max_substep > 0.0) {
            return Err(Error::InvalidParameter("max_substep must be positive".into()));
        }
        let substeps = ((dt / self.max_substep) - 1e-9).ceil().max(1.0) as usize;
        let step = dt / substeps as f64;
        let skip = steps_for(transient, dt);

        let mut state = self.initial;
        let mut values = Vec::with_capacity(n_samples);
        for k in 0..skip + n_samples {
            if k >= skip {
                values.push(state[0]);
            }
            if k + 1 < skip + n_samples {
                state = self.integrate(state, step, substeps);
                if state.iter().any(|v| !v.is_finite()) {
                    return Err(Error::IntegrationDiverged { time: (k + 1) as f64 * dt });
                }
            }
        }
        SampledSignal::new(skip as f64 * dt, dt, values)
    }
}

/// Lorenz x-coordinate with the default parameters and initial point (1, 1, 1).
pub fn generate_lorenz(dt: f64, n_samples: usize, transient: f64) -> Result<SampledSignal> {
    Lorenz::default().generate(dt, n_samples, transient)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn stats_two_point() {
        let s = SampledSignal::new(0.0, 1.0, vec![0.0, 1.0]).unwrap();
        let st = signal_stats(&s);
        assert_eq!(st.mean, 0.5);
        assert_eq!(st.variance, 0.5);
    }

    #[test]
    fn stats_constant() {
        let s = SampledSignal::new(0.0, 1.0, vec![3.0; 10]).unwrap();
        assert_eq!(signal_stats(&s).variance, 0.0);
    }

    #[test]
    fn rejects_bad_signals() {
        assert!(matches!(SampledSignal::new(0.0, 0.0, vec![1.0]), Err(Error::InvalidGrid(_))));
        assert!(matches!(SampledSignal::new(0.0, 1.0, vec![]), Err(Error::InsufficientData(_))));
        assert!(matches!(SampledSignal::new(0.0, 1.0, vec![f64::NAN]), Err(Error::InvalidData(_))));
    }

    #[test]
    fn mackey_glass_first_sample_is_history() {
        let s = MackeyGlass::default().with_history(0.7).generate(0.1, 1, 0.0).unwrap();
        assert_eq!(s.values(), &[0.7]);
        assert_eq!(s.t0(), 0.0);
    }

    #[test]
    fn mackey_glass_is_deterministic() {
        let a = generate_mackey_glass(0.1, 500, 50.0).unwrap();
        let b = generate_mackey_glass(0.1, 500, 50.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mackey_glass_step_halving() {
        let coarse = generate_mackey_glass(0.1, 1001, 0.0).unwrap();
        let fine = generate_mackey_glass(0.05, 2001, 0.0).unwrap();
        let max_diff = coarse
            .values()
            .iter()
            .zip(fine.values().iter().step_by(2))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_diff <= 1e-4, "max diff {max_diff}");
    }

    #[test]
    fn hermite_reproduces_grid_values() {
        assert_eq!(hermite(0.3, 0.9, 1.0, -2.0, 0.0, 0.1), 0.3);
        assert_eq!(hermite(0.3, 0.9, 1.0, -2.0, 1.0, 0.1), 0.9);
        // exact on cubics: y = t^3 on [1, 2]
        let v = hermite(1.0, 8.0, 3.0, 12.0, 0.5, 1.0);
        assert_relative_eq!(v, 1.5f64.powi(3), epsilon = 1e-14);
    }

    #[test]
    fn lorenz_first_sample_is_initial_x() {
        let s = generate_lorenz(0.01, 1, 0.0).unwrap();
        assert_eq!(s.values(), &[1.0]);
    }

    #[test]
    fn lorenz_step_halving() {
        let a = generate_lorenz(0.01, 1001, 0.0).unwrap();
        let b = Lorenz::default().with_max_substep(0.0005).generate(0.01, 1001, 0.0).unwrap();
        let max_diff = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(max_diff <= 1e-6, "max diff {max_diff}");
    }

    #[test]
    fn lorenz_rk4_is_fourth_order() {
        let sys = Lorenz::default();
        let start = sys.integrate([1.0, 1.0, 1.0], 0.001, 1000);
        let reference = sys.integrate(start, 0.01 / 4.0, 400);
        let err = |step: f64, n: usize| {
            let s = sys.integrate(start, step, n);
            ((s[0] - reference[0]).powi(2) + (s[1] - reference[1]).powi(2) + (s[2] - reference[2]).powi(2))
                .sqrt()
        };
        let ratio = err(0.02, 50) / err(0.01, 100);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn noise_zero_snr_is_identity() {
        let s = SampledSignal::new(0.0, 1.0, vec![1.0, 2.0, 4.0]).unwrap();
        assert_eq!(add_noise(&s, NoiseSpec { snr: 0.0, seed: 9 }).unwrap(), s);
    }

    #[test]
    fn noise_is_reproducible() {
        let s = SampledSignal::new(0.0, 1.0, (0..100).map(|i| (i as f64).sin()).collect()).unwrap();
        let spec = NoiseSpec { snr: 0.3, seed: 42 };
        assert_eq!(add_noise(&s, spec).unwrap(), add_noise(&s, spec).unwrap());
        assert_ne!(add_noise(&s, spec).unwrap(), add_noise(&s, NoiseSpec { seed: 43, ..spec }).unwrap());
    }

    #[test]
    fn negative_snr_rejected() {
        let s = SampledSignal::new(0.0, 1.0, vec![1.0, 2.0]).unwrap();
        assert!(add_noise(&s, NoiseSpec { snr: -0.1, seed: 0 }).is_err());
    }

    #[test]
    fn table_round_trip() {
        let s = SampledSignal::new(2.5, 0.1, vec![0.1, -3.25, 1e-9]).unwrap();
        let back = SampledSignal::from_table(&s.to_table()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn downsample_keeps_every_kth() {
        let s = SampledSignal::new(1.0, 0.1, (0..25).map(f64::from).collect()).unwrap();
        let d = s.downsample(10).unwrap();
        assert_eq!(d.values(), &[0.0, 10.0, 20.0]);
        assert_relative_eq!(d.h(), 1.0);
    }
}
