//! Plain-text experiment configuration.
//!
//! ```text
//! # comment
//! system = mackey_glass
//!
//! [sweep]
//! snr_list = 0.05, 0.1, 0.2, 0.4
//! seeds = 1, 2, 3
//! ```
//!
//! Keys before the first section header may name any key; keys inside a
//! section must belong to it. Unknown keys, unknown sections and repeated keys
//! are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use splinekrr::embedding::steps_of;
use splinekrr::predictor::Method;
use splinekrr::selection::CvGrid;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum System {
    MackeyGlass,
    Lorenz,
}

impl System {
    pub fn as_str(&self) -> &'static str {
        match self {
            System::MackeyGlass => "mackey_glass",
            System::Lorenz => "lorenz",
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for System {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mackey_glass" => Ok(System::MackeyGlass),
            "lorenz" => Ok(System::Lorenz),
            _ => Err(format!("unknown system '{s}' (expected mackey_glass or lorenz)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub system: System,
    /// Integrator step (Mackey-Glass only; Lorenz is sampled directly at `h`).
    pub dt: f64,
    /// Sampling step of the observed signal.
    pub h: f64,
    pub transient: f64,
    pub tau: f64,
    pub dim: usize,
    /// Training rows (delay vectors).
    pub n_train: usize,
    /// Evaluation rows on the noise-free stretch.
    pub n_test: usize,
    pub snr_list: Vec<f64>,
    pub tf_list: Vec<f64>,
    pub methods: Vec<Method>,
    /// Methods additionally evaluated by iterating their one-step (`t_f = h`) predictor.
    pub iterated: Vec<Method>,
    pub seeds: Vec<u64>,
    pub cv_grid: CvGrid,
    pub spline_folds: usize,
    pub output_dir: PathBuf,
    /// Write measured wall time per record; off keeps result files byte-reproducible.
    pub record_timing: bool,
}

/// Section each key belongs to.
const KEYS: &[(&str, &str)] = &[
    ("name", "experiment"),
    ("system", "experiment"),
    ("dt", "signal"),
    ("h", "signal"),
    ("transient", "signal"),
    ("tau", "embedding"),
    ("dim", "embedding"),
    ("n_train", "embedding"),
    ("n_test", "embedding"),
    ("snr_list", "sweep"),
    ("tf_list", "sweep"),
    ("methods", "sweep"),
    ("iterated", "sweep"),
    ("seeds", "sweep"),
    ("gamma_over_2d", "cv"),
    ("lambda", "cv"),
    ("epsilon", "cv"),
    ("folds", "cv"),
    ("spline_folds", "cv"),
    ("output_dir", "output"),
    ("record_timing", "output"),
];

/// Defaults, printed by `--help`.
pub const DEFAULTS_HELP: &str = "\
Configuration: key = value lines, optional [section] headers, '#' comments.
  [experiment] name (= system), system = mackey_glass | lorenz (required)
  [signal]     dt = 0.1 (mackey_glass integrator step), h = 1 (mackey_glass) | 0.01 (lorenz),
               transient = 1000 (mackey_glass) | 100 (lorenz)
  [embedding]  tau = 6 (mackey_glass) | h (lorenz), dim = 6 (mackey_glass) | 10 (lorenz),
               n_train = 1000, n_test = 1000
  [sweep]      snr_list = 0.05,0.1,0.2,0.4; tf_list = 1 (mackey_glass) | h (lorenz);
               methods = svr_noisy,krr_noisy,spline_krr; iterated = (none); seeds = 1,2,3,4,5
  [cv]         gamma_over_2d = 0.1,1.5,10,50,100; lambda = 1e-10,1e-6,1e-2,1e2;
               epsilon = 0.01,0.05,0.25; folds = 5; spline_folds = 5
  [output]     output_dir = results, record_timing = false";

impl ExperimentConfig {
    /// All defaults for `system`.
    pub fn defaults(system: System) -> Self {
        let (dt, h, transient, tau, dim) = match system {
            System::MackeyGlass => (0.1, 1.0, 1000.0, 6.0, 6),
            System::Lorenz => (0.01, 0.01, 100.0, 0.01, 10),
        };
        Self {
            name: system.as_str().to_string(),
            system,
            dt,
            h,
            transient,
            tau,
            dim,
            n_train: 1000,
            n_test: 1000,
            snr_list: vec![0.05, 0.1, 0.2, 0.4],
            tf_list: vec![h],
            methods: Method::ALL.to_vec(),
            iterated: Vec::new(),
            seeds: (1..=5).collect(),
            cv_grid: CvGrid::default(),
            spline_folds: 5,
            output_dir: PathBuf::from("results"),
            record_timing: false,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        parse_config(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return invalid(format!("name '{}' must be a plain file stem", self.name));
        }
        for (what, v) in [("snr_list", self.snr_list.is_empty()), ("tf_list", self.tf_list.is_empty())] {
            if v {
                return invalid(format!("{what} must be non-empty"));
            }
        }
        if self.methods.is_empty() || self.seeds.is_empty() {
            return invalid("methods and seeds must be non-empty".into());
        }
        if self.snr_list.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return invalid("snr values must be finite and >= 0".into());
        }
        if !(self.h > 0.0) || !(self.transient >= 0.0) {
            return invalid("h must be positive and transient non-negative".into());
        }
        if self.system == System::MackeyGlass {
            if !(self.dt > 0.0) {
                return invalid("dt must be positive".into());
            }
            steps_of("h", self.h, self.dt).map_err(|e| ConfigError::Invalid(format!("h is not a multiple of dt: {e}")))?;
        }
        if self.dim == 0 {
            return invalid("dim must be >= 1".into());
        }
        let grid = |e: splinekrr::Error| ConfigError::Invalid(e.to_string());
        steps_of("tau", self.tau, self.h).map_err(grid)?;
        for &tf in &self.tf_list {
            steps_of("tf", tf, self.h).map_err(grid)?;
        }
        if self.cv_grid.gamma_over_2d.is_empty() || self.cv_grid.lambda_reg.is_empty() || self.cv_grid.epsilon.is_empty()
        {
            return invalid("cv grids must be non-empty".into());
        }
        self.cv_grid.validate(splinekrr::kernel::LossKind::EpsilonInsensitive).map_err(grid)?;
        if self.spline_folds < 2 {
            return invalid("spline_folds must be >= 2".into());
        }
        if self.n_train < self.cv_grid.folds * self.dim {
            return invalid(format!("n_train must be at least folds x dim = {}", self.cv_grid.folds * self.dim));
        }
        if self.n_test < splinekrr::predictor::MIN_EVAL_ROWS {
            return invalid(format!("n_test must be at least {}", splinekrr::predictor::MIN_EVAL_ROWS));
        }
        Ok(())
    }
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut entries: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |message: String| ConfigError::Parse { line: line_no, message };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| err("unterminated section header".into()))?.trim();
            if !KEYS.iter().any(|(_, s)| *s == name) {
                return Err(err(format!("unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key = value, got '{line}'")))?;
        let (key, value) = (key.trim(), value.trim());
        let Some((key, home)) = KEYS.iter().find(|(k, _)| *k == key) else {
            return Err(err(format!("unknown key '{key}'")));
        };
        if let Some(s) = &section {
            if s != home {
                return Err(err(format!("key '{key}' belongs in [{home}], not [{s}]")));
            }
        }
        if value.is_empty() {
            return Err(err(format!("empty value for '{key}'")));
        }
        if let Some((first, _)) = entries.insert(key, (line_no, value)) {
            return Err(err(format!("duplicate key '{key}' (first set on line {first})")));
        }
    }

    let (sys_line, sys) = entries
        .get("system")
        .copied()
        .ok_or_else(|| ConfigError::Invalid("missing required key 'system'".into()))?;
    let system: System = sys.parse().map_err(|message| ConfigError::Parse { line: sys_line, message })?;
    let mut cfg = ExperimentConfig::defaults(system);
    if system == System::Lorenz && entries.contains_key("dt") {
        let line = entries["dt"].0;
        return Err(ConfigError::Parse { line, message: "dt applies to mackey_glass only".into() });
    }

    // h moves the Lorenz defaults that are expressed in steps.
    if let Some(&(line, v)) = entries.get("h") {
        cfg.h = scalar(line, v)?;
        if system == System::Lorenz {
            cfg.tau = cfg.h;
            cfg.tf_list = vec![cfg.h];
        }
    }
    for (&key, &(line, v)) in &entries {
        match key {
            "name" => cfg.name = v.to_string(),
            "system" | "h" => {}
            "dt" => cfg.dt = scalar(line, v)?,
            "transient" => cfg.transient = scalar(line, v)?,
            "tau" => cfg.tau = scalar(line, v)?,
            "dim" => cfg.dim = scalar(line, v)?,
            "n_train" => cfg.n_train = scalar(line, v)?,
            "n_test" => cfg.n_test = scalar(line, v)?,
            "snr_list" => cfg.snr_list = list(line, v)?,
            "tf_list" => cfg.tf_list = list(line, v)?,
            "methods" => cfg.methods = methods(line, v)?,
            "iterated" => cfg.iterated = if v == "none" { Vec::new() } else { methods(line, v)? },
            "seeds" => cfg.seeds = list(line, v)?,
            "gamma_over_2d" => cfg.cv_grid.gamma_over_2d = list(line, v)?,
            "lambda" => cfg.cv_grid.lambda_reg = list(line, v)?,
            "epsilon" => cfg.cv_grid.epsilon = list(line, v)?,
            "folds" => cfg.cv_grid.folds = scalar(line, v)?,
            "spline_folds" => cfg.spline_folds = scalar(line, v)?,
            "output_dir" => cfg.output_dir = PathBuf::from(v),
            "record_timing" => cfg.record_timing = scalar(line, v)?,
            _ => unreachable!("key table and match disagree on '{key}'"),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn scalar<T: FromStr>(line: usize, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.parse().map_err(|e| ConfigError::Parse { line, message: format!("cannot parse '{v}': {e}") })
}

fn list<T: FromStr>(line: usize, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    v.split(',').map(|item| scalar(line, item.trim())).collect()
}

fn methods(line: usize, v: &str) -> Result<Vec<Method>, ConfigError> {
    let mut out: Vec<Method> = list(line, v)?;
    let before = out.len();
    out.sort();
    out.dedup();
    if out.len() != before {
        return Err(ConfigError::Parse { line, message: "method listed twice".into() });
    }
    Ok(out)
}
