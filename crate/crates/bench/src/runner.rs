//! Experiment sweeps: shared noisy data per (seed, snr, t_f), every method fit on
//! it, evaluation on a later noise-free stretch, records appended in canonical order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use anyhow::{bail, Context};
use sha2::{Digest, Sha256};
use splinekrr::embedding::steps_of;
use splinekrr::predictor::{evaluate, fit_predictor, EvalMode, Method, PredictorSpec};
use splinekrr::signal::{add_noise, generate_lorenz, generate_mackey_glass, NoiseSpec, SampledSignal};

use crate::config::{ExperimentConfig, System};

pub const RESULTS_HEADER: &str = "system,method,snr,tf,h,seed,rms,gamma,lambda,epsilon,spline_lambda,wall_time";
pub const FAILED: &str = "failed";
const ITERATED_SUFFIX: &str = "+iterated";

#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub rms: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub epsilon: Option<f64>,
    pub spline_lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Ok(Fit),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub system: String,
    /// Method name, with `+iterated` appended for iterated one-step predictions.
    pub method: String,
    pub snr: f64,
    pub tf: f64,
    pub h: f64,
    pub seed: u64,
    pub outcome: Outcome,
    pub wall_time: Option<f64>,
}

impl ResultRecord {
    pub fn rms(&self) -> Option<f64> {
        match &self.outcome {
            Outcome::Ok(fit) => Some(fit.rms),
            Outcome::Failed(_) => None,
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self.outcome, Outcome::Failed(_))
    }

    pub fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let (rms, gamma, lambda, eps, spline) = match &self.outcome {
            Outcome::Ok(f) => (f.rms.to_string(), f.gamma.to_string(), f.lambda.to_string(), opt(f.epsilon), opt(f.spline_lambda)),
            Outcome::Failed(_) => (FAILED.to_string(), String::new(), String::new(), String::new(), String::new()),
        };
        format!(
            "{},{},{},{},{},{},{rms},{gamma},{lambda},{eps},{spline},{}",
            self.system,
            self.method,
            self.snr,
            self.tf,
            self.h,
            self.seed,
            opt(self.wall_time)
        )
    }

    pub fn from_csv_line(line: &str) -> anyhow::Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            bail!("expected 12 fields, got {}", f.len());
        }
        let opt = |s: &str| -> anyhow::Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                Ok(Some(s.parse()?))
            }
        };
        let outcome = if f[6] == FAILED {
            Outcome::Failed(String::new())
        } else {
            Outcome::Ok(Fit {
                rms: f[6].parse()?,
                gamma: f[7].parse()?,
                lambda: f[8].parse()?,
                epsilon: opt(f[9])?,
                spline_lambda: opt(f[10])?,
            })
        };
        Ok(Self {
            system: f[0].to_string(),
            method: f[1].to_string(),
            snr: f[2].parse()?,
            tf: f[3].parse()?,
            h: f[4].parse()?,
            seed: f[5].parse()?,
            outcome,
            wall_time: opt(f[11])?,
        })
    }
}

pub fn read_results(path: &Path) -> anyhow::Result<Vec<ResultRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == RESULTS_HEADER => {}
        _ => bail!("{}: missing results header", path.display()),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| ResultRecord::from_csv_line(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

/// Sample counts for one t_f: training segment, gap, evaluation segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub train_len: usize,
    pub gap: usize,
    pub test_len: usize,
}

impl Layout {
    pub fn new(cfg: &ExperimentConfig, tf: f64) -> anyhow::Result<Self> {
        let n_tau = steps_of("tau", cfg.tau, cfg.h)?;
        let n_f = steps_of("tf", tf, cfg.h)?;
        let window = (cfg.dim - 1) * n_tau + n_f;
        Ok(Self { train_len: cfg.n_train + window, gap: window, test_len: cfg.n_test + window })
    }

    pub fn total(&self) -> usize {
        self.train_len + self.gap + self.test_len
    }
}

/// Noise-free signal long enough for every t_f of the sweep.
pub fn clean_signal(cfg: &ExperimentConfig) -> anyhow::Result<SampledSignal> {
    let mut total = 0;
    for &tf in &cfg.tf_list {
        total = total.max(Layout::new(cfg, tf)?.total());
    }
    let signal = match cfg.system {
        System::MackeyGlass => {
            let factor = steps_of("h", cfg.h, cfg.dt)?;
            generate_mackey_glass(cfg.dt, total * factor, cfg.transient)?.downsample(factor)?
        }
        System::Lorenz => generate_lorenz(cfg.h, total, cfg.transient)?,
    };
    Ok(signal)
}

/// Training (noisy) and evaluation (clean) segments for one (seed, snr, t_f).
pub fn split(clean: &SampledSignal, cfg: &ExperimentConfig, snr: f64, tf: f64, seed: u64) -> anyhow::Result<(SampledSignal, SampledSignal)> {
    let layout = Layout::new(cfg, tf)?;
    let train = clean.segment(0, layout.train_len)?;
    let noisy = add_noise(&train, NoiseSpec::new(snr, seed)?)?;
    let test = clean.segment(layout.train_len + layout.gap, layout.test_len)?;
    Ok((noisy, test))
}

pub fn signal_hash(signal: &SampledSignal) -> String {
    let mut hasher = Sha256::new();
    for v in signal.values() {
        hasher.update(v.to_le_bytes());
    }
    hasher.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, Copy)]
struct Task {
    seed: u64,
    snr: f64,
    tf: f64,
    method: Method,
    iterated: bool,
}

fn tasks(cfg: &ExperimentConfig) -> Vec<Task> {
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        for &snr in &cfg.snr_list {
            for &tf in &cfg.tf_list {
                out.extend(cfg.methods.iter().map(|&method| Task { seed, snr, tf, method, iterated: false }));
                out.extend(cfg.iterated.iter().map(|&method| Task { seed, snr, tf, method, iterated: true }));
            }
        }
    }
    out
}

fn run_task(cfg: &ExperimentConfig, clean: &SampledSignal, task: Task) -> (ResultRecord, String) {
    let start = Instant::now();
    let mut hash = String::new();
    let attempt = catch_unwind(AssertUnwindSafe(|| -> anyhow::Result<Fit> {
        let (noisy, test) = split(clean, cfg, task.snr, task.tf, task.seed)?;
        hash = signal_hash(&noisy);
        let lookahead = if task.iterated { cfg.h } else { task.tf };
        let mut spec = PredictorSpec::new(task.method, cfg.tau, cfg.dim, lookahead);
        spec.cv_grid = cfg.cv_grid.clone();
        spec.spline_folds = cfg.spline_folds;
        let p = fit_predictor(&noisy, &spec)?;
        let mode = if task.iterated { EvalMode::Iterated { horizon: task.tf } } else { EvalMode::Direct };
        let rms = evaluate(&p, &test, mode)?;
        if !rms.is_finite() {
            bail!("non-finite RMS");
        }
        Ok(Fit {
            rms,
            gamma: p.selected.gamma,
            lambda: p.selected.lambda_reg,
            epsilon: p.selected.epsilon,
            spline_lambda: p.selected.spline_lambda,
        })
    }));
    let outcome = match attempt {
        Ok(Ok(fit)) => Outcome::Ok(fit),
        Ok(Err(e)) => Outcome::Failed(format!("{e:#}")),
        Err(panic) => Outcome::Failed(
            panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()),
        ),
    };
    let method = if task.iterated {
        format!("{}{ITERATED_SUFFIX}", task.method)
    } else {
        task.method.to_string()
    };
    let record = ResultRecord {
        system: cfg.system.to_string(),
        method,
        snr: task.snr,
        tf: task.tf,
        h: cfg.h,
        seed: task.seed,
        outcome,
        wall_time: cfg.record_timing.then(|| start.elapsed().as_secs_f64()),
    };
    (record, hash)
}

pub struct RunOutput {
    pub records: Vec<ResultRecord>,
    pub results_path: PathBuf,
    pub hash_log_path: PathBuf,
}

pub fn results_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join(format!("{}.csv", cfg.name))
}

/// Runs the sweep with up to `jobs` records in flight. Output files do not depend on `jobs`.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> anyhow::Result<RunOutput> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let results_path = results_path(cfg);
    let hash_log_path = cfg.output_dir.join(format!("{}.noise.csv", cfg.name));
    let mut results = BufWriter::new(File::create(&results_path)?);
    let mut hashes = BufWriter::new(File::create(&hash_log_path)?);
    writeln!(results, "{RESULTS_HEADER}")?;
    writeln!(hashes, "seed,snr,tf,method,noisy_sha256")?;
    results.flush()?;
    hashes.flush()?;

    let clean = clean_signal(cfg)?;
    let tasks = tasks(cfg);
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    let mut records = Vec::with_capacity(tasks.len());

    std::thread::scope(|scope| -> anyhow::Result<()> {
        for _ in 0..jobs.max(1).min(tasks.len().max(1)) {
            let tx = tx.clone();
            let (tasks, next, clean) = (&tasks, &next, &clean);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= tasks.len() {
                    break;
                }
                if tx.send((i, run_task(cfg, clean, tasks[i]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending = BTreeMap::new();
        for (i, done) in rx {
            pending.insert(i, done);
            while let Some((record, hash)) = pending.remove(&records.len()) {
                let t = &tasks[records.len()];
                if let Outcome::Failed(msg) = &record.outcome {
                    eprintln!("record failed ({} seed {} snr {} tf {}): {msg}", record.method, t.seed, t.snr, t.tf);
                }
                writeln!(results, "{}", record.to_csv_line())?;
                writeln!(hashes, "{},{},{},{},{hash}", t.seed, t.snr, t.tf, record.method)?;
                results.flush()?;
                hashes.flush()?;
                records.push(record);
            }
        }
        Ok(())
    })?;

    Ok(RunOutput { records, results_path, hash_log_path })
}

/// Writes the clean signal and every noisy training segment of the sweep.
pub fn generate_signals(cfg: &ExperimentConfig) -> anyhow::Result<Vec<PathBuf>> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let clean = clean_signal(cfg)?;
    let mut written = Vec::new();
    let path = cfg.output_dir.join(format!("{}_clean.txt", cfg.name));
    fs::write(&path, clean.to_table())?;
    written.push(path);
    for &seed in &cfg.seeds {
        for &snr in &cfg.snr_list {
            for &tf in &cfg.tf_list {
                let (noisy, _) = split(&clean, cfg, snr, tf, seed)?;
                let path = cfg.output_dir.join(format!("{}_noisy_seed{seed}_snr{snr}_tf{tf}.txt", cfg.name));
                fs::write(&path, noisy.to_table())?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
