use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use splinekrr_bench::config::{ExperimentConfig, System, DEFAULTS_HELP};
use splinekrr_bench::plot::{emit_plot, XAxis};
use splinekrr_bench::runner::{generate_signals, read_results, results_path, run_experiment};
use splinekrr_bench::selftest;

#[derive(Parser)]
#[command(name = "splinekrr", version, about = "Noisy time-series prediction benchmarks", after_help = DEFAULTS_HELP)]
struct Cli {
    /// Experiment configuration file (Mackey-Glass defaults if omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Exit with status 1 if any record failed.
    #[arg(long, global = true)]
    strict: bool,
    /// Records computed concurrently. Does not change any output.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Record wall time per record (result files are then no longer reproducible).
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Snr,
    Tf,
}

#[derive(Subcommand)]
enum Command {
    /// Write the noise-free signal and every noisy training segment.
    Generate,
    /// Run the configured sweep and append records to <output_dir>/<name>.csv.
    Run,
    /// Plot seed-averaged RMS from a results table.
    Plot {
        /// Results table (default: the configured experiment's table).
        #[arg(long)]
        results: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Axis::Snr)]
        x_axis: Axis,
        /// Keep only records with this t_f (for --x-axis snr).
        #[arg(long)]
        tf: Option<f64>,
        /// Keep only records with this SNR (for --x-axis tf).
        #[arg(long)]
        snr: Option<f64>,
        /// Keep only these methods (comma separated).
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        /// Output SVG path (default: next to the table).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the built-in property and oracle suite.
    Selftest,
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::defaults(System::MackeyGlass),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    cfg.record_timing |= cli.timing;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    match &cli.command {
        Command::Generate => {
            let cfg = load_config(cli)?;
            for path in generate_signals(&cfg)? {
                println!("{}", path.display());
            }
            Ok(true)
        }
        Command::Run => {
            let cfg = load_config(cli)?;
            let out = run_experiment(&cfg, cli.jobs)?;
            let failed = out.records.iter().filter(|r| r.is_failure()).count();
            println!(
                "{} records ({failed} failed) -> {}; noise hashes -> {}",
                out.records.len(),
                out.results_path.display(),
                out.hash_log_path.display()
            );
            Ok(!(cli.strict && failed > 0))
        }
        Command::Plot { results, x_axis, tf, snr, methods, output } => {
            let path = match results {
                Some(p) => p.clone(),
                None => results_path(&load_config(cli)?),
            };
            let mut records = read_results(&path)?;
            records.retain(|r| {
                tf.is_none_or(|v| r.tf == v) && snr.is_none_or(|v| r.snr == v) && (methods.is_empty() || methods.contains(&r.method))
            });
            if records.is_empty() {
                bail!("no records match the selection");
            }
            let (axis, suffix) = match x_axis {
                Axis::Snr => (XAxis::Snr, "snr"),
                Axis::Tf => (XAxis::Tf, "tf"),
            };
            let output = output.clone().unwrap_or_else(|| path.with_extension(format!("{suffix}.svg")));
            emit_plot(&records, axis, &output).with_context(|| format!("plotting {}", path.display()))?;
            println!("{}", output.display());
            Ok(true)
        }
        Command::Selftest => {
            let mut checks = selftest::run_all();
            let scratch = std::env::temp_dir().join(format!("splinekrr-selftest-{}", std::process::id()));
            checks.push(selftest::jobs_invariance(&scratch));
            let _ = std::fs::remove_dir_all(&scratch);
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
