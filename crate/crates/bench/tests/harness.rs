use std::process::Command;

use splinekrr::predictor::Method;
use splinekrr_bench::config::{parse_config, ConfigError, ExperimentConfig, System};
use splinekrr_bench::plot::{render_svg, XAxis};
use splinekrr_bench::runner::{read_results, run_experiment, Fit, Outcome, ResultRecord, RESULTS_HEADER};
use splinekrr_bench::selftest::tiny_config;

#[test]
fn minimal_config_takes_documented_defaults() {
    let cfg = parse_config("system=mackey_glass\n").unwrap();
    assert_eq!(cfg, ExperimentConfig::defaults(System::MackeyGlass));
    assert_eq!((cfg.dt, cfg.h, cfg.tau, cfg.dim, cfg.n_train), (0.1, 1.0, 6.0, 6, 1000));
    assert_eq!(cfg.cv_grid.gamma_over_2d, vec![0.1, 1.5, 10.0, 50.0, 100.0]);
    assert_eq!(cfg.cv_grid.lambda_reg, vec![1e-10, 1e-6, 1e-2, 1e2]);
    assert_eq!(cfg.cv_grid.epsilon, vec![0.01, 0.05, 0.25]);
    assert_eq!(cfg.seeds.len(), 5);
}

#[test]
fn duplicate_key_is_a_parse_error() {
    let err = parse_config("system = mackey_glass\n[embedding]\ndim = 6\n\ndim = 7\n").unwrap_err();
    assert!(matches!(err, ConfigError::Parse { line: 5, .. }), "{err}");
}

#[test]
fn snr_list_parses_to_sweep() {
    let cfg = parse_config("system = mackey_glass\n[sweep]\nsnr_list=0.05,0.1,0.2,0.4\n").unwrap();
    assert_eq!(cfg.snr_list, vec![0.05, 0.1, 0.2, 0.4]);
}

#[test]
fn malformed_and_unknown_lines_carry_line_numbers() {
    for (text, line) in [
        ("system = lorenz\nfoo = 1\n", 2),
        ("# c\nsystem = lorenz\n[nope]\n", 3),
        ("system = lorenz\njust words\n", 2),
        ("system = lorenz\n[sweep]\nseeds = 1, x\n", 3),
        ("system = lorenz\ndt = 0.1\n", 2),
    ] {
        match parse_config(text) {
            Err(ConfigError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
    assert!(matches!(parse_config("system = mackey_glass\ntau = 6.5\n"), Err(ConfigError::Invalid(_))));
    assert!(matches!(parse_config("[sweep]\nseeds = 1\n"), Err(ConfigError::Invalid(_))));
}

#[test]
fn one_cell_yields_one_record_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(dir.path());
    cfg.snr_list = vec![0.2];
    cfg.tf_list = vec![1.0];
    cfg.seeds = vec![7];
    cfg.iterated.clear();
    let out = run_experiment(&cfg, 1).unwrap();
    assert_eq!(out.records.len(), 3);
    let methods: Vec<&str> = out.records.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(methods, ["svr_noisy", "krr_noisy", "spline_krr"]);
    for r in &out.records {
        assert_eq!((r.system.as_str(), r.snr, r.tf, r.seed), ("mackey_glass", 0.2, 1.0, 7));
        assert!(r.rms().is_some_and(|v| v.is_finite() && v >= 0.0), "{r:?}");
    }
    assert_eq!(read_results(&out.results_path).unwrap(), out.records);

    let hashes = std::fs::read_to_string(&out.hash_log_path).unwrap();
    let distinct: std::collections::BTreeSet<&str> = hashes.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(distinct.len(), 1, "methods must share the noisy training data");
}

#[test]
fn noise_free_run_agrees_between_krr_and_spline_krr() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::defaults(System::MackeyGlass);
    cfg.output_dir = dir.path().to_path_buf();
    cfg.snr_list = vec![0.0];
    cfg.seeds = vec![1];
    cfg.methods = vec![Method::KrrNoisy, Method::SplineKrr];
    cfg.n_train = 400;
    cfg.n_test = 400;
    let out = run_experiment(&cfg, 1).unwrap();
    let rms: Vec<f64> = out.records.iter().map(|r| r.rms().unwrap()).collect();
    assert!((rms[0] - rms[1]).abs() <= 1e-3, "{rms:?}");
}

#[test]
fn failing_records_are_marked_and_strict_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.cfg");
    // The only SVR cell has negligible regularization and cannot converge within the iteration cap.
    std::fs::write(
        &cfg_path,
        "system = mackey_glass\n[embedding]\ntau = 2\ndim = 3\nn_train = 200\nn_test = 100\n\
         [sweep]\nsnr_list = 0.2\nseeds = 1\nmethods = svr_noisy,krr_noisy\n\
         [cv]\ngamma_over_2d = 100\nlambda = 1e-12\nepsilon = 0\nfolds = 2\n",
    )
    .unwrap();
    let bin = env!("CARGO_BIN_EXE_splinekrr");
    let out_dir = dir.path().join("out");
    let run = |strict: bool| {
        let mut cmd = Command::new(bin);
        cmd.args(["--config", cfg_path.to_str().unwrap(), "--output-dir", out_dir.to_str().unwrap()]);
        if strict {
            cmd.arg("--strict");
        }
        cmd.arg("run").output().unwrap()
    };
    let relaxed = run(false);
    assert!(relaxed.status.success(), "{}", String::from_utf8_lossy(&relaxed.stderr));
    let records = read_results(&out_dir.join("mackey_glass.csv")).unwrap();
    assert!(records[0].is_failure());
    assert!(!records[1].is_failure());
    let strict = run(true);
    assert_eq!(strict.status.code(), Some(1));
}

fn record(method: &str, snr: f64, seed: u64, rms: f64) -> ResultRecord {
    ResultRecord {
        system: "mackey_glass".into(),
        method: method.into(),
        snr,
        tf: 1.0,
        h: 1.0,
        seed,
        outcome: Outcome::Ok(Fit { rms, gamma: 1.0, lambda: 1e-6, epsilon: None, spline_lambda: None }),
        wall_time: None,
    }
}

#[test]
fn plot_has_one_polyline_per_method() {
    let mut records = Vec::new();
    for (m, base) in [("svr_noisy", 0.03), ("spline_krr", 0.01)] {
        for snr in [0.1, 0.2, 0.4] {
            for seed in 1..=3 {
                records.push(record(m, snr, seed, base * (1.0 + snr) * (1.0 + 0.1 * seed as f64)));
            }
        }
    }
    let svg = render_svg(&records, XAxis::Snr).unwrap();
    let polylines: Vec<&str> = svg.lines().filter(|l| l.starts_with("<polyline")).collect();
    assert_eq!(polylines.len(), 2);
    for p in polylines {
        let points = p.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
        assert_eq!(points.split(' ').count(), 3);
    }
    assert_eq!(render_svg(&records, XAxis::Snr).unwrap(), svg);
}

#[test]
fn single_record_plot_and_errors() {
    let one = [record("krr_noisy", 0.2, 1, 0.02)];
    let svg = render_svg(&one, XAxis::Snr).unwrap();
    assert!(svg.contains("<polyline") && svg.contains("<circle"));
    assert!(render_svg(&[], XAxis::Snr).is_err());
    let mut mixed = one.to_vec();
    mixed.push(ResultRecord { h: 0.1, ..one[0].clone() });
    assert!(render_svg(&mixed, XAxis::Snr).is_err());
}

#[test]
fn plot_from_table_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("r.csv");
    let mut text = format!("{RESULTS_HEADER}\n");
    for snr in [0.05, 0.2] {
        text.push_str(&record("krr_noisy", snr, 1, 0.02 + snr).to_csv_line());
        text.push('\n');
    }
    std::fs::write(&table, text).unwrap();
    let bin = env!("CARGO_BIN_EXE_splinekrr");
    let mut outputs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("p{i}.svg"));
        let status = Command::new(bin)
            .args(["plot", "--results", table.to_str().unwrap(), "--output", out.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(out).unwrap());
    }
    assert!(!outputs[0].is_empty());
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn jobs_do_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let check = splinekrr_bench::selftest::jobs_invariance(dir.path());
    assert!(check.passed, "{}", check.detail);
}
