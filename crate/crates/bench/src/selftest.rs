//! Built-in property suite: oracle equivalences, invariants, and the
//! denoising trend of CV-selected smoothing splines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use splinekrr::embedding::{row_count, DelayDataset};
use splinekrr::kernel::{dual_objective, fit_krr, fit_svr, gram_matrix, kernel, kkt_violations};
use splinekrr::signal::SampledSignal;
use splinekrr::spline::{self, default_lambda_grid, select_lambda_cv};
use splinekrr::Cholesky;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

/// Gaussian elimination with partial pivoting on a row-major `n × n` system.
pub fn solve_dense(mut a: Vec<f64>, n: usize, mut b: Vec<f64>) -> Option<Vec<f64>> {
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[piv * n + col] == 0.0 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        for r in col + 1..n {
            let f = a[r * n + col] / a[col * n + col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[r * n + k] -= f * a[col * n + k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r * n + k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r * n + r];
    }
    Some(x)
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn random_grid(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut t = vec![rng.gen_range(-1.0..1.0)];
    for _ in 1..n {
        let next = t.last().unwrap() + rng.gen_range(0.02..0.5);
        t.push(next);
    }
    t
}

/// Fitted values of the smoothing spline from the dense normal equations
/// `(R + p QᵀQ) γ = Qᵀ y`, `g = y - p Q γ`, `p = M λ`.
pub fn dense_smoother(t: &[f64], y: &[f64], lambda: f64) -> Option<Vec<f64>> {
    let n = t.len();
    let m = n - 2;
    let p = n as f64 * lambda;
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    // Q is n × m with three non-zeros per column.
    let q = |i: usize, j: usize| -> f64 {
        if i == j {
            1.0 / h[j]
        } else if i == j + 1 {
            -1.0 / h[j] - 1.0 / h[j + 1]
        } else if i == j + 2 {
            1.0 / h[j + 1]
        } else {
            0.0
        }
    };
    let mut a = vec![0.0; m * m];
    for j in 0..m {
        a[j * m + j] = (h[j] + h[j + 1]) / 3.0;
        if j + 1 < m {
            a[j * m + j + 1] = h[j + 1] / 6.0;
            a[(j + 1) * m + j] = h[j + 1] / 6.0;
        }
        for k in 0..m {
            a[j * m + k] += p * (0..n).map(|i| q(i, j) * q(i, k)).sum::<f64>();
        }
    }
    let rhs: Vec<f64> = (0..m).map(|j| (0..n).map(|i| q(i, j) * y[i]).sum()).collect();
    let gamma = solve_dense(a, m, rhs)?;
    Some((0..n).map(|i| y[i] - p * (0..m).map(|j| q(i, j) * gamma[j]).sum::<f64>()).collect())
}

/// Banded spline solver against the dense normal equations on grids up to 200 points.
pub fn spline_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for n in [3usize, 4, 7, 20, 57, 120, 200] {
        for lambda in [1e-8, 1e-4, 1e-2, 1.0, 1e3] {
            let t = random_grid(&mut rng, n);
            let y: Vec<f64> = t.iter().map(|t| t.sin() + rng.gen_range(-0.5..0.5)).collect();
            let lib = spline::fit(&t, &y, lambda).expect("spline fit");
            let Some(dense) = dense_smoother(&t, &y, lambda) else {
                return Check::new("spline banded vs dense", false, format!("dense solve singular at n={n}"));
            };
            let err = max_abs(lib.fitted_values().iter().zip(&dense).map(|(a, b)| a - b)) / max_abs(dense.iter().copied());
            worst = worst.max(err);
        }
    }
    Check::new("spline banded vs dense", worst <= 1e-8, format!("max relative difference {worst:.3e} (limit 1e-8)"))
}

/// KRR coefficients against a dense solve of `(G + MΛI) α = y` on up to 50 points.
pub fn krr_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for n in [1usize, 5, 17, 33, 50] {
        for (gamma, lambda) in [(0.5, 1e-3), (1.0, 1e-2), (2.0, 1e-1)] {
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let y: Vec<f64> = rows.iter().map(|r| r[0] * r[1] + r[2].cos()).collect();
            let data = DelayDataset::from_rows(rows, y.clone(), 1.0, 1.0, 1.0).expect("dataset");
            let mut g = gram_matrix(&data, gamma);
            for i in 0..n {
                g[i * n + i] += n as f64 * lambda;
            }
            let alpha = solve_dense(g, n, y).expect("dense solve");
            let model = fit_krr(&data, gamma, lambda).expect("krr fit");
            let err = max_abs(model.alphas().iter().zip(&alpha).map(|(a, b)| a - b)) / max_abs(alpha.iter().copied());
            worst = worst.max(err);
        }
    }
    Check::new("krr vs dense solve", worst <= 1e-8, format!("max relative difference {worst:.3e} (limit 1e-8)"))
}

/// Projection of `v` onto `{0 ≤ a ≤ c, Σ s_t a_t = 0}` with `s = (+1…, -1…)`,
/// found by bisection on the multiplier.
fn project(v: &[f64], c: f64) -> Vec<f64> {
    let l = v.len() / 2;
    let sign = |t: usize| if t < l { 1.0 } else { -1.0 };
    let at = |nu: f64, t: usize| (v[t] - nu * sign(t)).clamp(0.0, c);
    let residual = |nu: f64| (0..2 * l).map(|t| sign(t) * at(nu, t)).sum::<f64>();
    let span = max_abs(v.iter().copied()) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu = 0.5 * (lo + hi);
    (0..2 * l).map(|t| at(nu, t)).collect()
}

/// Accelerated projected gradient on the ε-SVR dual in `(α, α*)` form; returns `β = α - α*`.
pub fn svr_qp_reference(gram: &[f64], y: &[f64], c: f64, eps: f64, iterations: usize) -> Vec<f64> {
    let l = y.len();
    let lip = 2.0 * (0..l).map(|i| max_abs(gram[i * l..(i + 1) * l].iter().copied()) * l as f64).fold(0.0, f64::max);
    let grad = |a: &[f64]| -> Vec<f64> {
        let beta: Vec<f64> = (0..l).map(|i| a[i] - a[l + i]).collect();
        let kb: Vec<f64> = (0..l).map(|i| (0..l).map(|j| gram[i * l + j] * beta[j]).sum()).collect();
        let mut g = vec![0.0; 2 * l];
        for i in 0..l {
            g[i] = kb[i] + eps - y[i];
            g[l + i] = -kb[i] + eps + y[i];
        }
        g
    };
    let mut x = vec![0.0; 2 * l];
    let mut z = x.clone();
    let mut t = 1.0f64;
    for _ in 0..iterations {
        let g = grad(&z);
        let step: Vec<f64> = z.iter().zip(&g).map(|(z, g)| z - g / lip).collect();
        let next = project(&step, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next.iter().zip(&x).map(|(n, o)| n + (t - 1.0) / t_next * (n - o)).collect();
        x = next;
        t = t_next;
    }
    (0..l).map(|i| x[i] - x[l + i]).collect()
}

/// SMO dual objective against the projected-gradient reference on up to 20 points.
pub fn svr_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for (n, gamma, lambda, eps) in [(8, 1.0, 1e-2, 0.05), (14, 0.7, 1e-3, 0.01), (20, 1.5, 5e-3, 0.1), (20, 0.5, 1e-1, 0.0)] {
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|r| (3.0 * r[0]).sin() + 0.5 * r[1] + rng.gen_range(-0.1..0.1)).collect();
        let data = DelayDataset::from_rows(rows, y.clone(), 1.0, 1.0, 1.0).expect("dataset");
        let model = fit_svr(&data, gamma, lambda, eps).expect("svr fit");
        let gram = gram_matrix(&data, gamma);
        let reference = svr_qp_reference(&gram, &y, model.box_bound(), eps, 20_000);
        let d_smo = dual_objective(&gram, &y, model.alphas(), eps);
        let d_ref = dual_objective(&gram, &y, &reference, eps);
        worst = worst.max((d_smo - d_ref).abs() / d_ref.abs().max(1e-12));
    }
    Check::new("svr dual vs QP reference", worst <= 1e-3, format!("max relative objective gap {worst:.3e} (limit 1e-3)"))
}

pub fn spline_invariants() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut interp, mut affine, mut linear) = (0.0f64, 0.0f64, 0.0f64);
    let mut monotone = true;
    for _ in 0..40 {
        let n = rng.gen_range(4..60);
        let t = random_grid(&mut rng, n);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y2: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();

        let m = spline::fit(&t, &y, 0.0).expect("fit");
        interp = interp.max(max_abs(m.fitted_values().iter().zip(&y).map(|(a, b)| a - b)));

        let (a, b) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let line: Vec<f64> = t.iter().map(|t| a + b * t).collect();
        let m = spline::fit(&t, &line, 10f64.powf(rng.gen_range(-6.0..3.0))).expect("fit");
        affine = affine.max(max_abs(m.fitted_values().iter().zip(&line).map(|(a, b)| a - b)));

        let lambda = 10f64.powf(rng.gen_range(-5.0..1.0));
        let mix: Vec<f64> = y.iter().zip(&y2).map(|(u, v)| a * u + b * v).collect();
        let (g1, g2, gm) = (
            spline::fit(&t, &y, lambda).expect("fit"),
            spline::fit(&t, &y2, lambda).expect("fit"),
            spline::fit(&t, &mix, lambda).expect("fit"),
        );
        for i in 0..n {
            let expect = a * g1.fitted_values()[i] + b * g2.fitted_values()[i];
            linear = linear.max((gm.fitted_values()[i] - expect).abs() / (1.0 + expect.abs()));
        }

        let mut prev: Option<(f64, f64)> = None;
        for &lam in &default_lambda_grid(n) {
            let m = spline::fit(&t, &y, lam).expect("fit");
            let rough = m.roughness();
            let mse = m.objective(&y) - lam * rough;
            if let Some((pm, pr)) = prev {
                monotone &= mse >= pm - 1e-12 * (1.0 + pm) && rough <= pr + 1e-9 * (1.0 + pr);
            }
            prev = Some((mse, rough));
        }
    }
    vec![
        Check::new("spline interpolates at lambda 0", interp <= 1e-9, format!("max deviation {interp:.3e}")),
        Check::new("spline reproduces affine data", affine <= 1e-8, format!("max deviation {affine:.3e}")),
        Check::new("spline smoother is linear", linear <= 1e-10, format!("max relative deviation {linear:.3e}")),
        Check::new("spline misfit/roughness monotone in lambda", monotone, "40 random grids".into()),
    ]
}

pub fn kernel_invariants() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut symmetric, mut pd) = (true, true);
    for _ in 0..40 {
        let n = rng.gen_range(2..60);
        let dim = rng.gen_range(1..8);
        let gamma = rng.gen_range(0.1..5.0);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let data = DelayDataset::from_rows(rows.clone(), vec![0.0; n], 1.0, 1.0, 1.0).expect("dataset");
        let mut g = gram_matrix(&data, gamma);
        for i in 0..n {
            for j in 0..n {
                symmetric &= g[i * n + j] == g[j * n + i] && (g[i * n + j] - kernel(gamma, &rows[i], &rows[j])).abs() <= 1e-14;
            }
            g[i * n + i] += 1e-10;
        }
        pd &= Cholesky::factor(g, n).is_ok();
    }
    vec![
        Check::new("gram matrix symmetric", symmetric, "40 random point sets".into()),
        Check::new("gram matrix positive definite with 1e-10 jitter", pd, "40 random point sets".into()),
    ]
}

pub fn svr_invariants() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let (mut kkt, mut bound, mut sum, mut tube) = (0.0f64, true, 0.0f64, true);
    for _ in 0..30 {
        let n = rng.gen_range(5..50);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|r| (2.0 * r[0]).sin() + r[1] * r[1] + rng.gen_range(-0.1..0.1)).collect();
        let data = DelayDataset::from_rows(rows, y.clone(), 1.0, 1.0, 1.0).expect("dataset");
        let eps = [0.0, 0.01, 0.05, 0.25][rng.gen_range(0..4)];
        let m = fit_svr(&data, rng.gen_range(0.3..3.0), 10f64.powf(rng.gen_range(-4.0..0.0)), eps).expect("svr fit");
        let c = m.box_bound();
        kkt = kkt.max(max_abs(kkt_violations(&m, &data).expect("kkt")));
        bound &= m.alphas().iter().all(|a| a.abs() <= c + 1e-12);
        sum = sum.max(m.alphas().iter().sum::<f64>().abs());
        let pred = m.predict_batch(data.inputs()).expect("predict");
        for ((f, yv), a) in pred.iter().zip(&y).zip(m.alphas()) {
            if (yv - f).abs() < eps - 1e-3 {
                tube &= *a == 0.0;
            }
        }
    }
    vec![
        Check::new("svr KKT conditions", kkt <= 1e-3, format!("max violation {kkt:.3e} (limit 1e-3)")),
        Check::new("svr box bound", bound, "|beta| <= C + 1e-12".into()),
        Check::new("svr equality constraint", sum <= 1e-9, format!("max |sum beta| {sum:.3e} (limit 1e-9)")),
        Check::new("svr tube property", tube, "points strictly inside the tube carry zero weight".into()),
    ]
}

pub fn embedding_invariants() -> Vec<Check> {
    let mut counts = true;
    for len in 0..40 {
        for tau in 1..4 {
            for dim in 1..5 {
                for lf in 1..4 {
                    let brute = (0..len).filter(|&i| i >= (dim - 1) * tau && i + lf < len).count();
                    counts &= row_count(len, tau, dim, lf) == brute;
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut round_trip = true;
    for _ in 0..30 {
        let len = rng.gen_range(20..80);
        let (tau, dim, lf) = (rng.gen_range(1..4), rng.gen_range(1..5), rng.gen_range(1..4));
        let h = [0.01, 0.1, 1.0][rng.gen_range(0..3)];
        let values: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = SampledSignal::new(0.0, h, values.clone()).expect("signal");
        let Ok(d) = DelayDataset::build(&s, tau as f64 * h, dim, lf as f64 * h) else { continue };
        let at = |time: f64| values[(time / h).round() as usize];
        for (i, row) in d.rows().enumerate() {
            let t = d.times()[i];
            round_trip &= row.iter().enumerate().all(|(k, v)| *v == at(t - (k * tau) as f64 * h));
            round_trip &= d.targets()[i] == at(t + lf as f64 * h);
        }
    }
    vec![
        Check::new("embedding row count vs enumeration", counts, "len < 40, tau < 4, dim < 5, t_f < 4".into()),
        Check::new("embedding rows read back from source", round_trip, "30 random signals".into()),
    ]
}

/// Mean sup-norm error of the CV-selected spline for each sampling density.
pub fn density_errors(densities: &[usize], seeds: u64, sigma: f64, span: f64) -> Vec<f64> {
    let truth = |t: f64| t.sin() + 0.5 * (2.3 * t + 0.4).sin();
    let fine: Vec<f64> = (0..=4000).map(|i| span * i as f64 / 4000.0).collect();
    let noise = Normal::new(0.0, sigma).expect("noise");
    densities
        .iter()
        .map(|&rho| {
            let n = (span * rho as f64).round() as usize + 1;
            let t: Vec<f64> = (0..n).map(|j| j as f64 / rho as f64).collect();
            let mut total = 0.0;
            for seed in 0..seeds {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let y: Vec<f64> = t.iter().map(|&t| truth(t) + noise.sample(&mut rng)).collect();
                let choice = select_lambda_cv(&t, &y, &default_lambda_grid(n), 5).expect("cv");
                let m = spline::fit(&t, &y, choice.best_lambda).expect("fit");
                total += max_abs(fine.iter().map(|&x| m.evaluate(x) - truth(x)));
            }
            total / seeds as f64
        })
        .collect()
}

pub fn density_trend() -> Check {
    let densities = [10, 40, 160];
    let errs = density_errors(&densities, 20, 0.2, 10.0);
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let detail = densities
        .iter()
        .zip(&errs)
        .map(|(d, e)| format!("{d}/unit: {e:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    Check::new("spline sup-norm error decreases with sampling density", decreasing, detail)
}

pub fn oracle_checks() -> Vec<Check> {
    vec![spline_oracle(), krr_oracle(), svr_oracle()]
}

pub fn invariant_checks() -> Vec<Check> {
    let mut out = spline_invariants();
    out.extend(kernel_invariants());
    out.extend(svr_invariants());
    out.extend(embedding_invariants());
    out
}

pub fn run_all() -> Vec<Check> {
    let mut out = oracle_checks();
    out.extend(invariant_checks());
    out.push(density_trend());
    out
}

/// Small sweep used to compare outputs across worker counts.
pub fn tiny_config(output_dir: &std::path::Path) -> crate::config::ExperimentConfig {
    use crate::config::{ExperimentConfig, System};
    let mut cfg = ExperimentConfig::defaults(System::MackeyGlass);
    cfg.name = "tiny".into();
    cfg.tau = 2.0;
    cfg.dim = 3;
    cfg.n_train = 80;
    cfg.n_test = 100;
    cfg.transient = 200.0;
    cfg.snr_list = vec![0.0, 0.2];
    cfg.tf_list = vec![1.0, 2.0];
    cfg.seeds = vec![1, 2];
    cfg.iterated = vec![splinekrr::predictor::Method::KrrNoisy];
    cfg.cv_grid.gamma_over_2d = vec![1.5, 10.0];
    cfg.cv_grid.lambda_reg = vec![1e-6, 1e-2];
    cfg.cv_grid.epsilon = vec![0.05];
    cfg.cv_grid.folds = 3;
    cfg.output_dir = output_dir.to_path_buf();
    cfg
}

/// Runs the same sweep with 1 and 4 workers and compares the written files byte for byte.
pub fn jobs_invariance(scratch: &std::path::Path) -> Check {
    let name = "run_experiment byte-identical for jobs 1 and 4";
    let outcome = (|| -> anyhow::Result<bool> {
        let mut files = Vec::new();
        for jobs in [1, 4] {
            let cfg = tiny_config(&scratch.join(format!("jobs{jobs}")));
            let out = crate::runner::run_experiment(&cfg, jobs)?;
            files.push((std::fs::read(&out.results_path)?, std::fs::read(&out.hash_log_path)?));
        }
        Ok(files[0] == files[1])
    })();
    match outcome {
        Ok(same) => Check::new(name, same, "results table and noise-hash log".into()),
        Err(e) => Check::new(name, false, format!("{e:#}")),
    }
}
