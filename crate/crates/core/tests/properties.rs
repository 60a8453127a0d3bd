use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splinekrr::embedding::{row_count, DelayDataset};
use splinekrr::kernel::{fit_svr, gram_matrix, kernel, kkt_violations, LossKind};
use splinekrr::selection::{cross_validate_with, CvGrid, CvOptions};
use splinekrr::signal::SampledSignal;
use splinekrr::{spline, Cholesky};

fn grid_from_gaps(gaps: &[f64]) -> Vec<f64> {
    let mut t = vec![0.0];
    for g in gaps {
        t.push(t.last().unwrap() + g);
    }
    t
}

fn sample_grid() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (4usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(0.05f64..1.0, n - 1).prop_map(|g| grid_from_gaps(&g)),
            prop::collection::vec(-2.0f64..2.0, n),
        )
    })
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spline_interpolates_at_zero_lambda((t, y) in sample_grid()) {
        let m = spline::fit(&t, &y, 0.0).unwrap();
        for (g, v) in m.fitted_values().iter().zip(&y) {
            prop_assert!((g - v).abs() <= 1e-9 * (1.0 + v.abs()));
        }
        for (tk, v) in t.iter().zip(&y) {
            prop_assert!((m.evaluate(*tk) - v).abs() <= 1e-9 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn spline_reproduces_affine_data(
        (t, _) in sample_grid(),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        log_lambda in -8.0f64..4.0,
    ) {
        let y: Vec<f64> = t.iter().map(|t| a + b * t).collect();
        let m = spline::fit(&t, &y, 10f64.powf(log_lambda)).unwrap();
        let scale = 1.0 + a.abs() + b.abs() * t.last().unwrap();
        for (g, v) in m.fitted_values().iter().zip(&y) {
            prop_assert!((g - v).abs() <= 1e-8 * scale);
        }
        prop_assert!(m.roughness() <= 1e-12 * scale * scale);
    }

    #[test]
    fn spline_smoother_is_linear(
        (t, y1) in sample_grid(),
        seed in any::<u64>(),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        log_lambda in -6.0f64..2.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y2: Vec<f64> = (0..t.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mix: Vec<f64> = y1.iter().zip(&y2).map(|(u, v)| a * u + b * v).collect();
        let lambda = 10f64.powf(log_lambda);
        let g1 = spline::fit(&t, &y1, lambda).unwrap();
        let g2 = spline::fit(&t, &y2, lambda).unwrap();
        let gm = spline::fit(&t, &mix, lambda).unwrap();
        for i in 0..t.len() {
            let expect = a * g1.fitted_values()[i] + b * g2.fitted_values()[i];
            prop_assert!((gm.fitted_values()[i] - expect).abs() <= 1e-10 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn spline_fit_trades_misfit_for_smoothness_monotonically((t, y) in sample_grid()) {
        let grid = spline::default_lambda_grid(t.len());
        let mut prev: Option<(f64, f64)> = None;
        for &lambda in &grid {
            let m = spline::fit(&t, &y, lambda).unwrap();
            let mse = m.objective(&y) - lambda * m.roughness();
            let rough = m.roughness();
            if let Some((pm, pr)) = prev {
                prop_assert!(mse >= pm - 1e-12 * (1.0 + pm));
                prop_assert!(rough <= pr + 1e-9 * (1.0 + pr));
            }
            prev = Some((mse, rough));
        }
    }

    #[test]
    fn row_count_matches_enumeration(
        len in 0usize..60,
        tau_steps in 1usize..5,
        dim in 1usize..6,
        lookahead_steps in 1usize..5,
    ) {
        let mut brute = 0;
        for i in 0..len {
            let oldest_ok = i >= (dim - 1) * tau_steps;
            let target_ok = i + lookahead_steps < len;
            if oldest_ok && target_ok {
                brute += 1;
            }
        }
        prop_assert_eq!(row_count(len, tau_steps, dim, lookahead_steps), brute);
    }

    #[test]
    fn embedding_rows_read_back_from_source(
        len in 20usize..80,
        tau_steps in 1usize..4,
        dim in 1usize..5,
        lookahead_steps in 1usize..4,
        seed in any::<u64>(),
        h in prop::sample::select(vec![0.01, 0.1, 0.5, 1.0]),
    ) {
        prop_assume!(row_count(len, tau_steps, dim, lookahead_steps) > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = SampledSignal::new(0.5, h, values.clone()).unwrap();
        let d = DelayDataset::build(&s, tau_steps as f64 * h, dim, lookahead_steps as f64 * h).unwrap();
        prop_assert_eq!(d.len(), row_count(len, tau_steps, dim, lookahead_steps));
        let lookup = |time: f64| values[((time - 0.5) / h).round() as usize];
        for (i, row) in d.rows().enumerate() {
            let t = d.times()[i];
            for (k, v) in row.iter().enumerate() {
                prop_assert_eq!(*v, lookup(t - (k * tau_steps) as f64 * h));
            }
            prop_assert_eq!(d.targets()[i], lookup(t + lookahead_steps as f64 * h));
        }
    }

    #[test]
    fn gram_is_symmetric_and_positive_definite_with_jitter(
        seed in any::<u64>(),
        n in 2usize..40,
        dim in 1usize..5,
        gamma in 0.1f64..5.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_points(&mut rng, n, dim);
        let data = DelayDataset::from_rows(rows.clone(), vec![0.0; n], 1.0, 1.0, 1.0).unwrap();
        let mut g = gram_matrix(&data, gamma);
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(g[i * n + j], g[j * n + i]);
                prop_assert!((g[i * n + j] - kernel(gamma, &rows[i], &rows[j])).abs() <= 1e-14);
            }
            g[i * n + i] += 1e-10;
        }
        prop_assert!(Cholesky::factor(g, n).is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn svr_solution_satisfies_kkt_and_tube(
        seed in any::<u64>(),
        n in 5usize..40,
        gamma in 0.3f64..3.0,
        log_lambda in -4.0f64..0.0,
        epsilon in prop::sample::select(vec![0.0, 0.01, 0.05, 0.25]),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_points(&mut rng, n, 2);
        let y: Vec<f64> = rows.iter().map(|r| (2.0 * r[0]).sin() + r[1] * r[1] + rng.gen_range(-0.1..0.1)).collect();
        let data = DelayDataset::from_rows(rows, y.clone(), 1.0, 1.0, 1.0).unwrap();
        let m = fit_svr(&data, gamma, 10f64.powf(log_lambda), epsilon).unwrap();
        let c = m.box_bound();
        prop_assert!(m.alphas().iter().all(|a| a.abs() <= c + 1e-12));
        prop_assert!(m.alphas().iter().sum::<f64>().abs() <= 1e-9);
        for v in kkt_violations(&m, &data).unwrap() {
            prop_assert!(v <= 1e-3, "KKT violation {}", v);
        }
        let pred = m.predict_batch(data.inputs()).unwrap();
        for ((f, yv), a) in pred.iter().zip(&y).zip(m.alphas()) {
            if (yv - f).abs() < epsilon - 1e-3 {
                prop_assert_eq!(*a, 0.0);
            }
        }
    }
}

#[test]
fn spline_objective_is_locally_minimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t: Vec<f64> = grid_from_gaps(&(0..59).map(|_| rng.gen_range(0.05..0.3)).collect::<Vec<_>>());
    let y: Vec<f64> = t.iter().map(|t| t.sin() + rng.gen_range(-0.3..0.3)).collect();
    for lambda in [1e-4, 1e-2, 1.0] {
        let fitted = spline::fit(&t, &y, lambda).unwrap();
        let best = fitted.objective(&y);
        for _ in 0..100 {
            let values: Vec<f64> = fitted.fitted_values().iter().map(|g| g + rng.gen_range(-1e-3..1e-3)).collect();
            // The natural interpolant of the perturbed values is the smoothest curve through them.
            let candidate = spline::fit(&t, &values, 0.0).unwrap();
            let mse = values.iter().zip(&y).map(|(g, v)| (g - v).powi(2)).sum::<f64>() / y.len() as f64;
            let obj = mse + lambda * candidate.roughness();
            assert!(obj >= best - 1e-12 * best, "lambda {lambda}: {obj} < {best}");
        }
    }
}

fn sine_dataset(n: usize, seed: u64) -> DelayDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: Vec<f64> = (0..n + 2).map(|i| (0.3 * i as f64).sin() + rng.gen_range(-0.1..0.1)).collect();
    let rows = (1..n + 1).map(|i| vec![u[i], u[i - 1]]).collect();
    let y = (1..n + 1).map(|i| u[i + 1]).collect();
    DelayDataset::from_rows(rows, y, 1.0, 1.0, 1.0).unwrap()
}

#[test]
fn cv_table_is_identical_serial_and_parallel() {
    let data = sine_dataset(120, 3);
    let grid = CvGrid::default();
    for loss in [LossKind::Squared, LossKind::EpsilonInsensitive] {
        let serial = cross_validate_with(&data, &grid, loss, CvOptions { parallel: false, ..Default::default() }).unwrap();
        let parallel = cross_validate_with(&data, &grid, loss, CvOptions::default()).unwrap();
        assert_eq!(serial, parallel);
        assert_eq!(serial.table.len(), grid.cell_count(loss));
        let min = serial.table.iter().map(|c| c.mean_score).fold(f64::INFINITY, f64::min);
        assert!(serial.best.mean_score <= min * (1.0 + 1e-9) + 1e-15);
    }
}

#[test]
fn cv_best_cell_matches_looped_refits() {
    use splinekrr::kernel::fit_krr;
    use splinekrr::selection::{fold_ranges, gamma_from_grid};
    let data = sine_dataset(100, 9);
    let grid = CvGrid { gamma_over_2d: vec![0.1, 10.0], lambda_reg: vec![1e-6, 1e-2], epsilon: vec![], folds: 4 };
    let out = cross_validate_with(&data, &grid, LossKind::Squared, CvOptions::default()).unwrap();

    let mut best = (f64::INFINITY, 0.0, 0.0);
    for &g in &grid.gamma_over_2d {
        for &l in &grid.lambda_reg {
            let mut total = 0.0;
            for r in fold_ranges(data.len(), grid.folds) {
                let train: Vec<usize> = (0..data.len()).filter(|i| !r.contains(i)).collect();
                let m = fit_krr(&data.subset(&train), gamma_from_grid(g, 2), l).unwrap();
                let mse = r.clone().map(|i| (m.predict(data.row(i)).unwrap() - data.targets()[i]).powi(2)).sum::<f64>()
                    / r.len() as f64;
                total += mse;
            }
            let score = total / grid.folds as f64;
            if score < best.0 {
                best = (score, g, l);
            }
        }
    }
    assert_eq!((out.best.gamma_over_2d, out.best.lambda_reg), (best.1, best.2));
    assert!((out.best.mean_score - best.0).abs() <= 1e-10 * best.0);
}
