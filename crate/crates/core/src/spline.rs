//! Natural cubic smoothing splines.
//!
//! The fitted spline minimizes
//!
//! ```text
//! (1/M) Σ (u(t_j) - y_j)^2 + λ ∫ u''(t)^2 dt
//! ```
//!
//! over `W^{2,2}`. The minimizer is a natural cubic spline with knots at the
//! data; it is computed with the Reinsch formulation, where the second
//! derivatives at interior knots solve the pentadiagonal system
//! `(R + p QᵀQ) γ = Qᵀ y` with `p = M λ`, and the fitted values are
//! `g = y - p Q γ`. The system is factored as a banded `LDLᵀ` in `O(M)`.

use crate::error::{Error, Result};

/// A fitted natural cubic smoothing spline.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineModel {
    knots: Vec<f64>,
    fitted_values: Vec<f64>,
    second_derivs: Vec<f64>,
    lambda: f64,
}

impl SplineModel {
    /// Assembles a spline from knot values and second derivatives.
    ///
    /// The end second derivatives must be zero (natural boundary).
    pub fn from_parts(
        knots: Vec<f64>,
        fitted_values: Vec<f64>,
        second_derivs: Vec<f64>,
        lambda: f64,
    ) -> Result<Self> {
        validate_grid(&knots, 2)?;
        if fitted_values.len() != knots.len() || second_derivs.len() != knots.len() {
            return Err(Error::InvalidData("knot, value and second-derivative counts differ".into()));
        }
        if second_derivs[0] != 0.0 || second_derivs[knots.len() - 1] != 0.0 {
            return Err(Error::InvalidData("natural spline needs zero end second derivatives".into()));
        }
        Ok(Self { knots, fitted_values, second_derivs, lambda })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn fitted_values(&self) -> &[f64] {
        &self.fitted_values
    }

    pub fn second_derivs(&self) -> &[f64] {
        &self.second_derivs
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn first_knot(&self) -> f64 {
        self.knots[0]
    }

    pub fn last_knot(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Spline value at `t`; linear extrapolation outside the knot range.
    pub fn evaluate(&self, t: f64) -> f64 {
        let n = self.knots.len();
        let (k, g, m) = (&self.knots, &self.fitted_values, &self.second_derivs);
        if t <= k[0] {
            let h = k[1] - k[0];
            let slope = (g[1] - g[0]) / h - h * m[1] / 6.0;
            return g[0] + slope * (t - k[0]);
        }
        if t >= k[n - 1] {
            let h = k[n - 1] - k[n - 2];
            let slope = (g[n - 1] - g[n - 2]) / h + h * m[n - 2] / 6.0;
            return g[n - 1] + slope * (t - k[n - 1]);
        }
        // first knot strictly greater than t, minus one
        let i = k.partition_point(|&x| x <= t) - 1;
        let h = k[i + 1] - k[i];
        let a = t - k[i];
        let b = k[i + 1] - t;
        if a == 0.0 {
            return g[i];
        }
        (a * g[i + 1] + b * g[i]) / h
            - a * b / 6.0 * ((1.0 + a / h) * m[i + 1] + (1.0 + b / h) * m[i])
    }

    pub fn evaluate_many(&self, ts: &[f64]) -> Vec<f64> {
        ts.iter().map(|&t| self.evaluate(t)).collect()
    }

    /// `∫ u''(t)^2 dt` over the knot range (u'' is piecewise linear).
    pub fn roughness(&self) -> f64 {
        self.knots
            .windows(2)
            .zip(self.second_derivs.windows(2))
            .map(|(k, m)| (k[1] - k[0]) / 3.0 * (m[0] * m[0] + m[0] * m[1] + m[1] * m[1]))
            .sum()
    }

    /// Penalized objective `(1/M) Σ (u(t_j) - y_j)^2 + λ ∫ u''^2` for data `y` at the knots.
    pub fn objective(&self, y: &[f64]) -> f64 {
        let m = y.len() as f64;
        let mse = self.fitted_values.iter().zip(y).map(|(g, y)| (g - y).powi(2)).sum::<f64>() / m;
        mse + self.lambda * self.roughness()
    }

    /// Text table of `(knot, fitted_value, second_derivative)` rows.
    pub fn to_table(&self) -> String {
        let mut out = format!("# lambda = {}\n# knot fitted_value second_derivative\n", self.lambda);
        for i in 0..self.knots.len() {
            out.push_str(&format!(
                "{} {} {}\n",
                self.knots[i], self.fitted_values[i], self.second_derivs[i]
            ));
        }
        out
    }
}

fn validate_grid(times: &[f64], min_len: usize) -> Result<()> {
    if times.len() < min_len {
        return Err(Error::InsufficientData(format!(
            "need at least {min_len} points, got {}",
            times.len()
        )));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidGrid("non-finite time".into()));
    }
    if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid(format!(
            "times not strictly increasing at index {}",
            i + 1
        )));
    }
    Ok(())
}

/// Fits the natural cubic smoothing spline with smoothing parameter `lambda`.
pub fn fit(times: &[f64], y: &[f64], lambda: f64) -> Result<SplineModel> {
    validate_grid(times, 3)?;
    if y.len() != times.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), got: y.len() });
    }
    if let Some(j) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidData(format!("observation {j} is not finite")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }

    let n = times.len();
    let m = n - 2;
    let p = n as f64 * lambda;
    let h: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();

    // Column j of Q (interior knot j + 1) has entries at rows j, j+1, j+2.
    let q: Vec<[f64; 3]> = (0..m)
        .map(|j| {
            let (h0, h1) = (h[j], h[j + 1]);
            [1.0 / h0, -1.0 / h0 - 1.0 / h1, 1.0 / h1]
        })
        .collect();

    // Symmetric pentadiagonal matrix R + p QᵀQ, stored by row as (diag, sub1, sub2).
    let mut band = vec![[0.0f64; 3]; m];
    for j in 0..m {
        let c = q[j];
        band[j][0] = (h[j] + h[j + 1]) / 3.0 + p * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
        if j >= 1 {
            let b = q[j - 1];
            band[j][1] = h[j] / 6.0 + p * (b[1] * c[0] + b[2] * c[1]);
        }
        if j >= 2 {
            band[j][2] = p * (q[j - 2][2] * c[0]);
        }
    }

    let rhs: Vec<f64> = (0..m).map(|j| q[j][0] * y[j] + q[j][1] * y[j + 1] + q[j][2] * y[j + 2]).collect();
    let gamma = solve_pentadiagonal(&mut band, rhs)?;

    let mut fitted = y.to_vec();
    if p != 0.0 {
        for j in 0..m {
            for (r, qv) in q[j].iter().enumerate() {
                fitted[j + r] -= p * qv * gamma[j];
            }
        }
    }

    let mut second = Vec::with_capacity(n);
    second.push(0.0);
    second.extend_from_slice(&gamma);
    second.push(0.0);

    Ok(SplineModel { knots: times.to_vec(), fitted_values: fitted, second_derivs: second, lambda })
}

/// In-place banded `LDLᵀ` factorization and solve for a symmetric positive-definite
/// matrix with two sub-diagonals; `band[i] = (A[i][i], A[i][i-1], A[i][i-2])`.
fn solve_pentadiagonal(band: &mut [[f64; 3]], mut rhs: Vec<f64>) -> Result<Vec<f64>> {
    let m = band.len();
    // After factorization band[i] holds (d_i, l_{i,i-1}, l_{i,i-2}).
    for i in 0..m {
        let mut l2 = 0.0;
        if i >= 2 {
            l2 = band[i][2] / band[i - 2][0];
            band[i][2] = l2;
        }
        let mut l1 = 0.0;
        if i >= 1 {
            let mut a = band[i][1];
            if i >= 2 {
                a -= l2 * band[i - 2][0] * band[i - 1][1];
            }
            l1 = a / band[i - 1][0];
            band[i][1] = l1;
        }
        let mut d = band[i][0];
        if i >= 1 {
            d -= l1 * l1 * band[i - 1][0];
        }
        if i >= 2 {
            d -= l2 * l2 * band[i - 2][0];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Solver(format!("banded factorization broke down at row {i}")));
        }
        band[i][0] = d;
    }
    for i in 0..m {
        if i >= 1 {
            rhs[i] -= band[i][1] * rhs[i - 1];
        }
        if i >= 2 {
            rhs[i] -= band[i][2] * rhs[i - 2];
        }
    }
    for i in 0..m {
        rhs[i] /= band[i][0];
    }
    for i in (0..m).rev() {
        if i + 1 < m {
            rhs[i] -= band[i + 1][1] * rhs[i + 1];
        }
        if i + 2 < m {
            rhs[i] -= band[i + 2][2] * rhs[i + 2];
        }
    }
    Ok(rhs)
}

/// The smoothing parameter `(ln M / M)^(2m / (2m + 1))` for `M` data points and
/// derivative order `m`.
pub fn compute_lemma1_lambda(n_points: usize, m: u32) -> f64 {
    let big_m = n_points as f64;
    let exponent = lambda_exponent(m);
    (big_m.ln() / big_m).powf(exponent)
}

pub(crate) fn lambda_exponent(m: u32) -> f64 {
    let m = m as f64;
    2.0 * m / (2.0 * m + 1.0)
}

/// 25 logarithmically spaced candidates from `1e-8 s` to `1e2 s`, where `s`
/// is [`compute_lemma1_lambda`] for `n_points` and `m = 2`.
pub fn default_lambda_grid(n_points: usize) -> Vec<f64> {
    let s = compute_lemma1_lambda(n_points.max(2), 2);
    log_space(1e-8 * s, 1e2 * s, 25)
}

pub(crate) fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
}

/// Outcome of cross-validated λ selection.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSelection {
    pub best_lambda: f64,
    pub best_score: f64,
    /// `(lambda, mean CV score)` in grid order.
    pub scores: Vec<(f64, f64)>,
}

/// Selects λ by k-fold cross-validation with interleaved folds (point `j` is in
/// fold `j mod folds`). Scores are per-fold held-out MSE averaged over folds.
/// Scores equal to within `1e-12` of the data's mean square are ties and go
/// to the larger λ.
pub fn select_lambda_cv(times: &[f64], y: &[f64], grid: &[f64], folds: usize) -> Result<LambdaSelection> {
    if folds < 2 {
        return Err(Error::InvalidParameter(format!("folds must be >= 2, got {folds}")));
    }
    if grid.is_empty() {
        return Err(Error::InvalidParameter("lambda grid is empty".into()));
    }
    if y.len() != times.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), got: y.len() });
    }
    validate_grid(times, 1)?;

    let n = times.len();
    let mut split = Vec::with_capacity(folds);
    for f in 0..folds {
        let (mut tt, mut ty, mut vt, mut vy) = (vec![], vec![], vec![], vec![]);
        for j in 0..n {
            if j % folds == f {
                vt.push(times[j]);
                vy.push(y[j]);
            } else {
                tt.push(times[j]);
                ty.push(y[j]);
            }
        }
        if tt.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "fold {f} leaves {} training points; need 3",
                tt.len()
            )));
        }
        split.push((tt, ty, vt, vy));
    }

    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let mut total = 0.0;
        let mut used = 0usize;
        for (tt, ty, vt, vy) in &split {
            if vt.is_empty() {
                continue;
            }
            let model = fit(tt, ty, lambda)?;
            let mse = vt
                .iter()
                .zip(vy)
                .map(|(&t, &v)| (model.evaluate(t) - v).powi(2))
                .sum::<f64>()
                / vt.len() as f64;
            total += mse;
            used += 1;
        }
        scores.push((lambda, total / used as f64));
    }

    let mean_square = y.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let tie_tol = 1e-12 * mean_square;
    let (mut best_lambda, mut best_score) = scores[0];
    for &(lambda, score) in &scores[1..] {
        if score < best_score - tie_tol || ((score - best_score).abs() <= tie_tol && lambda > best_lambda) {
            best_lambda = lambda;
            best_score = score;
        }
    }
    Ok(LambdaSelection { best_lambda, best_score, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 * 0.5).collect()
    }

    #[test]
    fn zero_lambda_interpolates() {
        let t = grid(12);
        let y: Vec<f64> = t.iter().map(|x| (x * 1.3).sin() + 0.1 * x).collect();
        let s = fit(&t, &y, 0.0).unwrap();
        assert_eq!(s.fitted_values(), &y[..]);
        for (tk, yk) in t.iter().zip(&y) {
            assert_eq!(s.evaluate(*tk), *yk);
        }
    }

    #[test]
    fn affine_data_is_reproduced() {
        let t = grid(20);
        let y: Vec<f64> = t.iter().map(|x| 2.0 - 0.75 * x).collect();
        for lambda in [0.0, 1e-3, 1.0, 1e6] {
            let s = fit(&t, &y, lambda).unwrap();
            for (g, v) in s.fitted_values().iter().zip(&y) {
                assert_relative_eq!(*g, *v, epsilon = 1e-10, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn natural_boundary_and_extrapolation() {
        let t = grid(6);
        let y = vec![0.0, 1.0, 0.5, 2.0, 1.0, 3.0];
        let s = fit(&t, &y, 0.01).unwrap();
        assert_eq!(s.second_derivs()[0], 0.0);
        assert_eq!(*s.second_derivs().last().unwrap(), 0.0);
        let end = s.last_knot();
        let eps = 1e-6;
        let slope = (s.evaluate(end) - s.evaluate(end - eps)) / eps;
        let beyond = s.evaluate(end + 2.0);
        assert_relative_eq!(beyond, s.evaluate(end) + 2.0 * slope, epsilon = 1e-4);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(fit(&[0.0, 1.0, 1.0], &[1.0, 2.0, 3.0], 0.1), Err(Error::InvalidGrid(_))));
        assert!(matches!(fit(&[0.0, 1.0, 2.0], &[1.0, f64::NAN, 3.0], 0.1), Err(Error::InvalidData(_))));
        assert!(matches!(fit(&[0.0, 1.0], &[1.0, 2.0], 0.1), Err(Error::InsufficientData(_))));
        assert!(fit(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0], -1.0).is_err());
    }

    #[test]
    fn asymptotic_lambda_values() {
        // M = e gives (1/e)^(4/5)
        let big_m = std::f64::consts::E;
        let direct = (big_m.ln() / big_m).powf(0.8);
        assert_relative_eq!(direct, 0.449_328_964_117_221_6, max_relative = 1e-12);
        // 30-digit reference: 0.018683986926612063732...
        assert_relative_eq!(compute_lemma1_lambda(1000, 2), 0.018_683_986_926_612_06, max_relative = 1e-12);
        assert_eq!(lambda_exponent(2), 0.8);
    }

    #[test]
    fn default_grid_spans_ten_decades() {
        let g = default_lambda_grid(1000);
        let s = compute_lemma1_lambda(1000, 2);
        assert_eq!(g.len(), 25);
        assert_relative_eq!(g[0], 1e-8 * s, max_relative = 1e-12);
        assert_relative_eq!(g[24], 1e2 * s, max_relative = 1e-12);
    }

    #[test]
    fn cv_single_candidate() {
        let t = grid(15);
        let y: Vec<f64> = t.iter().map(|x| x.sin()).collect();
        let sel = select_lambda_cv(&t, &y, &[0.3], 5).unwrap();
        assert_eq!(sel.best_lambda, 0.3);
        assert_eq!(sel.scores.len(), 1);
    }

    #[test]
    fn cv_affine_ties_go_to_largest() {
        let t = grid(30);
        let y: Vec<f64> = t.iter().map(|x| 1.0 + 3.0 * x).collect();
        let g = [1e-6, 1e-3, 1.0, 1e3];
        let sel = select_lambda_cv(&t, &y, &g, 5).unwrap();
        assert_eq!(sel.best_lambda, 1e3);
        assert!(sel.best_score < 1e-20);
    }

    #[test]
    fn cv_needs_three_training_points() {
        let t = grid(4);
        let y = vec![0.0; 4];
        assert!(matches!(select_lambda_cv(&t, &y, &[1.0], 2), Err(Error::InsufficientData(_))));
        assert!(select_lambda_cv(&t, &y, &[1.0], 1).is_err());
        assert!(select_lambda_cv(&t, &y, &[], 2).is_err());
    }

    #[test]
    fn table_lists_every_knot() {
        let s = fit(&grid(5), &[1.0, 0.0, 2.0, 1.0, 0.5], 0.1).unwrap();
        let table = s.to_table();
        assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 5);
    }
}
