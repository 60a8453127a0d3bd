//! k-fold cross-validated grid search over kernel hyperparameters.
//!
//! Folds are contiguous blocks of time-ordered rows. Grid values for the
//! kernel width are given as `g = γ²/(2D)`, so the kernel is
//! `exp(-‖x - y‖² / (2 D g))`.

use rayon::prelude::*;

use crate::embedding::DelayDataset;
use crate::error::{Error, Result};
use crate::kernel::{fit_krr_gram, fit_svr_gram, gram_from_sq, sq_distances, LossKind, SvrOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct CvGrid {
    pub gamma_over_2d: Vec<f64>,
    pub lambda_reg: Vec<f64>,
    /// Ignored for squared loss.
    pub epsilon: Vec<f64>,
    pub folds: usize,
}

impl Default for CvGrid {
    fn default() -> Self {
        Self {
            gamma_over_2d: vec![0.1, 1.5, 10.0, 50.0, 100.0],
            lambda_reg: vec![1e-10, 1e-6, 1e-2, 1e2],
            epsilon: vec![0.01, 0.05, 0.25],
            folds: 5,
        }
    }
}

impl CvGrid {
    pub fn validate(&self, loss: LossKind) -> Result<()> {
        if self.gamma_over_2d.is_empty() || self.lambda_reg.is_empty() {
            return Err(Error::InvalidParameter("gamma and lambda grids must be non-empty".into()));
        }
        if loss == LossKind::EpsilonInsensitive && self.epsilon.is_empty() {
            return Err(Error::InvalidParameter("epsilon grid must be non-empty for SVR".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidParameter(format!("folds must be >= 2, got {}", self.folds)));
        }
        if self.gamma_over_2d.iter().chain(&self.lambda_reg).any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter("gamma and lambda grid values must be positive".into()));
        }
        if self.epsilon.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidParameter("epsilon grid values must be >= 0".into()));
        }
        Ok(())
    }

    fn epsilons(&self, loss: LossKind) -> Vec<f64> {
        match loss {
            LossKind::Squared => vec![0.0],
            LossKind::EpsilonInsensitive => self.epsilon.clone(),
        }
    }

    /// Number of cells the search evaluates.
    pub fn cell_count(&self, loss: LossKind) -> usize {
        self.gamma_over_2d.len() * self.lambda_reg.len() * self.epsilons(loss).len()
    }
}

/// Kernel width for grid value `g` in dimension `dim`: `γ = sqrt(2 · dim · g)`.
pub fn gamma_from_grid(gamma_over_2d: f64, dim: usize) -> f64 {
    (2.0 * dim as f64 * gamma_over_2d).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvCell {
    pub gamma_over_2d: f64,
    pub gamma: f64,
    pub lambda_reg: f64,
    pub epsilon: f64,
    pub mean_score: f64,
    pub fold_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub loss: LossKind,
    pub best: CvCell,
    /// Every cell, in (γ, Λ, ε) grid order.
    pub table: Vec<CvCell>,
}

impl CvOutcome {
    pub fn to_table(&self) -> String {
        let folds = self.table.first().map_or(0, |c| c.fold_scores.len());
        let mut out = String::from("# kernel = exp(-|x-y|^2 / (2 D gamma_over_2D))\n");
        let mut header = vec!["gamma_over_2D".to_string(), "lambda".into(), "epsilon".into(), "mean_cv_mse".into()];
        header.extend((0..folds).map(|f| format!("fold_{f}")));
        out.push_str(&header.join(","));
        out.push('\n');
        for c in &self.table {
            let mut cells = vec![
                c.gamma_over_2d.to_string(),
                c.lambda_reg.to_string(),
                c.epsilon.to_string(),
                c.mean_score.to_string(),
            ];
            cells.extend(c.fold_scores.iter().map(|s| s.to_string()));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvOptions {
    /// Evaluate grid cells on the rayon pool. Results do not depend on it.
    pub parallel: bool,
    pub svr: SvrOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self { parallel: true, svr: SvrOptions::default() }
    }
}

/// Contiguous fold boundaries: fold `f` holds rows `[f·n/k, (f+1)·n/k)`.
pub fn fold_ranges(n: usize, folds: usize) -> Vec<std::ops::Range<usize>> {
    (0..folds).map(|f| f * n / folds..(f + 1) * n / folds).collect()
}

pub fn cross_validate(data: &DelayDataset, grid: &CvGrid, loss: LossKind) -> Result<CvOutcome> {
    cross_validate_with(data, grid, loss, CvOptions::default())
}

pub fn cross_validate_with(
    data: &DelayDataset,
    grid: &CvGrid,
    loss: LossKind,
    options: CvOptions,
) -> Result<CvOutcome> {
    grid.validate(loss)?;
    let n = data.len();
    if n < grid.folds {
        return Err(Error::InsufficientData(format!("{n} rows cannot fill {} folds", grid.folds)));
    }
    let ranges = fold_ranges(n, grid.folds);
    if let Some(f) = ranges.iter().position(|r| r.len() == n) {
        return Err(Error::InsufficientData(format!("fold {f} leaves an empty training set")));
    }

    let sq = sq_distances(data.inputs(), data.dim());
    let epsilons = grid.epsilons(loss);
    let per_gamma = grid.lambda_reg.len() * epsilons.len();

    let n_gamma = grid.gamma_over_2d.len();
    let prep = |&(g, f): &(usize, usize)| -> FoldData {
        FoldData::new(data, &sq, &ranges[f], gamma_from_grid(grid.gamma_over_2d[g], data.dim()))
    };
    let fold_tasks: Vec<(usize, usize)> = (0..n_gamma).flat_map(|g| (0..grid.folds).map(move |f| (g, f))).collect();
    let prepared: Vec<FoldData> = if options.parallel {
        fold_tasks.par_iter().map(prep).collect()
    } else {
        fold_tasks.iter().map(prep).collect()
    };

    // A cell is scored fold by fold; after the first failed fold the rest are skipped and also recorded as +inf.
    let cell_tasks: Vec<(usize, usize, usize)> = (0..n_gamma)
        .flat_map(|g| {
            let eps_len = epsilons.len();
            (0..grid.lambda_reg.len()).flat_map(move |li| (0..eps_len).map(move |ei| (g, li, ei)))
        })
        .collect();
    let run = |&(g, li, ei): &(usize, usize, usize)| -> Vec<f64> {
        let mut scores = vec![f64::INFINITY; grid.folds];
        for (f, slot) in scores.iter_mut().enumerate() {
            let fd = &prepared[g * grid.folds + f];
            *slot = fd.score(grid.lambda_reg[li], epsilons[ei], loss, options.svr);
            if !slot.is_finite() {
                break;
            }
        }
        scores
    };
    let blocks: Vec<Vec<f64>> = if options.parallel {
        cell_tasks.par_iter().map(run).collect()
    } else {
        cell_tasks.iter().map(run).collect()
    };

    let mut table = Vec::with_capacity(grid.gamma_over_2d.len() * per_gamma);
    for (g, &g2d) in grid.gamma_over_2d.iter().enumerate() {
        for (li, &lambda) in grid.lambda_reg.iter().enumerate() {
            for (ei, &eps) in epsilons.iter().enumerate() {
                let cell = li * epsilons.len() + ei;
                let fold_scores = blocks[g * per_gamma + cell].clone();
                let mean_score = fold_scores.iter().sum::<f64>() / grid.folds as f64;
                table.push(CvCell {
                    gamma_over_2d: g2d,
                    gamma: gamma_from_grid(g2d, data.dim()),
                    lambda_reg: lambda,
                    epsilon: eps,
                    mean_score,
                    fold_scores,
                });
            }
        }
    }

    let mean_square = data.targets().iter().map(|v| v * v).sum::<f64>() / n as f64;
    let best = select_best(&table, 1e-12 * mean_square)
        .ok_or_else(|| Error::Solver("every grid cell failed".into()))?
        .clone();
    Ok(CvOutcome { loss, best, table })
}

/// Lowest mean score; scores within `tie_tol` prefer smaller γ, then larger Λ, then smaller ε.
fn select_best(table: &[CvCell], tie_tol: f64) -> Option<&CvCell> {
    let mut best: Option<&CvCell> = None;
    for cell in table.iter().filter(|c| c.mean_score.is_finite()) {
        best = match best {
            None => Some(cell),
            Some(b) => {
                let better = if cell.mean_score < b.mean_score - tie_tol {
                    true
                } else if (cell.mean_score - b.mean_score).abs() <= tie_tol {
                    (cell.gamma_over_2d, -cell.lambda_reg, cell.epsilon) < (b.gamma_over_2d, -b.lambda_reg, b.epsilon)
                } else {
                    false
                };
                Some(if better { cell } else { b })
            }
        };
    }
    best
}

/// Held-out MSE of every (Λ, ε) cell on one fold for one kernel width; failed fits score +∞.
#[allow(clippy::too_many_arguments)]
struct FoldData {
    train: DelayDataset,
    gram: Vec<f64>,
    cross: Vec<Vec<f64>>,
    targets: Vec<f64>,
    gamma: f64,
}

impl FoldData {
    fn new(data: &DelayDataset, sq: &[f64], valid: &std::ops::Range<usize>, gamma: f64) -> Self {
        let n = data.len();
        let train_idx: Vec<usize> = (0..n).filter(|i| !valid.contains(i)).collect();
        let inv = 1.0 / (gamma * gamma);
        let cross = valid
            .clone()
            .map(|v| train_idx.iter().map(|&i| (-sq[v * n + i] * inv).exp()).collect())
            .collect();
        Self {
            train: data.subset(&train_idx),
            gram: gram_from_sq(sq, n, &train_idx, gamma),
            cross,
            targets: data.targets()[valid.clone()].to_vec(),
            gamma,
        }
    }

    /// Validation MSE of one cell, `+inf` if the fit fails or the score is not finite.
    fn score(&self, lambda: f64, eps: f64, loss: LossKind, svr: SvrOptions) -> f64 {
        let model = match loss {
            LossKind::Squared => fit_krr_gram(&self.train, self.gram.clone(), self.gamma, lambda),
            LossKind::EpsilonInsensitive => fit_svr_gram(&self.train, &self.gram, self.gamma, lambda, eps, svr),
        };
        let Ok(model) = model else { return f64::INFINITY };
        let mut total = 0.0;
        for (row, y) in self.cross.iter().zip(&self.targets) {
            let f: f64 = row.iter().zip(model.alphas()).map(|(k, a)| k * a).sum::<f64>() + model.bias();
            total += (f - y) * (f - y);
        }
        let mse = total / self.targets.len() as f64;
        if mse.is_finite() {
            mse
        } else {
            f64::INFINITY
        }
    }
}
