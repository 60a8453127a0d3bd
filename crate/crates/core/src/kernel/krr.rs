use super::{check_gamma, check_lambda, gram_matrix, KernelModel, LossKind};
use crate::embedding::DelayDataset;
use crate::error::{Error, Result};
use crate::linalg::Cholesky;

/// Kernel ridge regression: minimizes `(1/M) Σ (f(x_j) - y_j)² + Λ ‖f‖²_K`.
pub fn fit_krr(data: &DelayDataset, gamma: f64, lambda_reg: f64) -> Result<KernelModel> {
    check_gamma(gamma)?;
    check_lambda(lambda_reg)?;
    if data.is_empty() {
        return Err(Error::InsufficientData("kernel ridge regression needs at least one row".into()));
    }
    fit_krr_gram(data, gram_matrix(data, gamma), gamma, lambda_reg)
}

/// As [`fit_krr`], with the Gram matrix of `data` already computed.
pub(crate) fn fit_krr_gram(data: &DelayDataset, mut gram: Vec<f64>, gamma: f64, lambda_reg: f64) -> Result<KernelModel> {
    check_lambda(lambda_reg)?;
    let m = data.len();
    let shift = m as f64 * lambda_reg;
    for i in 0..m {
        gram[i * m + i] += shift;
    }
    let alphas = Cholesky::factor(gram, m)?.solve(data.targets());
    if alphas.iter().any(|a| !a.is_finite()) {
        return Err(Error::Solver("non-finite dual coefficients".into()));
    }
    KernelModel::new(data.inputs().to_vec(), data.dim(), alphas, gamma, 0.0, LossKind::Squared, lambda_reg, 0.0)
}
