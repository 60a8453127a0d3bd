//! Gaussian-kernel regressors in the reproducing kernel Hilbert space of
//! `K_γ(x, y) = exp(-‖x - y‖² / γ²)`.
//!
//! Both fits use the `1/M`-scaled data term: kernel ridge regression solves
//! `(G + M Λ I) α = y`, and ε-SVR uses the box constraint `C = 1 / (2 M Λ)`.

mod krr;
mod svr;

pub use krr::fit_krr;
pub use svr::{dual_objective, fit_svr, fit_svr_with, kkt_violations, SvrOptions};

pub(crate) use krr::fit_krr_gram;
pub(crate) use svr::fit_svr_gram;

use std::fmt;
use std::str::FromStr;

use crate::embedding::DelayDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LossKind {
    Squared,
    EpsilonInsensitive,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Squared => "squared",
            LossKind::EpsilonInsensitive => "epsilon_insensitive",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(LossKind::Squared),
            "epsilon_insensitive" => Ok(LossKind::EpsilonInsensitive),
            other => Err(Error::InvalidParameter(format!("unknown loss kind '{other}'"))),
        }
    }
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `exp(-‖x - y‖² / γ²)`.
pub fn kernel(gamma: f64, x: &[f64], y: &[f64]) -> f64 {
    (-sq_dist(x, y) / (gamma * gamma)).exp()
}

/// Pairwise squared distances between the rows of `inputs` (row-major, `dim` columns).
pub(crate) fn sq_distances(inputs: &[f64], dim: usize) -> Vec<f64> {
    let n = inputs.len() / dim;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let xi = &inputs[i * dim..(i + 1) * dim];
        for j in 0..i {
            let d = sq_dist(xi, &inputs[j * dim..(j + 1) * dim]);
            out[i * n + j] = d;
            out[j * n + i] = d;
        }
    }
    out
}

/// Gram matrix of `sub` rows drawn from a precomputed squared-distance matrix of size `n`.
pub(crate) fn gram_from_sq(sq: &[f64], n: usize, sub: &[usize], gamma: f64) -> Vec<f64> {
    let m = sub.len();
    let inv = 1.0 / (gamma * gamma);
    let mut g = vec![0.0; m * m];
    for (a, &i) in sub.iter().enumerate() {
        g[a * m + a] = 1.0;
        for (b, &j) in sub[..a].iter().enumerate() {
            let v = (-sq[i * n + j] * inv).exp();
            g[a * m + b] = v;
            g[b * m + a] = v;
        }
    }
    g
}

/// Full symmetric Gram matrix of the dataset rows.
pub fn gram_matrix(data: &DelayDataset, gamma: f64) -> Vec<f64> {
    let n = data.len();
    let sq = sq_distances(data.inputs(), data.dim());
    let all: Vec<usize> = (0..n).collect();
    gram_from_sq(&sq, n, &all, gamma)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

fn check_lambda(lambda_reg: f64) -> Result<()> {
    if !(lambda_reg > 0.0) || !lambda_reg.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda_reg must be positive, got {lambda_reg}")));
    }
    Ok(())
}

/// A fitted representer expansion `f(x) = Σ α_i K_γ(x_i, x) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    support: Vec<f64>,
    dim: usize,
    alphas: Vec<f64>,
    gamma: f64,
    bias: f64,
    loss: LossKind,
    lambda_reg: f64,
    epsilon: f64,
}

impl KernelModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        support: Vec<f64>,
        dim: usize,
        alphas: Vec<f64>,
        gamma: f64,
        bias: f64,
        loss: LossKind,
        lambda_reg: f64,
        epsilon: f64,
    ) -> Result<Self> {
        check_gamma(gamma)?;
        if dim == 0 || support.len() != dim * alphas.len() {
            return Err(Error::DimensionMismatch { expected: dim * alphas.len(), got: support.len() });
        }
        Ok(Self { support, dim, alphas, gamma, bias, loss, lambda_reg, epsilon })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn support_point(&self, i: usize) -> &[f64] {
        &self.support[i * self.dim..(i + 1) * self.dim]
    }

    pub fn n_support(&self) -> usize {
        self.alphas.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    pub fn lambda_reg(&self) -> f64 {
        self.lambda_reg
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Box bound `C = 1 / (2 M Λ)` of the ε-SVR dual.
    pub fn box_bound(&self) -> f64 {
        1.0 / (2.0 * self.n_support() as f64 * self.lambda_reg)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(self.predict_unchecked(x))
    }

    fn predict_unchecked(&self, x: &[f64]) -> f64 {
        let inv = 1.0 / (self.gamma * self.gamma);
        let mut acc = 0.0;
        for (a, sv) in self.alphas.iter().zip(self.support.chunks_exact(self.dim)) {
            if *a != 0.0 {
                acc += a * (-sq_dist(sv, x) * inv).exp();
            }
        }
        acc + self.bias
    }

    /// Row-wise prediction over a row-major input buffer.
    pub fn predict_batch(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        if !inputs.len().is_multiple_of(self.dim) {
            return Err(Error::DimensionMismatch { expected: self.dim, got: inputs.len() % self.dim });
        }
        Ok(inputs.chunks_exact(self.dim).map(|x| self.predict_unchecked(x)).collect())
    }

    /// `‖f - b‖²_K = αᵀ G α`.
    pub fn rkhs_norm_sq(&self) -> f64 {
        let n = self.n_support();
        let mut total = 0.0;
        for i in 0..n {
            if self.alphas[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                if self.alphas[j] != 0.0 {
                    total += self.alphas[i]
                        * self.alphas[j]
                        * kernel(self.gamma, self.support_point(i), self.support_point(j));
                }
            }
        }
        total
    }

    /// Text form: `key = value` header lines, then one row per support point
    /// holding `alpha` followed by the coordinates.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("loss_kind = {}\n", self.loss));
        out.push_str(&format!("gamma = {}\n", self.gamma));
        out.push_str(&format!("lambda = {}\n", self.lambda_reg));
        out.push_str(&format!("epsilon = {}\n", self.epsilon));
        out.push_str(&format!("bias = {}\n", self.bias));
        out.push_str(&format!("dim = {}\n", self.dim));
        out.push_str(&format!("count = {}\n", self.n_support()));
        for i in 0..self.n_support() {
            let mut cells = vec![self.alphas[i].to_string()];
            cells.extend(self.support_point(i).iter().map(|v| v.to_string()));
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut header = std::collections::HashMap::new();
        for _ in 0..7 {
            let (idx, line) = lines.next().ok_or(Error::Parse { line: 0, message: "truncated header".into() })?;
            let (k, v) = line
                .split_once('=')
                .ok_or(Error::Parse { line: idx + 1, message: "expected 'key = value'".into() })?;
            header.insert(k.trim().to_string(), (idx + 1, v.trim().to_string()));
        }
        let get = |key: &str| -> Result<(usize, String)> {
            header.get(key).cloned().ok_or(Error::Parse { line: 0, message: format!("missing '{key}'") })
        };
        let num = |key: &str| -> Result<f64> {
            let (line, v) = get(key)?;
            v.parse().map_err(|_| Error::Parse { line, message: format!("bad number for {key}") })
        };
        let int = |key: &str| -> Result<usize> {
            let (line, v) = get(key)?;
            v.parse().map_err(|_| Error::Parse { line, message: format!("bad integer for {key}") })
        };
        let loss: LossKind = get("loss_kind")?.1.parse()?;
        let dim = int("dim")?;
        let count = int("count")?;
        let mut alphas = Vec::with_capacity(count);
        let mut support = Vec::with_capacity(count * dim);
        for (idx, line) in lines {
            let vals: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
            let vals = vals.map_err(|_| Error::Parse { line: idx + 1, message: "bad number".into() })?;
            if vals.len() != dim + 1 {
                return Err(Error::Parse { line: idx + 1, message: format!("expected {} columns", dim + 1) });
            }
            alphas.push(vals[0]);
            support.extend_from_slice(&vals[1..]);
        }
        if alphas.len() != count {
            return Err(Error::Parse { line: 0, message: format!("expected {count} rows, found {}", alphas.len()) });
        }
        Self::new(support, dim, alphas, num("gamma")?, num("bias")?, loss, num("lambda")?, num("epsilon")?)
    }
}
