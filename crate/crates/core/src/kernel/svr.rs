//! ε-SVR by sequential minimal optimization.
//!
//! The dual is posed over `2M` variables `(α, α*)`:
//!
//! ```text
//! min ½ aᵀ Q a + pᵀ a   s.t.  Σ s_t a_t = 0,  0 ≤ a_t ≤ C
//! ```
//!
//! with `s_t = +1` for `α`, `-1` for `α*`, `Q_ts = s_t s_s K(x_t, x_s)`,
//! `p = (ε - y, ε + y)`. Each iteration takes the maximal KKT violator as the
//! first index and picks its partner by second-order gain, then solves the
//! two-variable subproblem analytically. The bias comes from the KKT
//! conditions on free variables (midpoint of the feasible interval if none).

use super::{check_gamma, check_lambda, gram_matrix, KernelModel, LossKind};
use crate::embedding::DelayDataset;
use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrOptions {
    /// Stop once the maximal KKT violation falls below this.
    pub tolerance: f64,
    /// Cap on pair updates before reporting non-convergence.
    pub max_iterations: usize,
}

impl Default for SvrOptions {
    fn default() -> Self {
        Self { tolerance: 1e-3, max_iterations: 100_000 }
    }
}

/// ε-SVR minimizing `(1/M) Σ |f(x_j) - y_j|_ε + Λ ‖f‖²_K`, i.e. box bound `C = 1/(2MΛ)`.
pub fn fit_svr(data: &DelayDataset, gamma: f64, lambda_reg: f64, epsilon: f64) -> Result<KernelModel> {
    fit_svr_with(data, gamma, lambda_reg, epsilon, SvrOptions::default())
}

pub fn fit_svr_with(
    data: &DelayDataset,
    gamma: f64,
    lambda_reg: f64,
    epsilon: f64,
    options: SvrOptions,
) -> Result<KernelModel> {
    check_gamma(gamma)?;
    if data.is_empty() {
        return Err(Error::InsufficientData("SVR needs at least one row".into()));
    }
    let gram = gram_matrix(data, gamma);
    fit_svr_gram(data, &gram, gamma, lambda_reg, epsilon, options)
}

pub(crate) fn fit_svr_gram(
    data: &DelayDataset,
    gram: &[f64],
    gamma: f64,
    lambda_reg: f64,
    epsilon: f64,
    options: SvrOptions,
) -> Result<KernelModel> {
    check_lambda(lambda_reg)?;
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let l = data.len();
    let y = data.targets();
    let c = 1.0 / (2.0 * l as f64 * lambda_reg);
    let (beta, bias) = smo(gram, y, c, epsilon, options)?;
    KernelModel::new(
        data.inputs().to_vec(),
        data.dim(),
        beta,
        gamma,
        bias,
        LossKind::EpsilonInsensitive,
        lambda_reg,
        epsilon,
    )
}

/// Returns `(β, b)` with `β = α - α*`.
///
/// Variables are kept as two halves: `ap`/`gp` for `α` (sign +1) and
/// `an`/`gn` for `α*` (sign -1), both indexed by training row.
fn smo(k: &[f64], y: &[f64], c: f64, eps: f64, opts: SvrOptions) -> Result<(Vec<f64>, f64)> {
    let l = y.len();
    let diag: Vec<f64> = (0..l).map(|p| k[p * l + p]).collect();
    let row = |p: usize| &k[p * l..(p + 1) * l];

    let mut ap = vec![0.0f64; l];
    let mut an = vec![0.0f64; l];
    let mut gp: Vec<f64> = y.iter().map(|v| eps - v).collect();
    let mut gn: Vec<f64> = y.iter().map(|v| eps + v).collect();

    // First index: maximal violator among α below C (score -G) and α* above 0 (score G).
    let select_first = |ap: &[f64], an: &[f64], gp: &[f64], gn: &[f64]| -> (f64, Option<Var>) {
        let mut gmax = f64::NEG_INFINITY;
        let mut best = None;
        for p in 0..l {
            if ap[p] < c && -gp[p] >= gmax {
                gmax = -gp[p];
                best = Some(Var::Pos(p));
            }
            if an[p] > 0.0 && gn[p] >= gmax {
                gmax = gn[p];
                best = Some(Var::Neg(p));
            }
        }
        (gmax, best)
    };

    let (mut gmax, mut first) = select_first(&ap, &an, &gp, &gn);
    let mut iter = 0usize;
    loop {
        // Second index by second-order gain; also tracks the other side of the violation.
        let mut gmax2 = f64::NEG_INFINITY;
        let mut second = None;
        if let Some(i) = first {
            let ki = row(i.index());
            let kii = diag[i.index()];
            let mut obj_min = f64::INFINITY;
            for p in 0..l {
                let mut quad = kii + diag[p] - 2.0 * ki[p];
                if quad <= 0.0 {
                    quad = TAU;
                }
                if ap[p] > 0.0 {
                    gmax2 = gmax2.max(gp[p]);
                    let diff = gmax + gp[p];
                    if diff > 0.0 {
                        let obj = -(diff * diff) / quad;
                        if obj <= obj_min {
                            obj_min = obj;
                            second = Some(Var::Pos(p));
                        }
                    }
                }
                if an[p] < c {
                    gmax2 = gmax2.max(-gn[p]);
                    let diff = gmax - gn[p];
                    if diff > 0.0 {
                        let obj = -(diff * diff) / quad;
                        if obj <= obj_min {
                            obj_min = obj;
                            second = Some(Var::Neg(p));
                        }
                    }
                }
            }
        }

        let violation = gmax + gmax2;
        let (Some(i), Some(j)) = (first, second) else { break };
        if violation < opts.tolerance {
            break;
        }
        if iter >= opts.max_iterations {
            return Err(Error::Convergence { iterations: iter, violation });
        }
        iter += 1;

        let (si, sj) = (i.sign(), j.sign());
        let (pi, pj) = (i.index(), j.index());
        let qij = si * sj * k[pi * l + pj];
        let get = |v: Var, ap: &[f64], an: &[f64]| match v {
            Var::Pos(p) => ap[p],
            Var::Neg(p) => an[p],
        };
        let grad = |v: Var, gp: &[f64], gn: &[f64]| match v {
            Var::Pos(p) => gp[p],
            Var::Neg(p) => gn[p],
        };
        let (old_i, old_j) = (get(i, &ap, &an), get(j, &ap, &an));
        let (gi, gj) = (grad(i, &gp, &gn), grad(j, &gp, &gn));
        let (new_i, new_j) = solve_pair(old_i, old_j, gi, gj, si != sj, diag[pi] + diag[pj], qij, c);
        for (v, val) in [(i, new_i), (j, new_j)] {
            match v {
                Var::Pos(p) => ap[p] = val,
                Var::Neg(p) => an[p] = val,
            }
        }

        // G_k += Q_ki Δa_i + Q_kj Δa_j with Q_kt = s_k s_t K; fused with the next first-index scan.
        let wi = si * (new_i - old_i);
        let wj = sj * (new_j - old_j);
        let (ki, kj) = (row(pi), row(pj));
        gmax = f64::NEG_INFINITY;
        first = None;
        for p in 0..l {
            let d = ki[p] * wi + kj[p] * wj;
            gp[p] += d;
            gn[p] -= d;
            if ap[p] < c && -gp[p] >= gmax {
                gmax = -gp[p];
                first = Some(Var::Pos(p));
            }
            if an[p] > 0.0 && gn[p] >= gmax {
                gmax = gn[p];
                first = Some(Var::Neg(p));
            }
        }
    }

    // rho = mean of s_t G_t over free variables, else midpoint of the feasible interval.
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    for p in 0..l {
        // α (sign +1): y G = gp
        if ap[p] >= c {
            lb = lb.max(gp[p]);
        } else if ap[p] <= 0.0 {
            ub = ub.min(gp[p]);
        } else {
            free_count += 1;
            free_sum += gp[p];
        }
        // α* (sign -1): y G = -gn
        if an[p] >= c {
            ub = ub.min(-gn[p]);
        } else if an[p] <= 0.0 {
            lb = lb.max(-gn[p]);
        } else {
            free_count += 1;
            free_sum -= gn[p];
        }
    }
    let rho = if free_count > 0 { free_sum / free_count as f64 } else { 0.5 * (ub + lb) };
    let beta = ap.iter().zip(&an).map(|(a, b)| a - b).collect();
    Ok((beta, -rho))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Var {
    Pos(usize),
    Neg(usize),
}

impl Var {
    fn index(self) -> usize {
        match self {
            Var::Pos(p) | Var::Neg(p) => p,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Var::Pos(_) => 1.0,
            Var::Neg(_) => -1.0,
        }
    }
}

/// Analytic solution of the two-variable subproblem, clipped to the box `[0, c]`.
#[allow(clippy::too_many_arguments)]
fn solve_pair(ai: f64, aj: f64, gi: f64, gj: f64, opposite: bool, kii_kjj: f64, qij: f64, c: f64) -> (f64, f64) {
    let (mut ai, mut aj) = (ai, aj);
    if opposite {
        let mut quad = kii_kjj + 2.0 * qij;
        if quad <= 0.0 {
            quad = TAU;
        }
        let delta = (-gi - gj) / quad;
        let diff = ai - aj;
        ai += delta;
        aj += delta;
        if diff > 0.0 {
            if aj < 0.0 {
                aj = 0.0;
                ai = diff;
            }
        } else if ai < 0.0 {
            ai = 0.0;
            aj = -diff;
        }
        if diff > 0.0 {
            if ai > c {
                ai = c;
                aj = c - diff;
            }
        } else if aj > c {
            aj = c;
            ai = c + diff;
        }
    } else {
        let mut quad = kii_kjj - 2.0 * qij;
        if quad <= 0.0 {
            quad = TAU;
        }
        let delta = (gi - gj) / quad;
        let sum = ai + aj;
        ai -= delta;
        aj += delta;
        if sum > c {
            if ai > c {
                ai = c;
                aj = sum - c;
            }
        } else if aj < 0.0 {
            aj = 0.0;
            ai = sum;
        }
        if sum > c {
            if aj > c {
                aj = c;
                ai = sum - c;
            }
        } else if ai < 0.0 {
            ai = 0.0;
            aj = sum;
        }
    }
    (ai, aj)
}

/// Dual objective `-½ βᵀKβ - ε Σ|β| + yᵀβ` of the ε-SVR at `β`.
pub fn dual_objective(gram: &[f64], y: &[f64], beta: &[f64], epsilon: f64) -> f64 {
    let l = y.len();
    let mut quad = 0.0;
    for i in 0..l {
        if beta[i] == 0.0 {
            continue;
        }
        let row = &gram[i * l..(i + 1) * l];
        quad += beta[i] * row.iter().zip(beta).map(|(k, b)| k * b).sum::<f64>();
    }
    -0.5 * quad - epsilon * beta.iter().map(|b| b.abs()).sum::<f64>()
        + y.iter().zip(beta).map(|(y, b)| y * b).sum::<f64>()
}

/// Per-row violation of the ε-SVR complementary-slackness conditions on the
/// training data, with residual `r = y - f(x)`:
/// `β = 0 ⇒ |r| ≤ ε`, `0 < β < C ⇒ r = ε`, `β = C ⇒ r ≥ ε`, and symmetrically for `β < 0`.
pub fn kkt_violations(model: &KernelModel, data: &DelayDataset) -> Result<Vec<f64>> {
    let c = model.box_bound();
    let eps = model.epsilon();
    let pred = model.predict_batch(data.inputs())?;
    Ok(model
        .alphas()
        .iter()
        .zip(pred.iter().zip(data.targets()))
        .map(|(&b, (&f, &yv))| {
            let r = yv - f;
            if b == 0.0 {
                (r.abs() - eps).max(0.0)
            } else if b >= c {
                (eps - r).max(0.0)
            } else if b <= -c {
                (r + eps).max(0.0)
            } else if b > 0.0 {
                (r - eps).abs()
            } else {
                (r + eps).abs()
            }
        })
        .collect())
}
