//! Exact nonnegative weighted lasso by an active-set method on the Gram matrix.

use nalgebra::{DMatrix, DVector};

use super::Dictionary;
use crate::error::{NlsamError, Result};

/// A nonnegative code together with its fit and reweighting state.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCode {
    pub alpha: Vec<f64>,
    /// Indices of the positive coefficients, ascending.
    pub support: Vec<usize>,
    /// `½‖x − Dα‖²`, computed from the explicit residual.
    pub residual_sq: f64,
    pub weights: Vec<f64>,
    pub epsilon: f64,
    /// False only when no nonnegative code reaches the requested residual bound.
    pub bound_met: bool,
    pub iterations: usize,
}

impl SparseCode {
    pub(crate) fn zero(x: &[f64], p: usize) -> Self {
        Self {
            alpha: vec![0.0; p],
            support: Vec::new(),
            residual_sq: 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            weights: vec![1.0; p],
            epsilon: 0.0,
            bound_met: true,
            iterations: 0,
        }
    }

    pub fn l0(&self) -> usize {
        self.support.len()
    }
}

/// Positive coefficients on a support, as produced by the active-set solver.
#[derive(Clone, Debug, Default)]
pub(crate) struct Solution {
    pub support: Vec<usize>,
    pub values: Vec<f64>,
}

impl Solution {
    pub fn dense(&self, p: usize) -> Vec<f64> {
        let mut alpha = vec![0.0; p];
        for (&k, &v) in self.support.iter().zip(&self.values) {
            alpha[k] = v;
        }
        alpha
    }

    /// `½‖x − Dα‖²` from `‖x‖²`, `c = Dᵀx` and the Gram matrix.
    pub fn residual_sq(&self, x_norm2: f64, c: &[f64], dict: &Dictionary) -> f64 {
        let g = dict.gram();
        let p = dict.p();
        let mut quad = 0.0;
        let mut lin = 0.0;
        for (i, &ki) in self.support.iter().enumerate() {
            lin += self.values[i] * c[ki];
            let mut row = 0.0;
            for (j, &kj) in self.support.iter().enumerate() {
                row += g[ki * p + kj] * self.values[j];
            }
            quad += self.values[i] * row;
        }
        (0.5 * x_norm2 - lin + 0.5 * quad).max(0.0)
    }
}

/// Smallest acceptable squared Cholesky pivot relative to the unit diagonal.
const MIN_PIVOT: f64 = 1e-14;

/// Unconstrained minimizer on the support `s`: `G_SS z = q_S`.
pub(crate) fn solve_on_support(dict: &Dictionary, s: &[usize], q: &[f64]) -> Option<Vec<f64>> {
    let p = dict.p();
    let g = dict.gram();
    let n = s.len();
    let gss = DMatrix::from_fn(n, n, |i, j| g[s[i] * p + s[j]]);
    let chol = gss.cholesky()?;
    if chol.l_dirty().diagonal().iter().any(|&d| d * d < MIN_PIVOT) {
        return None;
    }
    let rhs = DVector::from_iterator(n, s.iter().map(|&k| q[k]));
    Some(chol.solve(&rhs).iter().copied().collect())
}

/// Minimizes `½αᵀGα − qᵀα` over `α ≥ 0` with `q = c − μw`, starting from the
/// support `warm`. Stops when no inactive gradient exceeds `tol`.
pub(crate) fn solve_nnqp(dict: &Dictionary, c: &[f64], mu: f64, w: &[f64], warm: &[usize], tol: f64) -> Solution {
    let p = dict.p();
    let g = dict.gram();
    let q: Vec<f64> = c.iter().zip(w).map(|(ci, wi)| ci - mu * wi).collect();

    let mut s: Vec<usize> = warm.to_vec();
    let mut vals: Vec<f64> = Vec::new();
    while !s.is_empty() {
        match solve_on_support(dict, &s, &q) {
            Some(z) if z.iter().all(|&v| v > 0.0) => {
                vals = z;
                break;
            }
            Some(z) => {
                let keep: Vec<usize> = s.iter().zip(&z).filter(|(_, &v)| v > 0.0).map(|(&k, _)| k).collect();
                s = keep;
            }
            None => s.clear(),
        }
    }

    let mut active = vec![false; p];
    for &k in &s {
        active[k] = true;
    }
    let mut banned = vec![false; p];
    let mut grad = vec![0.0; p];
    let max_rounds = 4 * p + 50;
    for _ in 0..max_rounds {
        // gradient q − Gα, accumulated from contiguous Gram rows
        grad.copy_from_slice(&q);
        for (&j, &v) in s.iter().zip(&vals) {
            for (gk, &gjk) in grad.iter_mut().zip(&g[j * p..(j + 1) * p]) {
                *gk -= v * gjk;
            }
        }
        let mut best = None;
        let mut best_grad = tol;
        for k in 0..p {
            if !active[k] && !banned[k] && grad[k] > best_grad {
                best_grad = grad[k];
                best = Some(k);
            }
        }
        let Some(k) = best else { break };
        s.push(k);
        vals.push(0.0);
        active[k] = true;

        for _ in 0..=s.len() {
            let Some(z) = solve_on_support(dict, &s, &q) else {
                // dependent on the current support: drop it for this round
                let pos = s.iter().position(|&j| j == k).expect("newly added atom");
                s.remove(pos);
                vals.remove(pos);
                active[k] = false;
                banned[k] = true;
                break;
            };
            if z.iter().all(|&v| v > 0.0) {
                vals = z;
                banned.iter_mut().for_each(|b| *b = false);
                break;
            }
            // move toward z until the first coefficient hits zero
            let mut t = 1.0;
            let mut hit = 0;
            for (i, (&a, &zi)) in vals.iter().zip(&z).enumerate() {
                if zi <= 0.0 {
                    let ti = a / (a - zi);
                    if ti < t {
                        t = ti;
                        hit = i;
                    }
                }
            }
            for (a, &zi) in vals.iter_mut().zip(&z) {
                *a += t * (zi - *a);
            }
            vals[hit] = 0.0;
            let mut i = 0;
            while i < s.len() {
                if vals[i] <= 0.0 {
                    active[s[i]] = false;
                    if s[i] == k {
                        banned[k] = true;
                    }
                    s.remove(i);
                    vals.remove(i);
                } else {
                    i += 1;
                }
            }
            if s.is_empty() {
                break;
            }
        }
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by_key(|&i| s[i]);
    Solution { support: order.iter().map(|&i| s[i]).collect(), values: order.iter().map(|&i| vals[i]).collect() }
}

pub(crate) fn check_signal(x: &[f64], dict: &Dictionary) -> Result<()> {
    if x.len() != dict.m() {
        return Err(NlsamError::DimensionMismatch(format!(
            "signal of length {} for a dictionary with {} rows",
            x.len(),
            dict.m()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(NlsamError::NonFinite("signal".into()));
    }
    Ok(())
}

pub(crate) fn explicit_residual_sq(x: &[f64], dict: &Dictionary, alpha: &[f64]) -> f64 {
    let recon = dict.reconstruct(alpha);
    0.5 * x.iter().zip(&recon).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

/// Solves `min_{α≥0} ½‖x − Dα‖² + penalty · Σ w_k α_k` exactly.
pub fn nn_lasso(x: &[f64], dict: &Dictionary, penalty: f64, weights: &[f64]) -> Result<SparseCode> {
    check_signal(x, dict)?;
    if weights.len() != dict.p() {
        return Err(NlsamError::DimensionMismatch(format!("{} weights for {} atoms", weights.len(), dict.p())));
    }
    if !penalty.is_finite() || penalty < 0.0 {
        return Err(NlsamError::InvalidParameter(format!("penalty must be finite and >= 0, got {penalty}")));
    }
    if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
        return Err(NlsamError::InvalidParameter("weights must be finite and positive".into()));
    }
    let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut code = SparseCode::zero(x, dict.p());
    code.weights = weights.to_vec();
    if x_norm == 0.0 {
        return Ok(code);
    }
    let c = dict.correlations(x);
    let sol = solve_nnqp(dict, &c, penalty, weights, &[], 1e-10 * x_norm);
    code.alpha = sol.dense(dict.p());
    code.residual_sq = explicit_residual_sq(x, dict, &code.alpha);
    code.support = sol.support;
    code.iterations = 1;
    Ok(code)
}

/// `½‖x − Dα‖² + penalty · Σ w_k α_k`.
pub fn lasso_objective(x: &[f64], dict: &Dictionary, alpha: &[f64], penalty: f64, weights: &[f64]) -> f64 {
    explicit_residual_sq(x, dict, alpha) + penalty * alpha.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>()
}

/// Largest violation of the optimality conditions of the weighted
/// nonnegative lasso (zero at an exact minimizer).
pub fn kkt_violation(x: &[f64], dict: &Dictionary, alpha: &[f64], penalty: f64, weights: &[f64]) -> f64 {
    let recon = dict.reconstruct(alpha);
    let r: Vec<f64> = x.iter().zip(&recon).map(|(a, b)| a - b).collect();
    let grad = dict.correlations(&r);
    grad.iter()
        .zip(alpha)
        .zip(weights)
        .map(|((&gk, &ak), &wk)| {
            let slack = gk - penalty * wk;
            if ak > 0.0 {
                slack.abs()
            } else {
                slack.max(0.0)
            }
        })
        .fold(0.0, f64::max)
}
