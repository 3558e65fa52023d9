//! Locally bounded, iteratively reweighted nonnegative ℓ1 coding:
//! `min ‖w ⊙ α‖₁  s.t.  ½‖x − Dα‖² ≤ λ_i, α ≥ 0`.

use rand_distr::{Distribution, Normal};

use super::lasso::{check_signal, explicit_residual_sq, solve_nnqp, solve_on_support, Solution};
use super::{Dictionary, SparseCode};
use crate::error::{NlsamError, Result};
use crate::seed::rng_for;

/// Solver controls for [`encode_bounded_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncodeOptions {
    /// Stop reweighting once `max |α_j − α_{j−1}| < reweight_tol · ‖x‖`.
    pub reweight_tol: f64,
    pub max_reweight: usize,
    /// Budget of multiplier updates per reweighting step.
    pub bisection_steps: usize,
    /// A residual in `[lower_fraction · λ_i, λ_i]` ends the multiplier search.
    pub lower_fraction: f64,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self { reweight_tol: 1e-5, max_reweight: 40, bisection_steps: 20, lower_fraction: 0.95 }
    }
}

/// [`encode_bounded_with`] using the default options.
pub fn encode_bounded(
    x: &[f64],
    dict: &Dictionary,
    lambda_i: f64,
    sigma_for_eps: f64,
    seed: u64,
) -> Result<SparseCode> {
    encode_bounded_with(x, dict, lambda_i, sigma_for_eps, seed, &EncodeOptions::default())
}

/// Aim slightly inside the bound so rounding never pushes the residual past it.
const TARGET_FRACTION: f64 = 0.999;

/// Each reweighting step solves the Lagrangian form for the multiplier μ
/// that puts the residual just under `λ_i`. On a fixed support the residual
/// is exactly `R₀ + ½μ²·wᵀG⁻¹w`, which gives the next trial μ directly;
/// bisection takes over whenever that prediction leaves the bracket.
pub fn encode_bounded_with(
    x: &[f64],
    dict: &Dictionary,
    lambda_i: f64,
    sigma_for_eps: f64,
    seed: u64,
    opts: &EncodeOptions,
) -> Result<SparseCode> {
    check_signal(x, dict)?;
    if !(lambda_i > 0.0 && lambda_i.is_finite()) {
        return Err(NlsamError::InvalidParameter(format!("residual bound must be positive, got {lambda_i}")));
    }
    if !(sigma_for_eps >= 0.0 && sigma_for_eps.is_finite()) {
        return Err(NlsamError::InvalidParameter(format!("noise level must be >= 0, got {sigma_for_eps}")));
    }
    let p = dict.p();
    let x2: f64 = x.iter().map(|v| v * v).sum();
    let x_norm = x2.sqrt();
    let epsilon = draw_epsilon(dict, sigma_for_eps, seed).max(1e-12 * (x_norm + 1.0));
    let mut code = SparseCode::zero(x, p);
    code.epsilon = epsilon;
    if 0.5 * x2 <= lambda_i {
        return Ok(code);
    }

    let c = dict.correlations(x);
    let tol = 1e-10 * x_norm;
    let mut weights = vec![1.0; p];
    let mut alpha = vec![0.0; p];
    let mut support: Vec<usize> = Vec::new();
    let mut bound_met = true;
    let mut iterations = 0;
    for it in 0..opts.max_reweight.max(1) {
        iterations = it + 1;
        let (sol, met) = search_multiplier(dict, &c, x2, &weights, lambda_i, &support, tol, opts);
        bound_met = met;
        let next = sol.dense(p);
        let change = next.iter().zip(&alpha).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        alpha = next;
        support = sol.support;
        code.weights.copy_from_slice(&weights);
        if change < opts.reweight_tol * x_norm {
            break;
        }
        for (w, a) in weights.iter_mut().zip(&alpha) {
            *w = 1.0 / (a.abs() + epsilon);
        }
    }
    code.residual_sq = explicit_residual_sq(x, dict, &alpha);
    code.alpha = alpha;
    code.support = support;
    code.bound_met = bound_met;
    code.iterations = iterations;
    Ok(code)
}

/// `ε = max_k |D_kᵀξ|` with `ξ ~ N(0, σ²)`, drawn from a stream fixed by `seed`.
fn draw_epsilon(dict: &Dictionary, sigma: f64, seed: u64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let mut rng = rng_for(seed, 0x0e95);
    let xi: Vec<f64> = (0..dict.m()).map(|_| normal.sample(&mut rng)).collect();
    dict.correlations(&xi).iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// The multiplier predicted to bring the residual of `sol`'s support to `target`.
fn affine_prediction(dict: &Dictionary, sol: &Solution, c: &[f64], x2: f64, w: &[f64], target: f64) -> Option<f64> {
    if sol.support.is_empty() {
        return None;
    }
    let a = solve_on_support(dict, &sol.support, c)?;
    let b = solve_on_support(dict, &sol.support, w)?;
    let r0 = 0.5 * x2 - 0.5 * sol.support.iter().zip(&a).map(|(&k, v)| c[k] * v).sum::<f64>();
    let curvature: f64 = sol.support.iter().zip(&b).map(|(&k, v)| w[k] * v).sum();
    if curvature <= 0.0 || target <= r0 {
        return None;
    }
    Some((2.0 * (target - r0) / curvature).sqrt())
}

#[allow(clippy::too_many_arguments)]
fn search_multiplier(
    dict: &Dictionary,
    c: &[f64],
    x2: f64,
    w: &[f64],
    lambda: f64,
    warm: &[usize],
    tol: f64,
    opts: &EncodeOptions,
) -> (Solution, bool) {
    let target = TARGET_FRACTION * lambda;
    let mu_max = c.iter().zip(w).map(|(ci, wi)| ci / wi).fold(0.0, f64::max);
    let mut lo = 0.0;
    let mut hi = mu_max;
    let mut best: Option<Solution> = None;

    // first guess: the warm support, or the first atom to enter the path
    let seed_support = if warm.is_empty() {
        let k = (0..c.len()).max_by(|&i, &j| (c[i] / w[i]).total_cmp(&(c[j] / w[j]))).unwrap_or(0);
        vec![k]
    } else {
        warm.to_vec()
    };
    let probe = Solution { values: vec![0.0; seed_support.len()], support: seed_support };
    let mut mu =
        affine_prediction(dict, &probe, c, x2, w, target).filter(|&m| m > lo && m < hi).unwrap_or(0.5 * (lo + hi));
    let mut warm_support = warm.to_vec();
    for _ in 0..opts.bisection_steps {
        let sol = solve_nnqp(dict, c, mu, w, &warm_support, tol);
        let r = sol.residual_sq(x2, c, dict);
        warm_support = sol.support.clone();
        let next = affine_prediction(dict, &sol, c, x2, w, target);
        if r <= lambda {
            lo = mu;
            let done = r >= opts.lower_fraction * lambda;
            best = Some(sol);
            if done {
                break;
            }
        } else {
            hi = mu;
        }
        mu = next.filter(|&m| m > lo && m < hi).unwrap_or(0.5 * (lo + hi));
    }
    if let Some(sol) = best {
        return (sol, true);
    }
    // nothing feasible above μ = 0: fall back to the least-squares end of the path
    let sol = solve_nnqp(dict, c, 0.0, w, &warm_support, tol);
    let met = sol.residual_sq(x2, c, dict) <= lambda;
    (sol, met)
}
