#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use nlsam::sparse::Dictionary;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random nonnegative dictionary with unit-norm atoms.
pub fn random_dictionary(m: usize, p: usize, rng: &mut impl Rng) -> Dictionary {
    let atoms: Vec<f64> = (0..m * p).map(|_| rng.random::<f64>()).collect();
    Dictionary::from_columns(m, p, atoms).unwrap()
}

pub fn objective(x: &[f64], d: &Dictionary, alpha: &[f64], penalty: f64, w: &[f64]) -> f64 {
    nlsam::sparse::lasso_objective(x, d, alpha, penalty, w)
}

/// Minimum of the weighted nonnegative lasso objective over every support of
/// size at most `max_support`, each solved in closed form and kept only when
/// all coefficients come out positive.
pub fn brute_force_lasso(x: &[f64], d: &Dictionary, penalty: f64, w: &[f64], max_support: usize) -> f64 {
    let p = d.p();
    let m = d.m();
    let mut best = objective(x, d, &vec![0.0; p], penalty, w);
    let mut support = Vec::new();
    fn recurse(start: usize, left: usize, support: &mut Vec<usize>, eval: &mut dyn FnMut(&[usize]), p: usize) {
        if !support.is_empty() {
            eval(support);
        }
        if left == 0 {
            return;
        }
        for k in start..p {
            support.push(k);
            recurse(k + 1, left - 1, support, eval, p);
            support.pop();
        }
    }
    let mut eval = |s: &[usize]| {
        let ds = DMatrix::from_fn(m, s.len(), |r, c| d.atom(s[c])[r]);
        let g = ds.transpose() * &ds;
        let q = ds.transpose() * DVector::from_column_slice(x)
            - DVector::from_iterator(s.len(), s.iter().map(|&k| penalty * w[k]));
        let Some(z) = g.cholesky().map(|c| c.solve(&q)) else { return };
        if z.iter().all(|&v| v > 0.0) {
            let mut alpha = vec![0.0; p];
            for (&k, &v) in s.iter().zip(z.iter()) {
                alpha[k] = v;
            }
            best = best.min(objective(x, d, &alpha, penalty, w));
        }
    };
    recurse(0, max_support, &mut support, &mut eval, p);
    best
}
