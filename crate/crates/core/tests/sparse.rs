mod common;

use common::{brute_force_lasso, objective, random_dictionary, rng};
use nlsam::sparse::{
    encode_bounded, kkt_violation, nn_lasso, train_dictionary_columns, Dictionary, DictionaryMeta, PenaltyRule,
    TrainOptions,
};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn single_atom_is_recovered() {
    let mut r = rng(1);
    let d = random_dictionary(12, 20, &mut r);
    let x = d.atom(7).to_vec();
    let code = nn_lasso(&x, &d, 1e-6, &[1.0; 20]).unwrap();
    assert_eq!(code.support, vec![7]);
    assert!((code.alpha[7] - 1.0).abs() < 1e-5);
}

#[test]
fn large_penalty_gives_zero_code() {
    let mut r = rng(2);
    let d = random_dictionary(8, 10, &mut r);
    let x: Vec<f64> = (0..8).map(|_| r.random::<f64>()).collect();
    let cmax = d.correlations(&x).into_iter().fold(0.0, f64::max);
    let code = nn_lasso(&x, &d, cmax, &[1.0; 10]).unwrap();
    assert!(code.alpha.iter().all(|&a| a == 0.0));
    assert!(code.support.is_empty());
}

#[test]
fn non_finite_signal_is_rejected() {
    let mut r = rng(3);
    let d = random_dictionary(4, 5, &mut r);
    assert!(nn_lasso(&[1.0, f64::NAN, 0.0, 0.0], &d, 0.1, &[1.0; 5]).is_err());
}

#[test]
fn matches_support_enumeration() {
    let mut r = rng(4);
    let mut compared = 0;
    for _ in 0..200 {
        let d = random_dictionary(5, 8, &mut r);
        let x: Vec<f64> = (0..5).map(|_| r.random::<f64>()).collect();
        let w: Vec<f64> = (0..8).map(|_| 0.5 + r.random::<f64>()).collect();
        let cmax = d.correlations(&x).iter().zip(&w).map(|(c, w)| c / w).fold(0.0, f64::max);
        let penalty = cmax * r.random_range(0.02..0.9);
        let code = nn_lasso(&x, &d, penalty, &w).unwrap();
        let ours = objective(&x, &d, &code.alpha, penalty, &w);
        let brute = brute_force_lasso(&x, &d, penalty, &w, 3);
        // the restricted search can only do worse
        assert!(ours <= brute + 1e-9, "{ours} > {brute}");
        if code.support.len() <= 3 {
            assert!((ours - brute).abs() < 1e-6, "{ours} vs {brute}");
            compared += 1;
        }
    }
    assert!(compared > 150);
}

#[test]
fn encode_zero_when_bound_holds_at_zero() {
    let mut r = rng(5);
    let d = random_dictionary(10, 20, &mut r);
    let x = vec![0.1; 10];
    let code = encode_bounded(&x, &d, 0.05 + 1e-9, 0.1, 9).unwrap();
    assert!(code.support.is_empty());
    assert!(code.bound_met);
}

#[test]
fn encode_reproduces_signal_as_bound_vanishes() {
    let mut r = rng(6);
    let d = random_dictionary(16, 32, &mut r);
    let mut truth = vec![0.0; 32];
    for k in [3, 11, 20] {
        truth[k] = 1.0 + r.random::<f64>();
    }
    let x = d.reconstruct(&truth);
    let code = encode_bounded(&x, &d, 1e-12, 0.01, 1).unwrap();
    let recon = d.reconstruct(&code.alpha);
    let err = x.iter().zip(&recon).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn reweighting_rarely_grows_the_support() {
    let mut r = rng(7);
    let mut violations = 0;
    let trials = 100;
    for t in 0..trials {
        let d = random_dictionary(20, 40, &mut r);
        let mut truth = vec![0.0; 40];
        for _ in 0..4 {
            truth[r.random_range(0..40)] = r.random::<f64>() * 5.0;
        }
        let sigma = 0.05;
        let x: Vec<f64> = d.reconstruct(&truth).iter().map(|v| v + sigma * (r.random::<f64>() - 0.5) * 3.4).collect();
        let lambda = PenaltyRule::default().lambda_local(sigma * sigma, 20);
        let first = nlsam::sparse::encode_bounded_with(
            &x,
            &d,
            lambda,
            sigma,
            t,
            &nlsam::sparse::EncodeOptions { max_reweight: 1, ..Default::default() },
        )
        .unwrap();
        let full = encode_bounded(&x, &d, lambda, sigma, t).unwrap();
        if full.support.len() > first.support.len() {
            violations += 1;
        }
    }
    eprintln!("support growth in {violations}/{trials} instances");
    assert!(violations as f64 <= 0.05 * trials as f64);
}

#[test]
fn trained_dictionary_is_normalized_and_objective_decreases() {
    let mut r = rng(8);
    let m = 12;
    let data: Vec<f64> = (0..m * 300).map(|_| r.random::<f64>()).collect();
    let opts = TrainOptions { n_atoms: Some(24), epochs: 15, seed: 3, ..Default::default() };
    let res = train_dictionary_columns(&data, m, &opts).unwrap();
    for k in 0..24 {
        let a = res.dictionary.atom(k);
        assert!(a.iter().all(|&v| v >= 0.0));
        assert!((a.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-8);
    }
    for w in res.objective.windows(2) {
        assert!(w[1] <= w[0] + 1e-10, "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn zero_epochs_returns_normalized_data_columns() {
    let mut r = rng(9);
    let m = 6;
    let data: Vec<f64> = (0..m * 40).map(|_| r.random::<f64>()).collect();
    let opts = TrainOptions { n_atoms: Some(5), epochs: 0, seed: 1, ..Default::default() };
    let d = train_dictionary_columns(&data, m, &opts).unwrap().dictionary;
    for k in 0..5 {
        let atom = d.atom(k);
        let found = data.chunks(m).any(|col| {
            let n = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            col.iter().zip(atom).all(|(a, b)| (a / n - b).abs() < 1e-12)
        });
        assert!(found);
    }
}

#[test]
fn empty_training_set_is_an_error() {
    let opts = TrainOptions::default();
    assert!(train_dictionary_columns(&[0.0; 12], 4, &opts).is_err());
}

#[test]
fn too_few_columns_are_padded() {
    let mut r = rng(10);
    let data: Vec<f64> = (0..4 * 3).map(|_| r.random::<f64>()).collect();
    let opts = TrainOptions { n_atoms: Some(8), epochs: 3, seed: 1, ..Default::default() };
    let res = train_dictionary_columns(&data, 4, &opts).unwrap();
    assert_eq!(res.n_train, 8);
}

#[test]
fn dictionary_persistence_roundtrip() {
    let mut r = rng(11);
    let d = random_dictionary(9, 14, &mut r);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dict.nii");
    d.save(&path, &DictionaryMeta { lambda: 0.25, seed: 42 }).unwrap();
    let (back, meta) = Dictionary::load(&path).unwrap();
    assert_eq!(back, d);
    assert_eq!(meta, DictionaryMeta { lambda: 0.25, seed: 42 });
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lasso_kkt_certificate(seed in 0u64..10_000, m in 2usize..16, p in 2usize..30, frac in 0.01f64..1.2) {
        let mut r = rng(seed);
        let d = random_dictionary(m, p, &mut r);
        let x: Vec<f64> = (0..m).map(|_| r.random::<f64>() * 10.0).collect();
        let w: Vec<f64> = (0..p).map(|_| 0.2 + r.random::<f64>()).collect();
        let cmax = d.correlations(&x).iter().zip(&w).map(|(c, w)| c / w).fold(0.0, f64::max);
        let penalty = frac * cmax;
        let code = nn_lasso(&x, &d, penalty, &w).unwrap();
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(kkt_violation(&x, &d, &code.alpha, penalty, &w) < 1e-6 * xn);
        prop_assert!(code.alpha.iter().all(|&a| a >= 0.0));
        prop_assert_eq!(code.support.len(), code.alpha.iter().filter(|&&a| a > 0.0).count());
    }

    #[test]
    fn lasso_scale_equivariance(seed in 0u64..10_000, scale in 0.1f64..50.0) {
        let mut r = rng(seed);
        let d = random_dictionary(8, 12, &mut r);
        let x: Vec<f64> = (0..8).map(|_| r.random::<f64>()).collect();
        let w = vec![1.0; 12];
        let penalty = 0.05;
        let base = nn_lasso(&x, &d, penalty, &w).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let scaled = nn_lasso(&xs, &d, penalty * scale, &w).unwrap();
        for (a, b) in base.alpha.iter().zip(&scaled.alpha) {
            prop_assert!((a * scale - b).abs() < 1e-8 * scale * (1.0 + a));
        }
    }

    #[test]
    fn encode_respects_the_bound(seed in 0u64..10_000, m in 4usize..20, sigma in 0.01f64..1.0) {
        let mut r = rng(seed);
        let p = 2 * m;
        let d = random_dictionary(m, p, &mut r);
        let mut truth = vec![0.0; p];
        for _ in 0..3 {
            truth[r.random_range(0..p)] = r.random::<f64>() * 10.0;
        }
        let x: Vec<f64> = d.reconstruct(&truth).iter().map(|v| (v + sigma * (r.random::<f64>() - 0.5)).max(0.0)).collect();
        let lambda = PenaltyRule::default().lambda_local(sigma * sigma, m);
        let code = encode_bounded(&x, &d, lambda, sigma, seed).unwrap();
        prop_assert!(code.residual_sq <= lambda * (1.0 + 1e-6));
        prop_assert!(code.bound_met);
    }
}
