mod common;

use std::f64::consts::PI;

use nlsam::distributions::{
    beta_factor, estimate_eta, gaussian_cdf, gaussian_icdf, ncx_cdf, ncx_mean, ncx_pdf, stabilize, stabilize_volume,
    stabilize_with_eta, xi_factor, EtaSource, NcChiParams, StabilizeOptions,
};
use nlsam::noise::{NoiseField, NoiseProvenance};
use nlsam::sim::add_noise_sigma;
use nlsam::special::{bessel_i_scaled, integrate};
use nlsam::volume::Volume4D;
use proptest::prelude::*;

fn params(eta: f64, sigma: f64, n: usize) -> NcChiParams {
    NcChiParams::new(eta, sigma, n).unwrap()
}

/// Raw moment `E[m^k]` by quadrature of the density.
fn moment(p: &NcChiParams, k: i32) -> f64 {
    let hi = p.eta + 40.0 * p.sigma * (p.n_coils as f64).sqrt();
    integrate(&|m| m.powi(k) * ncx_pdf(m, p), 0.0, hi, 1e-13, 1e-13)
}

#[test]
fn worked_example() {
    let r = stabilize(678.0, 200.0, 4);
    assert!((r.eta_hat - 407.0).abs() <= 1.0, "{r:?}");
    assert!((r.alpha - 0.513).abs() <= 0.005, "{r:?}");
    assert!((r.m_hat - 413.0).abs() <= 1.0, "{r:?}");
    assert!((ncx_cdf(678.0, &params(407.0, 200.0, 4)) - 0.513).abs() <= 0.005);
    assert!((gaussian_icdf(0.513, 407.0, 200.0).unwrap() - 413.0).abs() <= 1.0);
}

#[test]
fn density_integrates_to_one() {
    let p = params(407.0, 200.0, 4);
    let total = integrate(&|m| ncx_pdf(m, &p), 0.0, 407.0 + 2000.0, 1e-12, 1e-12);
    assert!((total - 1.0).abs() < 1e-6, "{total}");
}

#[test]
fn central_mode_location() {
    let p = params(0.0, 3.0, 4);
    let f = |m: f64| ncx_pdf(m, &p);
    // golden-section maximization
    let (mut a, mut b) = (0.1, 30.0);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let mode = 0.5 * (a + b);
    assert!((mode - 3.0 * 7f64.sqrt()).abs() < 1e-6, "{mode}");
}

#[test]
fn cdf_matches_integrated_density() {
    for &(eta, sigma, n) in &[(0.0, 1.0, 1), (2.0, 1.0, 1), (407.0, 200.0, 4), (300.0, 50.0, 12), (5.0, 2.0, 8)] {
        let p = params(eta, sigma, n);
        for k in 0..20 {
            let m = (eta + 6.0 * sigma * (n as f64).sqrt()) * k as f64 / 19.0;
            let numeric = integrate(&|t| ncx_pdf(t, &p), 0.0, m, 1e-14, 1e-13);
            let cdf = ncx_cdf(m, &p);
            assert!((cdf - numeric).abs() < 1e-8, "eta {eta} sigma {sigma} N {n} m {m}: {cdf} vs {numeric}");
        }
    }
}

#[test]
fn rician_closed_forms() {
    let (eta, sigma) = (3.0, 1.5);
    let p = params(eta, sigma, 1);
    let rice = |m: f64| {
        let z = m * eta / (sigma * sigma);
        m / (sigma * sigma) * (-(m - eta).powi(2) / (2.0 * sigma * sigma)).exp() * bessel_i_scaled(0, z)
    };
    for k in 0..40 {
        let m = 0.25 * k as f64;
        assert!((ncx_pdf(m, &p) - rice(m)).abs() < 1e-10, "pdf at {m}");
        let cdf = integrate(&rice, 0.0, m, 1e-14, 1e-14);
        assert!((ncx_cdf(m, &p) - cdf).abs() < 1e-10, "cdf at {m}");
    }
    let rayleigh = params(0.0, sigma, 1);
    for k in 1..20 {
        let m = 0.3 * k as f64;
        let want = m / (sigma * sigma) * (-m * m / (2.0 * sigma * sigma)).exp();
        assert!((ncx_pdf(m, &rayleigh) - want).abs() < 1e-12);
        assert!((ncx_cdf(m, &rayleigh) - (1.0 - (-m * m / (2.0 * sigma * sigma)).exp())).abs() < 1e-10);
    }
}

#[test]
fn cdf_limits() {
    let p = params(50.0, 10.0, 4);
    assert_eq!(ncx_cdf(0.0, &p), 0.0);
    assert!(ncx_cdf(1e4, &p) > 1.0 - 1e-12);
}

#[test]
fn mean_factor_values() {
    assert!((beta_factor(1) - (PI / 2.0).sqrt()).abs() < 1e-12);
    assert!((beta_factor(4) - 2.7417).abs() < 1e-4, "{}", beta_factor(4));
    for n in 1..32 {
        assert!(beta_factor(n + 1) > beta_factor(n));
    }
}

#[test]
fn variance_factor_values() {
    assert!((xi_factor(0.0, 1) - (2.0 - PI / 2.0)).abs() < 1e-12);
    // high-SNR behavior is 1 − 1/(2θ²): 0.99495 at θ = 10
    let p = params(10.0, 1.0, 1);
    let (m1, m2) = (moment(&p, 1), moment(&p, 2));
    assert!((xi_factor(10.0, 1) - (m2 - m1 * m1)).abs() < 1e-9);
    assert!((xi_factor(10.0, 1) - (1.0 - 1.0 / 200.0)).abs() < 1e-4);
    assert!((xi_factor(100.0, 1) - 1.0).abs() < 1e-4);
    for n in [1, 4, 12] {
        assert!((xi_factor(0.0, n) - (2.0 * n as f64 - beta_factor(n).powi(2))).abs() < 1e-10);
    }
}

#[test]
fn moments_match_quadrature() {
    let sigma = 2.0;
    for n in [1, 4, 12] {
        for theta in [0.0, 0.5, 1.0, 2.0, 5.0] {
            let p = params(theta * sigma, sigma, n);
            let m1 = moment(&p, 1);
            let m2 = moment(&p, 2);
            let mean = ncx_mean(theta * sigma, sigma, n);
            let var = xi_factor(theta, n) * sigma * sigma;
            assert!((mean - m1).abs() < 1e-6, "N {n} theta {theta}: mean {mean} vs {m1}");
            assert!((var - (m2 - m1 * m1)).abs() < 1e-6, "N {n} theta {theta}: var {var} vs {}", m2 - m1 * m1);
        }
    }
}

#[test]
fn eta_inversion() {
    assert_eq!(estimate_eta(beta_factor(4) * 10.0, 10.0, 4), 0.0);
    assert_eq!(estimate_eta(0.5, 10.0, 4), 0.0);
    let p = params(1000.0, 100.0, 12);
    let mean = moment(&p, 1);
    assert!((estimate_eta(mean, 100.0, 12) - 1000.0).abs() < 0.1);
}

#[test]
fn median_maps_to_eta() {
    let p = params(120.0, 30.0, 4);
    let (mut lo, mut hi) = (0.0, 1000.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ncx_cdf(mid, &p) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = stabilize_with_eta(0.5 * (lo + hi), 120.0, 30.0, 4);
    assert!((r.m_hat - 120.0).abs() < 1e-6, "{r:?}");
}

#[test]
fn gaussian_inverse_roundtrip_and_domain() {
    for k in 0..50 {
        let x = -20.0 + 0.8 * k as f64;
        let back = gaussian_icdf(gaussian_cdf(x, 3.0, 4.0), 3.0, 4.0).unwrap();
        assert!((back - x).abs() < 1e-8, "{x} -> {back}");
    }
    assert_eq!(gaussian_icdf(0.5, 7.0, 2.0).unwrap(), 7.0);
    assert!(gaussian_icdf(0.0, 0.0, 1.0).is_err());
    assert!(gaussian_icdf(1.0, 0.0, 1.0).is_err());
}

fn constant_volume(value: f64, dims: [usize; 4]) -> Volume4D {
    Volume4D::new(dims, [1.0; 3], vec![value; dims.iter().product()]).unwrap()
}

#[test]
fn volume_stabilization_is_pointwise_with_pointwise_eta() {
    let clean = constant_volume(80.0, [6, 5, 4, 2]);
    let (noisy, _) = add_noise_sigma(&clean, 20.0, &vec![1.0; 120], 4, 3).unwrap();
    let field = NoiseField::constant([6, 5, 4], 20.0, 4, NoiseProvenance::Provided).unwrap();
    let opts = StabilizeOptions { eta_source: EtaSource::Pointwise, ..Default::default() };
    let out = stabilize_volume(&noisy, &field, &opts).unwrap();
    for (a, b) in out.data().iter().zip(noisy.data()) {
        assert_eq!(*a, stabilize(*b, 20.0, 4).m_hat);
    }
}

#[test]
fn zero_sigma_passes_through() {
    let clean = constant_volume(80.0, [3, 3, 3, 2]);
    let (noisy, _) = add_noise_sigma(&clean, 5.0, &vec![1.0; 27], 1, 4).unwrap();
    let field = NoiseField::constant([3, 3, 3], 0.0, 1, NoiseProvenance::Provided).unwrap();
    let out = stabilize_volume(&noisy, &field, &StabilizeOptions::default()).unwrap();
    assert_eq!(out.data(), noisy.data());
    let wrong = NoiseField::constant([3, 3, 2], 1.0, 1, NoiseProvenance::Provided).unwrap();
    assert!(stabilize_volume(&noisy, &wrong, &StabilizeOptions::default()).is_err());
}

#[test]
fn stabilized_background_is_symmetric() {
    let dims = [50, 50, 40, 1];
    let (eta, sigma, n_coils) = (100.0, 20.0, 4);
    let clean = constant_volume(eta, dims);
    let (noisy, _) = add_noise_sigma(&clean, sigma, &vec![1.0; 100_000], n_coils, 5).unwrap();
    let field = NoiseField::constant([50, 50, 40], sigma, n_coils, NoiseProvenance::Provided).unwrap();
    let skew = |v: &[f64]| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        v.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n / m2.powf(1.5)
    };
    let out = stabilize_volume(&noisy, &field, &StabilizeOptions::default()).unwrap();
    let before = skew(noisy.data());
    let after = skew(out.data());
    assert!(after.abs() < 0.05, "skewness {before} -> {after}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cdf_is_monotone(eta in 0.0f64..50.0, sigma in 0.5f64..20.0, n in 1usize..16, a in 0.0f64..200.0, b in 0.0f64..200.0) {
        let p = params(eta, sigma, n);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(ncx_cdf(lo, &p) <= ncx_cdf(hi, &p) + 1e-15);
    }

    #[test]
    fn stabilization_is_monotone_for_fixed_eta(eta in 0.0f64..50.0, sigma in 0.5f64..20.0, n in 1usize..16, a in 0.0f64..200.0, b in 0.0f64..200.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let rl = stabilize_with_eta(lo, eta, sigma, n);
        let rh = stabilize_with_eta(hi, eta, sigma, n);
        prop_assert!(rl.alpha <= rh.alpha);
        prop_assert!(rl.m_hat <= rh.m_hat + 1e-9 * sigma);
        prop_assert!(rl.alpha > 0.0 && rl.alpha < 1.0);
    }
}
