//! Non-central chi (nc-χ) noise model and the cdf/icdf variance stabilization.
//!
//! A magnitude value `m` built from `N` receiver channels (2N Gaussian
//! components of standard deviation `σ`) around an underlying amplitude `η`
//! follows a nc-χ law with 2N degrees of freedom; the Rician law is `N = 1`.
//! Stabilization maps such a value to the Gaussian value with the same cdf
//! level around the estimated `η`.

use rayon::prelude::*;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{NlsamError, Result};
use crate::filters::gaussian_filter_3d;
use crate::noise::NoiseField;
use crate::special::{
    bessel_i_scaled_seq, hyp1f1_neg_half, integrate, ln_bessel_i_scaled, std_normal_cdf, std_normal_quantile,
};
use crate::volume::Volume4D;

/// Below `CENTRAL_EPS * σ` the signal amplitude is treated as zero.
const CENTRAL_EPS: f64 = 1e-12;
/// `η m / σ²` above which the cdf is integrated numerically.
const SERIES_LIMIT: f64 = 1e4;
const SERIES_REL_TOL: f64 = 1e-14;
const CDF_CENTRAL_THETA: f64 = 1e-6;
/// Stabilization clamps cdf levels into `[ALPHA_CLAMP, 1 - ALPHA_CLAMP]`.
pub const ALPHA_CLAMP: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NcChiParams {
    pub eta: f64,
    pub sigma: f64,
    pub n_coils: usize,
}

impl NcChiParams {
    pub fn new(eta: f64, sigma: f64, n_coils: usize) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(NlsamError::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
        }
        if n_coils == 0 {
            return Err(NlsamError::InvalidParameter("n_coils must be >= 1".into()));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(NlsamError::InvalidParameter(format!("eta must be >= 0, got {eta}")));
        }
        Ok(NcChiParams { eta, sigma, n_coils })
    }

    fn is_central(&self) -> bool {
        self.eta < CENTRAL_EPS * self.sigma
    }
}

/// Probability density of the nc-χ distribution at `m`.
pub fn ncx_pdf(m: f64, p: &NcChiParams) -> f64 {
    if m <= 0.0 {
        return 0.0;
    }
    let n = p.n_coils as f64;
    let s2 = p.sigma * p.sigma;
    if p.is_central() {
        let log = (1.0 - n) * 2f64.ln() + (2.0 * n - 1.0) * m.ln()
            - 2.0 * n * p.sigma.ln()
            - m * m / (2.0 * s2)
            - ln_gamma(n);
        return log.exp();
    }
    let z = m * p.eta / s2;
    let d = m - p.eta;
    let log = n * m.ln() - s2.ln() - (n - 1.0) * p.eta.ln() - d * d / (2.0 * s2) + ln_bessel_i_scaled(p.n_coils - 1, z);
    log.exp()
}

/// Cumulative distribution of the nc-χ law, `1 - Q_N(η/σ, m/σ)`.
pub fn ncx_cdf(m: f64, p: &NcChiParams) -> f64 {
    if m <= 0.0 {
        return 0.0;
    }
    if m.is_infinite() {
        return 1.0;
    }
    let n = p.n_coils;
    let b = m / p.sigma;
    // below θ = 1e-6 the noncentral correction is O(θ²) and the series
    // terms (b/a)^k overflow
    if p.eta < CDF_CENTRAL_THETA * p.sigma {
        return gamma_lr(n as f64, 0.5 * b * b).clamp(0.0, 1.0);
    }
    let a = p.eta / p.sigma;
    let z = a * b;
    if z > SERIES_LIMIT {
        return ncx_cdf_quadrature(m, p);
    }
    let kmax = n + 40 + (12.0 * z.sqrt()).ceil() as usize;
    let bessel = bessel_i_scaled_seq(z, kmax);
    let envelope = (-0.5 * (a - b) * (a - b)).exp();
    if a > b {
        // 1 - Q_N = e^{-(a²+b²)/2} Σ_{k>=N} (b/a)^k I_k(ab)
        let r = b / a;
        let mut sum = 0.0;
        let mut pow = r.powi(n as i32);
        for &ik in bessel.iter().skip(n) {
            let term = pow * ik;
            sum += term;
            if term < SERIES_REL_TOL * sum {
                break;
            }
            pow *= r;
        }
        (envelope * sum).clamp(0.0, 1.0)
    } else {
        // Q_N = e^{-(a²+b²)/2} Σ_{k>=1-N} (a/b)^k I_|k|(ab)
        let r = a / b;
        let mut sum = 0.0;
        let inv = b / a;
        let mut pow = 1.0;
        for k in 1..n {
            pow *= inv;
            sum += pow * bessel[k];
        }
        let mut pow = 1.0;
        for &ik in bessel.iter() {
            let term = pow * ik;
            sum += term;
            if term < SERIES_REL_TOL * sum {
                break;
            }
            pow *= r;
        }
        (1.0 - envelope * sum).clamp(0.0, 1.0)
    }
}

fn ncx_cdf_quadrature(m: f64, p: &NcChiParams) -> f64 {
    let width = 40.0 * p.sigma + 4.0 * (p.n_coils as f64).sqrt() * p.sigma;
    let center = (p.eta * p.eta + (2 * p.n_coils - 1) as f64 * p.sigma * p.sigma).sqrt();
    let lo = (center - width).max(0.0);
    let hi = center + width;
    let f = |x: f64| ncx_pdf(x, p);
    if m <= lo {
        0.0
    } else if m >= hi {
        1.0
    } else if m <= center {
        integrate(&f, lo, m, 1e-15, 1e-13).clamp(0.0, 1.0)
    } else {
        (1.0 - integrate(&f, m, hi, 1e-15, 1e-13)).clamp(0.0, 1.0)
    }
}

pub fn gaussian_cdf(x: f64, mu: f64, sigma: f64) -> f64 {
    std_normal_cdf((x - mu) / sigma)
}

/// Gaussian quantile; `alpha` must lie strictly inside (0, 1).
pub fn gaussian_icdf(alpha: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(NlsamError::Domain(format!("gaussian quantile needs 0 < alpha < 1, got {alpha}")));
    }
    if !(sigma > 0.0) {
        return Err(NlsamError::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(mu + sigma * std_normal_quantile(alpha))
}

/// `β_N = √(π/2) (2N-1)!! / (2^{N-1} (N-1)!)`, the mean of a central nc-χ
/// variable in units of σ.
pub fn beta_factor(n_coils: usize) -> f64 {
    let mut beta = (std::f64::consts::PI / 2.0).sqrt();
    for k in 1..n_coils {
        let k = k as f64;
        beta *= (2.0 * k + 1.0) / (2.0 * k);
    }
    beta
}

/// Mean of the nc-χ distribution.
pub fn ncx_mean(eta: f64, sigma: f64, n_coils: usize) -> f64 {
    let theta = eta / sigma;
    beta_factor(n_coils) * sigma * hyp1f1_neg_half(n_coils, -0.5 * theta * theta)
}

/// Variance correction factor `ξ(θ|N) = 2N + θ² - β_N² 1F1(-1/2; N; -θ²/2)²`,
/// so that `Var[m] = ξ σ²`.
pub fn xi_factor(theta: f64, n_coils: usize) -> f64 {
    let beta = beta_factor(n_coils);
    let f = hyp1f1_neg_half(n_coils, -0.5 * theta * theta);
    let xi = 2.0 * n_coils as f64 + theta * theta - beta * beta * f * f;
    xi.max(1e-12)
}

/// Threshold below which an estimated signal is considered to be under the
/// noise floor and set to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseFloorRule {
    /// `η < σ √(π/2)` for every N.
    #[default]
    Rician,
    /// `η < β_N σ`.
    CoilMean,
}

impl NoiseFloorRule {
    pub fn threshold(self, sigma: f64, n_coils: usize) -> f64 {
        match self {
            NoiseFloorRule::Rician => sigma * (std::f64::consts::PI / 2.0).sqrt(),
            NoiseFloorRule::CoilMean => sigma * beta_factor(n_coils),
        }
    }
}

const ETA_MAX_ITERS: usize = 200;
const ETA_TOL: f64 = 1e-8;

/// Estimates the underlying amplitude from an observed (or locally averaged)
/// magnitude by inverting the first moment of the nc-χ law.
pub fn estimate_eta(m: f64, sigma: f64, n_coils: usize) -> f64 {
    estimate_eta_with(m, sigma, n_coils, NoiseFloorRule::default())
}

pub fn estimate_eta_with(m: f64, sigma: f64, n_coils: usize, floor: NoiseFloorRule) -> f64 {
    let beta = beta_factor(n_coils);
    let ratio = m / sigma;
    if !(ratio > beta) {
        return 0.0;
    }
    let moment = |theta: f64| beta * hyp1f1_neg_half(n_coils, -0.5 * theta * theta) - ratio;
    let (mut lo, mut hi) = (0.0, ratio + 10.0);
    let mut theta = 0.5 * (lo + hi);
    for _ in 0..ETA_MAX_ITERS {
        theta = 0.5 * (lo + hi);
        let f = moment(theta);
        // |f| is in units of σ
        if f.abs() < ETA_TOL {
            break;
        }
        if f > 0.0 {
            hi = theta;
        } else {
            lo = theta;
        }
    }
    let eta = theta * sigma;
    if eta < floor.threshold(sigma, n_coils) {
        0.0
    } else {
        eta
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizationResult {
    pub eta_hat: f64,
    pub m_hat: f64,
    pub alpha: f64,
}

/// Maps `m` to the Gaussian value at the same cdf level around a given
/// `eta_hat`.
pub fn stabilize_with_eta(m: f64, eta_hat: f64, sigma: f64, n_coils: usize) -> StabilizationResult {
    let params = NcChiParams { eta: eta_hat.max(0.0), sigma, n_coils };
    let alpha = ncx_cdf(m, &params).clamp(ALPHA_CLAMP, 1.0 - ALPHA_CLAMP);
    let m_hat = params.eta + sigma * std_normal_quantile(alpha);
    StabilizationResult { eta_hat: params.eta, m_hat, alpha }
}

/// Pointwise stabilization: `η` estimated from `m` itself, then cdf/icdf.
pub fn stabilize(m: f64, sigma: f64, n_coils: usize) -> StabilizationResult {
    stabilize_with_eta(m, estimate_eta(m, sigma, n_coils), sigma, n_coils)
}

/// How the volume stabilizer estimates the underlying signal of each voxel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaSource {
    /// From the voxel's own value.
    Pointwise,
    /// From a Gaussian-smoothed local mean (kernel width in voxels).
    LocalMean { sigma_vox: f64 },
}

impl Default for EtaSource {
    fn default() -> Self {
        EtaSource::LocalMean { sigma_vox: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StabilizeOptions {
    pub eta_source: EtaSource,
    pub floor: NoiseFloorRule,
}

/// Stabilizes every voxel of every volume with its voxel's σ from `field`.
/// Voxels with `σ = 0` pass through unchanged. With a local-mean η, voxels
/// whose cdf level saturates fall back to their own value's η.
pub fn stabilize_volume(vol: &Volume4D, field: &NoiseField, opts: &StabilizeOptions) -> Result<Volume4D> {
    if field.dims() != vol.spatial_dims() {
        return Err(NlsamError::DimensionMismatch(format!(
            "noise field {:?} vs volume {:?}",
            field.dims(),
            vol.spatial_dims()
        )));
    }
    let n_coils = field.n_coils();
    let sigma = field.sigma();
    let dims3 = vol.spatial_dims();
    let mut out = vol.clone();
    for v in 0..vol.n_volumes() {
        let data = vol.volume(v);
        let local: Vec<f64> = match opts.eta_source {
            EtaSource::Pointwise => data.to_vec(),
            EtaSource::LocalMean { sigma_vox } => gaussian_filter_3d(data, dims3, [sigma_vox; 3]),
        };
        let mapped: Vec<f64> = (0..data.len())
            .into_par_iter()
            .map(|i| {
                let s = sigma[i];
                if s <= 0.0 {
                    return data[i];
                }
                let eta = estimate_eta_with(local[i], s, n_coils, opts.floor);
                let r = stabilize_with_eta(data[i], eta, s, n_coils);
                if r.alpha > ALPHA_CLAMP && r.alpha < 1.0 - ALPHA_CLAMP {
                    return r.m_hat;
                }
                // far outside the local distribution: an edge the local mean
                // blurred over, so the voxel's own value sets η
                let own = estimate_eta_with(data[i], s, n_coils, opts.floor);
                stabilize_with_eta(data[i], own, s, n_coils).m_hat
            })
            .collect();
        out.volume_mut(v).copy_from_slice(&mapped);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rayleigh_special_case() {
        let p = NcChiParams::new(0.0, 2.0, 1).unwrap();
        for &m in &[0.1_f64, 1.0, 3.0, 7.5] {
            let expected = m / 4.0 * (-m * m / 8.0).exp();
            assert!((ncx_pdf(m, &p) - expected).abs() < 1e-15);
            let cdf = 1.0 - (-m * m / 8.0).exp();
            assert!((ncx_cdf(m, &p) - cdf).abs() < 1e-14);
        }
    }

    #[test]
    fn cdf_limits() {
        let p = NcChiParams::new(407.0, 200.0, 4).unwrap();
        assert_eq!(ncx_cdf(0.0, &p), 0.0);
        assert!((ncx_cdf(1e5, &p) - 1.0).abs() < 1e-15);
        assert_eq!(ncx_cdf(f64::INFINITY, &p), 1.0);
    }

    #[test]
    fn series_and_quadrature_paths_agree() {
        // just below the switch the series is used; compare with quadrature
        let p = NcChiParams::new(99.0, 1.0, 3).unwrap();
        for &m in &[96.0, 99.5, 101.0, 103.0] {
            let series = ncx_cdf(m, &p);
            let quad = ncx_cdf_quadrature(m, &p);
            assert!((series - quad).abs() < 1e-10, "m={m}: {series} vs {quad}");
        }
    }

    #[test]
    fn beta_factor_values() {
        assert!((beta_factor(1) - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-15);
        // √(π/2) · 105 / 48
        let expected = (std::f64::consts::PI / 2.0).sqrt() * 105.0 / 48.0;
        assert!((beta_factor(4) - expected).abs() < 1e-14);
        assert!((beta_factor(4) - 2.7417).abs() < 1e-4);
        for n in 1..32 {
            assert!(beta_factor(n + 1) > beta_factor(n));
        }
    }

    #[test]
    fn xi_limits() {
        assert!((xi_factor(0.0, 1) - (2.0 - std::f64::consts::PI / 2.0)).abs() < 1e-14);
        // ξ ≈ 1 − 1/(2θ²) at high SNR
        assert!((xi_factor(40.0, 1) - (1.0 - 1.0 / 3200.0)).abs() < 1e-5);
        for n in [1, 4, 12] {
            let b = beta_factor(n);
            assert!((xi_factor(0.0, n) - (2.0 * n as f64 - b * b)).abs() < 1e-12);
        }
    }

    #[test]
    fn eta_noise_floor() {
        let sigma = 3.0;
        assert_eq!(estimate_eta(beta_factor(4) * sigma, sigma, 4), 0.0);
        assert_eq!(estimate_eta(0.5 * sigma, sigma, 1), 0.0);
    }

    #[test]
    fn icdf_domain() {
        assert!(gaussian_icdf(0.0, 0.0, 1.0).is_err());
        assert!(gaussian_icdf(1.0, 0.0, 1.0).is_err());
        assert_eq!(gaussian_icdf(0.5, 3.0, 2.0).unwrap(), 3.0);
    }

    #[test]
    fn median_maps_to_eta() {
        let (eta, sigma, n) = (500.0, 80.0, 2);
        let p = NcChiParams::new(eta, sigma, n).unwrap();
        // bisection for the median of the fitted distribution
        let (mut lo, mut hi) = (0.0, 2000.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ncx_cdf(mid, &p) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r = stabilize_with_eta(0.5 * (lo + hi), eta, sigma, n);
        assert!((r.m_hat - eta).abs() < 1e-6);
    }
}
