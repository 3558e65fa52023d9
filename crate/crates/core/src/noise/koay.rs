use crate::distributions::{beta_factor, xi_factor};

const MAX_ITERS: usize = 500;
const TOL: f64 = 1e-8;

/// Smallest attainable mean/std ratio, reached at zero signal.
pub fn koay_lower_bound(n_coils: usize) -> f64 {
    let b = beta_factor(n_coils);
    b / (2.0 * n_coils as f64 - b * b).sqrt()
}

/// Recovers the signal-to-noise ratio θ = η/σ_G from the magnitude
/// mean/std ratio `r` by iterating `θ ← sqrt(ξ(θ|N)(1 + r²) - 2N)`.
pub fn koay2006_snr_fixed_point(r: f64, n_coils: usize) -> f64 {
    // the iteration stalls near the bound, so treat rounding-level excess as zero
    if !(r > koay_lower_bound(n_coils) * (1.0 + 1e-9)) {
        return 0.0;
    }
    let two_n = 2.0 * n_coils as f64;
    let mut theta = r;
    for _ in 0..MAX_ITERS {
        let arg = xi_factor(theta, n_coils) * (1.0 + r * r) - two_n;
        let next = arg.max(0.0).sqrt();
        if (next - theta).abs() < TOL {
            return next;
        }
        theta = next;
    }
    theta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::ncx_mean;

    #[test]
    fn central_case_returns_zero() {
        let r = (std::f64::consts::PI / 2.0).sqrt() / (2.0 - std::f64::consts::PI / 2.0).sqrt();
        assert!((koay_lower_bound(1) - r).abs() < 1e-14);
        assert_eq!(koay2006_snr_fixed_point(r, 1), 0.0);
        assert_eq!(koay2006_snr_fixed_point(0.5, 4), 0.0);
    }

    #[test]
    fn inverts_exact_moments() {
        for &(theta, n) in &[(3.0, 1), (5.0, 12), (1.5, 4)] {
            let mean = ncx_mean(theta, 1.0, n);
            let r = mean / xi_factor(theta, n).sqrt();
            let est = koay2006_snr_fixed_point(r, n);
            assert!((est - theta).abs() < 1e-5 * theta, "theta={theta} n={n}: {est}");
        }
    }
}
