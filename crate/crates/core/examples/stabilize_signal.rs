//! Map noncentral-chi magnitudes to Gaussian-distributed values and compare
//! the sample skewness before and after, with η taken from the sample mean
//! (as the volume stabilizer does with a local mean) or from each value alone.
//!
//!     cargo run --release --example stabilize_signal -- [sigma] [coils]

use nlsam::distributions::{estimate_eta, ncx_mean, stabilize, stabilize_with_eta};
use nlsam::sim::add_noise_sigma;
use nlsam::volume::Volume4D;

fn skewness(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n / var.powf(1.5)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let sigma: f64 = args.first().map(|s| s.parse()).transpose()?.unwrap_or(200.0);
    let n_coils: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(4);

    let r = stabilize(678.0, sigma, n_coils);
    println!("m = 678: eta {:.2}, cdf level {:.4}, stabilized {:.2}", r.eta_hat, r.alpha, r.m_hat);

    let n = 20_000;
    for eta in [0.0, 1.0 * sigma, 3.0 * sigma] {
        let clean = Volume4D::new([n, 1, 1, 1], [1.0; 3], vec![eta; n])?;
        let (noisy, _) = add_noise_sigma(&clean, sigma, &vec![1.0; n], n_coils, 1)?;
        let raw_mean = noisy.data().iter().sum::<f64>() / n as f64;
        let eta_hat = estimate_eta(raw_mean, sigma, n_coils);
        let pooled: Vec<f64> =
            noisy.data().iter().map(|&m| stabilize_with_eta(m, eta_hat, sigma, n_coils).m_hat).collect();
        let pointwise: Vec<f64> = noisy.data().iter().map(|&m| stabilize(m, sigma, n_coils).m_hat).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        println!(
            "eta {eta:6.1}: raw mean {raw_mean:7.2} (theory {:7.2}) skew {:+.3} | pooled eta {eta_hat:6.1}: mean {:7.2} skew {:+.3} | pointwise: mean {:7.2} skew {:+.3}",
            ncx_mean(eta, sigma, n_coils),
            skewness(noisy.data()),
            mean(&pooled),
            skewness(&pooled),
            mean(&pointwise),
            skewness(&pointwise),
        );
    }
    Ok(())
}
