//! Estimate the noise level of a simulated acquisition with each estimator
//! and compare against the true value.
//!
//!     cargo run --release --example estimate_noise -- [snr] [coils]

use nlsam::noise::{estimate_noise_field, local_noise_variance, piesno, NoiseField, PiesnoConfig};
use nlsam::phantom::{crossing_phantom, phantom_gradient_table};
use nlsam::sim::{add_noise, NoiseSpec};

fn median(field: &NoiseField) -> f64 {
    let mut s = field.sigma().to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let snr: f64 = args.first().map(|s| s.parse()).transpose()?.unwrap_or(10.0);
    let n_coils: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(1);

    let table = phantom_gradient_table(1, 12, 1000.0)?;
    let (clean, mask) = crossing_phantom([24, 24, 24], &table)?;
    let spec = NoiseSpec { n_coils, ..NoiseSpec::rician(snr, 3) };
    // noise everywhere, so the background carries pure noise for PIESNO
    let (noisy, truth) = add_noise(&clean, &table, Some(&mask), &spec)?;
    println!("true sigma        {:.3}", truth.sigma()[0]);
    println!("piesno            {:.3}", median(&piesno(&noisy, n_coils, &PiesnoConfig::default())?));
    println!("residual field    {:.3}", median(&estimate_noise_field(&noisy, n_coils)?));
    println!("local patch       {:.3}", median(&local_noise_variance(&noisy, 1, n_coils)?));
    Ok(())
}
