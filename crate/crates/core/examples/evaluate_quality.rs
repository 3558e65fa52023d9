//! PSNR and SSIM of noisy phantoms against the clean reference over a range
//! of SNRs.
//!
//!     cargo run --release --example evaluate_quality

use nlsam::metrics::quality_report;
use nlsam::phantom::{crossing_phantom, phantom_gradient_table};
use nlsam::sim::{add_noise, NoiseSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let table = phantom_gradient_table(1, 12, 1000.0)?;
    let (clean, mask) = crossing_phantom([24, 24, 24], &table)?;
    for snr in [5.0, 10.0, 20.0, 40.0] {
        let (noisy, _) = add_noise(&clean, &table, Some(&mask), &NoiseSpec::rician(snr, 2))?;
        let r = quality_report(&clean, &noisy, &mask)?;
        println!("snr {snr:4}: psnr {:6.2} dB  ssim {:.4}", r.psnr_db, r.ssim);
    }
    Ok(())
}
