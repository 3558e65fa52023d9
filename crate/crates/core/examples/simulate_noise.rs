//! Simulate a noisy crossing phantom and write it as NIfTI with its
//! gradient files and true noise map.
//!
//!     cargo run --release --example simulate_noise -- <out_dir> [snr] [coils] [constant|sphere]

use std::path::PathBuf;

use nlsam::io::{write_gradients, write_mask, write_volume};
use nlsam::phantom::{crossing_phantom, phantom_gradient_table};
use nlsam::sim::{add_noise, BetaProfile, NoiseSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = PathBuf::from(args.first().ok_or("usage: simulate_noise <out_dir> [snr] [coils] [constant|sphere]")?);
    let snr: f64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(10.0);
    let n_coils: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let beta =
        if args.get(3).map(String::as_str) == Some("sphere") { BetaProfile::Sphere } else { BetaProfile::Constant };
    std::fs::create_dir_all(&dir)?;

    let table = phantom_gradient_table(1, 12, 1000.0)?;
    let (clean, mask) = crossing_phantom([24, 24, 24], &table)?;
    let (noisy, field) = add_noise(&clean, &table, Some(&mask), &NoiseSpec { snr, n_coils, beta, seed: 0 })?;

    write_volume(&clean, dir.join("clean.nii"))?;
    write_volume(&noisy, dir.join("noisy.nii"))?;
    write_volume(&field.to_volume(clean.spacing())?, dir.join("sigma.nii"))?;
    write_mask(&mask, clean.spacing(), dir.join("mask.nii"))?;
    write_gradients(&table, dir.join("dwi.bval"), dir.join("dwi.bvec"))?;
    let sigma = field.sigma().iter().copied().fold(0.0, f64::max);
    println!("wrote {} (dims {:?}, largest sigma {sigma:.3})", dir.display(), noisy.dims());
    Ok(())
}
