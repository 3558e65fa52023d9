//! Smooth noise fields from high-pass residuals or an acquired noise map.

use rayon::prelude::*;

use super::koay::koay2006_snr_fixed_point;
use super::{NoiseField, NoiseProvenance};
use crate::distributions::xi_factor;
use crate::error::{NlsamError, Result};
use crate::filters::{gaussian_filter_3d, highpass_variance_factor, local_std, median, reflect};
use crate::volume::Volume4D;

/// Regularizing kernel width (full width at half maximum, millimeters).
pub const NOISE_FIELD_FWHM_MM: f64 = 10.0;
const FWHM_PER_SIGMA: f64 = 2.3548;
const LOWPASS_SIGMA: f64 = 1.0;
const STD_RADIUS: usize = 1;

/// Converts a FWHM in millimeters into per-axis Gaussian widths in voxels.
pub fn fwhm_to_sigma_vox(fwhm_mm: f64, spacing: [f64; 3]) -> [f64; 3] {
    spacing.map(|s| fwhm_mm / (FWHM_PER_SIGMA * s))
}

fn window_mean(data: &[f64], dims: [usize; 3], radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let count = ((2 * radius + 1).pow(3)) as f64;
    (0..data.len())
        .map(|i| {
            let (x, y, z) = (i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1]));
            let mut sum = 0.0;
            for dz in -r..=r {
                let zz = reflect(z as isize + dz, dims[2]);
                for dy in -r..=r {
                    let yy = reflect(y as isize + dy, dims[1]);
                    for dx in -r..=r {
                        let xx = reflect(x as isize + dx, dims[0]);
                        sum += data[xx + dims[0] * (yy + dims[1] * zz)];
                    }
                }
            }
            sum / count
        })
        .collect()
}

/// Median across volumes, voxel by voxel.
fn median_over_volumes(per_volume: &[Vec<f64>]) -> Vec<f64> {
    let n = per_volume[0].len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut vals: Vec<f64> = per_volume.iter().map(|v| v[i]).collect();
            median(&mut vals)
        })
        .collect()
}

fn finish_field(
    std3: Vec<f64>,
    mean3: Vec<f64>,
    dims: [usize; 3],
    spacing: [f64; 3],
    n_coils: usize,
    provenance: NoiseProvenance,
) -> Result<NoiseField> {
    let smooth = fwhm_to_sigma_vox(NOISE_FIELD_FWHM_MM, spacing);
    let std_s = gaussian_filter_3d(&std3, dims, smooth);
    let mean_s = gaussian_filter_3d(&mean3, dims, smooth);
    let sigma = std_s
        .par_iter()
        .zip(mean_s.par_iter())
        .map(|(&s, &mu)| {
            if s <= 0.0 {
                return 0.0;
            }
            let theta = koay2006_snr_fixed_point(mu / s, n_coils);
            s / xi_factor(theta, n_coils).sqrt()
        })
        .collect();
    NoiseField::new(dims, sigma, n_coils, provenance)
}

/// Noise field from the local standard deviation of `volume − low-pass(volume)`:
/// 3×3×3 std per volume, median across volumes, Gaussian smoothing with a
/// 10 mm FWHM, then nc-χ bias correction from the local mean/std ratio.
pub fn estimate_noise_field(vol: &Volume4D, n_coils: usize) -> Result<NoiseField> {
    if n_coils == 0 {
        return Err(NlsamError::InvalidParameter("n_coils must be >= 1".into()));
    }
    let dims = vol.spatial_dims();
    let attenuation = highpass_variance_factor([LOWPASS_SIGMA; 3]).sqrt();
    let (stds, means): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (0..vol.n_volumes())
        .into_par_iter()
        .map(|v| {
            let data = vol.volume(v);
            let low = gaussian_filter_3d(data, dims, [LOWPASS_SIGMA; 3]);
            let resid: Vec<f64> = data.iter().zip(&low).map(|(a, b)| a - b).collect();
            let std: Vec<f64> = local_std(&resid, dims, STD_RADIUS).iter().map(|s| s / attenuation).collect();
            (std, low)
        })
        .unzip();
    finish_field(
        median_over_volumes(&stds),
        median_over_volumes(&means),
        dims,
        vol.spacing(),
        n_coils,
        NoiseProvenance::ResidualField,
    )
}

/// Noise field sampled directly from an acquired noise-only map.
pub fn noise_field_from_map(map: &Volume4D, n_coils: usize) -> Result<NoiseField> {
    if n_coils == 0 {
        return Err(NlsamError::InvalidParameter("n_coils must be >= 1".into()));
    }
    let dims = map.spatial_dims();
    let (stds, means): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (0..map.n_volumes())
        .into_par_iter()
        .map(|v| {
            let data = map.volume(v);
            (local_std(data, dims, STD_RADIUS), window_mean(data, dims, STD_RADIUS))
        })
        .unzip();
    finish_field(
        median_over_volumes(&stds),
        median_over_volumes(&means),
        dims,
        map.spacing(),
        n_coils,
        NoiseProvenance::NoiseMap,
    )
}
