//! Local noise variance from the minimum distance between neighboring
//! high-pass patches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::koay::koay2006_snr_fixed_point;
use super::{NoiseField, NoiseProvenance};
use crate::distributions::xi_factor;
use crate::error::{NlsamError, Result};
use crate::filters::{gaussian_filter_3d, reflect};
use crate::volume::Volume4D;

/// Low-pass width (voxels) used to isolate the noisy part of each patch.
const LOWPASS_SIGMA: f64 = 1.0;

/// `1 / E[min_j ‖u_i − u_j‖² / (2|P|)]` for unit white noise, by patch
/// radius 1, 2, 3. Reproduced by `min_distance_calibration_matches_monte_carlo`.
const CALIBRATION: [f64; 3] = [1.7692, 1.3200, 1.2095];

/// Multiplicative constant making the min-distance statistic unbiased for
/// white noise at the given patch radius.
pub fn min_distance_calibration(radius: usize) -> f64 {
    match radius {
        1..=3 => CALIBRATION[radius - 1],
        _ => 1.0 / monte_carlo_min_distance(radius, 0x5eed),
    }
}

/// Mean of the raw min-distance statistic over interior voxels of a seeded
/// unit white-noise volume.
pub(crate) fn monte_carlo_min_distance(radius: usize, seed: u64) -> f64 {
    let n = 40 + 2 * radius;
    let dims = [n, n, n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..n * n * n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let low = gaussian_filter_3d(&noise, dims, [LOWPASS_SIGMA; 3]);
    let resid: Vec<f64> = noise.iter().zip(&low).map(|(a, b)| a - b).collect();
    let margin = radius + 6;
    let mut sum = 0.0;
    let mut count = 0.0;
    for z in margin..n - margin {
        for y in margin..n - margin {
            for x in margin..n - margin {
                sum += min_patch_distance(&resid, dims, [x, y, z], radius);
                count += 1.0;
            }
        }
    }
    sum / count
}

/// `min_j ‖u_i − u_j‖² / (2|P|)` over the 26 spatial neighbors `j` of `c`.
fn min_patch_distance(resid: &[f64], dims: [usize; 3], c: [usize; 3], radius: usize) -> f64 {
    let r = radius as isize;
    let size = (2 * radius + 1).pow(3) as f64;
    let at = |x: isize, y: isize, z: isize| {
        let (x, y, z) = (reflect(x, dims[0]), reflect(y, dims[1]), reflect(z, dims[2]));
        resid[x + dims[0] * (y + dims[1] * z)]
    };
    let (cx, cy, cz) = (c[0] as isize, c[1] as isize, c[2] as isize);
    let mut best = f64::INFINITY;
    for oz in -1..=1isize {
        for oy in -1..=1isize {
            for ox in -1..=1isize {
                if ox == 0 && oy == 0 && oz == 0 {
                    continue;
                }
                let (jx, jy, jz) = (cx + ox, cy + oy, cz + oz);
                if jx < 0
                    || jy < 0
                    || jz < 0
                    || jx >= dims[0] as isize
                    || jy >= dims[1] as isize
                    || jz >= dims[2] as isize
                {
                    continue;
                }
                let mut d = 0.0;
                for dz in -r..=r {
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let diff = at(cx + dx, cy + dy, cz + dz) - at(jx + dx, jy + dy, jz + dz);
                            d += diff * diff;
                        }
                    }
                }
                best = best.min(d);
            }
        }
    }
    best / (2.0 * size)
}

/// Spatially varying noise estimate from the minimum distance between a
/// voxel's high-pass patch and those of its 26 neighbors, averaged over
/// volumes, calibrated, then corrected for the nc-χ bias through the local
/// SNR.
pub fn local_noise_variance(vol: &Volume4D, patch_radius: usize, n_coils: usize) -> Result<NoiseField> {
    let dims = vol.spatial_dims();
    let width = 2 * patch_radius + 1;
    if dims.iter().any(|&d| d < width) {
        return Err(NlsamError::DimensionMismatch(format!("volume {dims:?} is smaller than a {width}³ patch")));
    }
    if n_coils == 0 {
        return Err(NlsamError::InvalidParameter("n_coils must be >= 1".into()));
    }
    let n = vol.n_spatial();
    let nv = vol.n_volumes() as f64;
    let calibration = min_distance_calibration(patch_radius);
    let mut var = vec![0.0; n];
    let mut mean = vec![0.0; n];
    for v in 0..vol.n_volumes() {
        let data = vol.volume(v);
        let low = gaussian_filter_3d(data, dims, [LOWPASS_SIGMA; 3]);
        let resid: Vec<f64> = data.iter().zip(&low).map(|(a, b)| a - b).collect();
        let stat: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let c = [i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])];
                min_patch_distance(&resid, dims, c, patch_radius)
            })
            .collect();
        for i in 0..n {
            var[i] += stat[i] / nv;
            mean[i] += low[i] / nv;
        }
    }
    let sigma: Vec<f64> = var
        .iter()
        .zip(&mean)
        .map(|(&v, &mu)| {
            let s2 = v * calibration;
            if s2 <= 0.0 {
                return 0.0;
            }
            let theta = koay2006_snr_fixed_point(mu / s2.sqrt(), n_coils);
            (s2 / xi_factor(theta, n_coils)).sqrt()
        })
        .collect();
    NoiseField::new(dims, sigma, n_coils, NoiseProvenance::LocalPatch)
}
