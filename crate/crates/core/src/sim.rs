//! Synthetic magnitude noise: `N` complex channels carrying `I/√N` each,
//! with Gaussian noise of amplitude `β σ` on both quadratures.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{NlsamError, Result};
use crate::noise::{NoiseField, NoiseProvenance};
use crate::seed::rng_for;
use crate::volume::{GradientTable, Mask3D, Volume4D};

/// Spatial profile of the noise amplitude multiplier β.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BetaProfile {
    #[default]
    Constant,
    /// 3 at the mask centroid falling linearly to 1 at the farthest in-mask voxel.
    Sphere,
}

impl BetaProfile {
    pub fn as_str(self) -> &'static str {
        match self {
            BetaProfile::Constant => "constant",
            BetaProfile::Sphere => "sphere",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    /// `σ = mean(b0 in mask) / snr`; infinity gives noiseless output.
    pub snr: f64,
    pub n_coils: usize,
    pub beta: BetaProfile,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn rician(snr: f64, seed: u64) -> Self {
        Self { snr, n_coils: 1, beta: BetaProfile::Constant, seed }
    }
}

/// Per-voxel β. Constant mode is 1 everywhere; sphere mode is
/// `1 + 2 (1 − d / d_max)` inside the mask (d: distance to the mask
/// centroid in voxels) and 1 outside.
pub fn build_beta_field(mask: &Mask3D, profile: BetaProfile) -> Result<Vec<f64>> {
    let dims = mask.dims();
    let n = mask.data().len();
    if mask.count() == 0 {
        return Err(NlsamError::InvalidParameter("beta field needs a nonempty mask".into()));
    }
    if profile == BetaProfile::Constant {
        return Ok(vec![1.0; n]);
    }
    let coord = |i: usize| [(i % dims[0]) as f64, ((i / dims[0]) % dims[1]) as f64, (i / (dims[0] * dims[1])) as f64];
    let mut centroid = [0.0; 3];
    for i in (0..n).filter(|&i| mask.at(i)) {
        let c = coord(i);
        (0..3).for_each(|a| centroid[a] += c[a]);
    }
    let count = mask.count() as f64;
    centroid.iter_mut().for_each(|c| *c /= count);
    let dist = |i: usize| {
        let c = coord(i);
        ((c[0] - centroid[0]).powi(2) + (c[1] - centroid[1]).powi(2) + (c[2] - centroid[2]).powi(2)).sqrt()
    };
    let d_max = (0..n).filter(|&i| mask.at(i)).map(dist).fold(0.0, f64::max);
    Ok((0..n)
        .map(|i| {
            if !mask.at(i) {
                1.0
            } else if d_max == 0.0 {
                3.0
            } else {
                1.0 + 2.0 * (1.0 - dist(i) / d_max)
            }
        })
        .collect())
}

/// Noise level implied by `spec`: mean b0 intensity inside `mask` over SNR.
pub fn sigma_from_snr(clean: &Volume4D, table: &GradientTable, mask: &Mask3D, snr: f64) -> Result<f64> {
    if !(snr > 0.0) {
        return Err(NlsamError::InvalidParameter(format!("snr must be positive, got {snr}")));
    }
    table.check_matches(clean)?;
    mask.check_matches(clean)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for b in table.b0_indices() {
        for (i, &v) in clean.volume(b).iter().enumerate() {
            if mask.at(i) {
                sum += v;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(NlsamError::InvalidParameter("mask is empty".into()));
    }
    Ok(sum / count as f64 / snr)
}

/// Corrupts `clean` according to `spec`, with σ taken from the mean b0 in
/// `mask` (nonzero b0 voxels when `None`). Returns the noisy volume and the
/// true Gaussian σ·β field.
pub fn add_noise(
    clean: &Volume4D,
    table: &GradientTable,
    mask: Option<&Mask3D>,
    spec: &NoiseSpec,
) -> Result<(Volume4D, NoiseField)> {
    table.check_matches(clean)?;
    let mask = match mask {
        Some(m) => m.clone(),
        None => {
            let b0 = clean.volume(table.b0_indices()[0]);
            Mask3D::from_values(clean.spatial_dims(), b0)?
        }
    };
    let sigma = sigma_from_snr(clean, table, &mask, spec.snr)?;
    let beta = build_beta_field(&mask, spec.beta)?;
    add_noise_sigma(clean, sigma, &beta, spec.n_coils, spec.seed)
}

/// Corrupts `clean` with Gaussian level `sigma · beta[voxel]` over `n_coils`
/// channels. Each voxel draws from its own stream seeded by `(seed, voxel)`.
pub fn add_noise_sigma(
    clean: &Volume4D,
    sigma: f64,
    beta: &[f64],
    n_coils: usize,
    seed: u64,
) -> Result<(Volume4D, NoiseField)> {
    let n = clean.n_spatial();
    let nv = clean.n_volumes();
    if beta.len() != n {
        return Err(NlsamError::DimensionMismatch(format!("{} beta values for {n} voxels", beta.len())));
    }
    if n_coils == 0 {
        return Err(NlsamError::InvalidParameter("n_coils must be >= 1".into()));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) || beta.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
        return Err(NlsamError::InvalidParameter("noise level must be finite and >= 0".into()));
    }
    if clean.data().iter().any(|&v| v < 0.0) {
        return Err(NlsamError::InvalidParameter("clean intensities must be nonnegative".into()));
    }
    let per_channel = 1.0 / (n_coils as f64).sqrt();
    let samples: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = sigma * beta[i];
            if s == 0.0 {
                return (0..nv).map(|v| clean.volume(v)[i]).collect();
            }
            let mut rng = rng_for(seed, i as u64);
            (0..nv)
                .map(|v| {
                    let mean = clean.volume(v)[i] * per_channel;
                    let mut sum = 0.0;
                    for _ in 0..n_coils {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        sum += (mean + s * re).powi(2) + (s * im).powi(2);
                    }
                    sum.sqrt()
                })
                .collect()
        })
        .collect();
    let mut noisy = clean.clone();
    for v in 0..nv {
        noisy.volume_mut(v).iter_mut().zip(&samples).for_each(|(o, s)| *o = s[v]);
    }
    let field = NoiseField::new(
        clean.spatial_dims(),
        beta.iter().map(|b| sigma * b).collect(),
        n_coils,
        NoiseProvenance::Provided,
    )?;
    Ok((noisy, field))
}
