//! Probabilistic identification of pure-noise voxels in a slice.
//!
//! For background voxels the per-voxel mean over V volumes of `m²/(2σ²)`
//! follows `Gamma(shape = N·V, scale = 1/V)`. Voxels whose statistic falls
//! inside the central `1 - alpha` interval form the background set Ω, σ is
//! re-estimated from Ω, and the two steps alternate until σ settles. The
//! iteration is started from a grid of candidate σ values below the
//! quantile-based initial guess and the candidate with the largest Ω wins.

use log::debug;
use statrs::distribution::{ContinuousCDF, Gamma};

use super::{NoiseField, NoiseProvenance};
use crate::error::{NlsamError, Result};
use crate::filters::median;
use crate::volume::Volume4D;

/// Number of starting points scanned below the initial σ guess.
const CANDIDATES: usize = 100;
const MIN_SLICE_VOXELS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiesnoConfig {
    pub alpha: f64,
    pub quantile: f64,
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for PiesnoConfig {
    fn default() -> Self {
        PiesnoConfig { alpha: 0.01, quantile: 0.5, tolerance: 1e-5, max_iters: 100 }
    }
}

impl PiesnoConfig {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(NlsamError::InvalidParameter(format!("piesno alpha {}", self.alpha)));
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(NlsamError::InvalidParameter(format!("piesno quantile {}", self.quantile)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiesnoResult {
    pub sigma: f64,
    /// Indices (into the slice's voxel list) identified as pure noise.
    pub background: Vec<usize>,
}

fn gamma_quantile(shape: f64, rate: f64, p: f64) -> f64 {
    Gamma::new(shape, rate).expect("valid gamma parameters").inverse_cdf(p)
}

fn pooled_quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Runs PIESNO on one slice. `slice` holds `n_volumes` consecutive values for
/// each voxel (voxel-major).
pub fn piesno_slice(slice: &[f64], n_volumes: usize, n_coils: usize, cfg: &PiesnoConfig) -> Result<PiesnoResult> {
    cfg.validate()?;
    if n_volumes == 0 || !slice.len().is_multiple_of(n_volumes) {
        return Err(NlsamError::DimensionMismatch(format!(
            "slice of {} values is not a multiple of {n_volumes} volumes",
            slice.len()
        )));
    }
    let n_vox = slice.len() / n_volumes;
    if n_vox < MIN_SLICE_VOXELS {
        return Err(NlsamError::InvalidParameter(format!(
            "slice has {n_vox} voxels, PIESNO needs at least {MIN_SLICE_VOXELS}"
        )));
    }
    let n = n_coils as f64;
    let k = n_volumes as f64;
    let mean_sq: Vec<f64> = slice.chunks_exact(n_volumes).map(|c| c.iter().map(|v| v * v).sum::<f64>() / k).collect();

    let lambda_minus = gamma_quantile(n * k, k, cfg.alpha / 2.0);
    let lambda_plus = gamma_quantile(n * k, k, 1.0 - cfg.alpha / 2.0);
    let denom = (2.0 * gamma_quantile(n, 1.0, cfg.quantile)).sqrt();
    let sigma0 = pooled_quantile(slice, cfg.quantile) / denom;
    if !(sigma0 > 0.0) {
        return Err(NlsamError::NoBackground);
    }

    let select = |sigma: f64| -> Vec<usize> {
        let scale = 1.0 / (2.0 * sigma * sigma);
        mean_sq
            .iter()
            .enumerate()
            .filter(|(_, &ms)| {
                let s = ms * scale;
                s >= lambda_minus && s <= lambda_plus
            })
            .map(|(i, _)| i)
            .collect()
    };

    let mut best: Option<PiesnoResult> = None;
    for l in 1..=CANDIDATES {
        let mut sigma = sigma0 * l as f64 / CANDIDATES as f64;
        let mut omega = Vec::new();
        for _ in 0..cfg.max_iters {
            omega = select(sigma);
            if omega.is_empty() {
                break;
            }
            let mean: f64 = omega.iter().map(|&i| mean_sq[i]).sum::<f64>() / omega.len() as f64;
            let next = (mean / (2.0 * n)).sqrt();
            let done = (next - sigma).abs() <= cfg.tolerance * sigma;
            sigma = next;
            if done {
                omega = select(sigma);
                break;
            }
        }
        if omega.is_empty() {
            continue;
        }
        if best.as_ref().is_none_or(|b| omega.len() > b.background.len()) {
            best = Some(PiesnoResult { sigma, background: omega });
        }
    }
    best.ok_or(NlsamError::NoBackground)
}

/// Runs PIESNO on every axial slice; slices without a background set take the
/// median σ of the successful slices.
pub fn piesno(vol: &Volume4D, n_coils: usize, cfg: &PiesnoConfig) -> Result<NoiseField> {
    let [nx, ny, nz] = vol.spatial_dims();
    let nv = vol.n_volumes();
    let mut per_slice = vec![None; nz];
    for (z, slot) in per_slice.iter_mut().enumerate() {
        let mut slice = Vec::with_capacity(nx * ny * nv);
        for y in 0..ny {
            for x in 0..nx {
                for v in 0..nv {
                    slice.push(vol.get(x, y, z, v));
                }
            }
        }
        match piesno_slice(&slice, nv, n_coils, cfg) {
            Ok(r) => {
                debug!("piesno slice {z}: sigma={} |omega|={}", r.sigma, r.background.len());
                *slot = Some(r.sigma);
            }
            Err(e) => debug!("piesno slice {z}: {e}"),
        }
    }
    let mut found: Vec<f64> = per_slice.iter().flatten().copied().collect();
    if found.is_empty() {
        return Err(NlsamError::NoBackground);
    }
    let fallback = median(&mut found);
    let mut sigma = Vec::with_capacity(nx * ny * nz);
    for s in &per_slice {
        let s = s.unwrap_or(fallback);
        sigma.extend(std::iter::repeat_n(s, nx * ny));
    }
    NoiseField::new([nx, ny, nz], sigma, n_coils, NoiseProvenance::Piesno)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero_slice_has_no_background() {
        let slice = vec![0.0; 200 * 4];
        assert!(matches!(piesno_slice(&slice, 4, 1, &PiesnoConfig::default()), Err(NlsamError::NoBackground)));
    }

    #[test]
    fn small_slice_rejected() {
        let slice = vec![1.0; 50 * 4];
        assert!(piesno_slice(&slice, 4, 1, &PiesnoConfig::default()).is_err());
    }

    #[test]
    fn gamma_quantiles_are_consistent() {
        let g = Gamma::new(192.0, 16.0).unwrap();
        let q = gamma_quantile(192.0, 16.0, 0.005);
        assert!((g.cdf(q) - 0.005).abs() < 1e-8);
    }
}
