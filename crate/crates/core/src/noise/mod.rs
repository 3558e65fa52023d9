//! Gaussian-equivalent noise estimation: stationary per-slice (PIESNO) and
//! spatially varying fields.

mod field;
mod koay;
mod local;
mod piesno;

pub use field::{estimate_noise_field, fwhm_to_sigma_vox, noise_field_from_map, NOISE_FIELD_FWHM_MM};
pub use koay::{koay2006_snr_fixed_point, koay_lower_bound};
pub use local::{local_noise_variance, min_distance_calibration};
pub use piesno::{piesno, piesno_slice, PiesnoConfig, PiesnoResult};

use crate::error::{NlsamError, Result};
use crate::volume::Volume4D;

/// Where a noise field came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseProvenance {
    Piesno,
    LocalPatch,
    NoiseMap,
    ResidualField,
    /// Supplied by the caller, e.g. the ground truth of a simulation.
    Provided,
}

impl NoiseProvenance {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseProvenance::Piesno => "piesno",
            NoiseProvenance::LocalPatch => "local_patch",
            NoiseProvenance::NoiseMap => "noise_map",
            NoiseProvenance::ResidualField => "residual_field",
            NoiseProvenance::Provided => "provided",
        }
    }
}

/// Per-voxel Gaussian-equivalent noise standard deviation σ_G.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    dims: [usize; 3],
    sigma: Vec<f64>,
    n_coils: usize,
    provenance: NoiseProvenance,
}

impl NoiseField {
    pub fn new(dims: [usize; 3], sigma: Vec<f64>, n_coils: usize, provenance: NoiseProvenance) -> Result<Self> {
        if dims.iter().product::<usize>() != sigma.len() {
            return Err(NlsamError::DimensionMismatch(format!("noise field dims {dims:?} vs {} values", sigma.len())));
        }
        if n_coils == 0 {
            return Err(NlsamError::InvalidParameter("n_coils must be >= 1".into()));
        }
        if let Some(s) = sigma.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(NlsamError::NonFinite(format!("noise sigma {s}")));
        }
        Ok(NoiseField { dims, sigma, n_coils, provenance })
    }

    pub fn constant(dims: [usize; 3], sigma: f64, n_coils: usize, provenance: NoiseProvenance) -> Result<Self> {
        Self::new(dims, vec![sigma; dims.iter().product()], n_coils, provenance)
    }

    /// Reads σ from the first volume of a 3D image.
    pub fn from_volume(vol: &Volume4D, n_coils: usize, provenance: NoiseProvenance) -> Result<Self> {
        Self::new(vol.spatial_dims(), vol.volume(0).to_vec(), n_coils, provenance)
    }

    pub fn to_volume(&self, spacing: [f64; 3]) -> Result<Volume4D> {
        let d = self.dims;
        Volume4D::new([d[0], d[1], d[2], 1], spacing, self.sigma.clone())
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn n_coils(&self) -> usize {
        self.n_coils
    }

    pub fn provenance(&self) -> NoiseProvenance {
        self.provenance
    }

    pub fn scaled(&self, factor: f64) -> Self {
        NoiseField { sigma: self.sigma.iter().map(|s| s * factor).collect(), ..self.clone() }
    }
}
