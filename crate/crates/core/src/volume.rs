//! In-memory containers for diffusion datasets.
//!
//! Voxel data is stored in a single linear buffer with x varying fastest and
//! the volume index slowest: `offset = x + X * (y + Y * (z + Z * v))`.

use crate::error::{NlsamError, Result};

/// Default b-value (s/mm²) at or below which a volume counts as a b0.
pub const DEFAULT_B0_THRESHOLD: f64 = 50.0;

/// Orientation fields carried through from a NIfTI header without
/// interpretation.
#[derive(Debug, Clone, PartialEq)]
pub struct Orientation {
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub qfac: f32,
    pub srow: [[f32; 4]; 3],
    pub xyzt_units: u8,
}

impl Default for Orientation {
    fn default() -> Self {
        Orientation {
            qform_code: 0,
            sform_code: 0,
            quatern: [0.0; 3],
            qoffset: [0.0; 3],
            qfac: 1.0,
            srow: [[0.0; 4]; 3],
            xyzt_units: 2,
        }
    }
}

/// A 4D grid of intensities (X×Y×Z×V) with voxel spacing in millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume4D {
    dims: [usize; 4],
    spacing: [f64; 3],
    data: Vec<f64>,
    pub orientation: Orientation,
}

impl Volume4D {
    pub fn new(dims: [usize; 4], spacing: [f64; 3], data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(NlsamError::InvalidParameter(format!("dimensions must be positive, got {dims:?}")));
        }
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(NlsamError::DimensionMismatch(format!(
                "dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(NlsamError::InvalidParameter(format!("voxel spacing must be positive, got {spacing:?}")));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(NlsamError::NonFinite(format!("intensity at offset {pos}")));
        }
        Ok(Volume4D { dims, spacing, data, orientation: Orientation::default() })
    }

    pub fn zeros(dims: [usize; 4], spacing: [f64; 3]) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, spacing, vec![0.0; n])
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn spatial_dims(&self) -> [usize; 3] {
        [self.dims[0], self.dims[1], self.dims[2]]
    }

    pub fn n_volumes(&self) -> usize {
        self.dims[3]
    }

    /// Number of voxels in one 3D volume.
    pub fn n_spatial(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, x: usize, y: usize, z: usize, v: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * (z + self.dims[2] * v))
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize, v: usize) -> f64 {
        self.data[self.offset(x, y, z, v)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: usize, value: f64) {
        let o = self.offset(x, y, z, v);
        self.data[o] = value;
    }

    /// The 3D volume `v` as a contiguous slice.
    pub fn volume(&self, v: usize) -> &[f64] {
        let n = self.n_spatial();
        &self.data[v * n..(v + 1) * n]
    }

    pub fn volume_mut(&mut self, v: usize) -> &mut [f64] {
        let n = self.n_spatial();
        &mut self.data[v * n..(v + 1) * n]
    }

    /// Builds a volume from per-volume 3D buffers, keeping spacing and
    /// orientation from `self`.
    pub fn with_volumes(&self, volumes: &[Vec<f64>]) -> Result<Self> {
        let n = self.n_spatial();
        let mut data = Vec::with_capacity(n * volumes.len());
        for (v, vol) in volumes.iter().enumerate() {
            if vol.len() != n {
                return Err(NlsamError::DimensionMismatch(format!(
                    "volume {v} has {} voxels, expected {n}",
                    vol.len()
                )));
            }
            data.extend_from_slice(vol);
        }
        let dims = [self.dims[0], self.dims[1], self.dims[2], volumes.len()];
        let mut out = Volume4D::new(dims, self.spacing, data)?;
        out.orientation = self.orientation.clone();
        Ok(out)
    }

    /// Replaces negative intensities with zero, returning how many were clamped.
    pub fn clamp_negative(&mut self) -> usize {
        let mut count = 0;
        for v in self.data.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
                count += 1;
            }
        }
        count
    }
}

/// A boolean mask over the spatial grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask3D {
    dims: [usize; 3],
    data: Vec<bool>,
}

impl Mask3D {
    pub fn new(dims: [usize; 3], data: Vec<bool>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n == 0 || n != data.len() {
            return Err(NlsamError::DimensionMismatch(format!(
                "mask dims {dims:?} do not match {} values",
                data.len()
            )));
        }
        Ok(Mask3D { dims, data })
    }

    pub fn full(dims: [usize; 3]) -> Self {
        let n = dims.iter().product();
        Mask3D { dims, data: vec![true; n] }
    }

    /// Voxels where any volume of `vol` is nonzero.
    pub fn nonzero(vol: &Volume4D) -> Self {
        let n = vol.n_spatial();
        let mut data = vec![false; n];
        for v in 0..vol.n_volumes() {
            for (m, &x) in data.iter_mut().zip(vol.volume(v)) {
                *m |= x != 0.0;
            }
        }
        Mask3D { dims: vol.spatial_dims(), data }
    }

    /// Mask of voxels whose value in `values` is strictly positive.
    pub fn from_values(dims: [usize; 3], values: &[f64]) -> Result<Self> {
        Self::new(dims, values.iter().map(|&v| v > 0.0).collect())
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[x + self.dims[0] * (y + self.dims[1] * z)]
    }

    #[inline]
    pub fn at(&self, idx: usize) -> bool {
        self.data[idx]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn check_matches(&self, vol: &Volume4D) -> Result<()> {
        if self.dims != vol.spatial_dims() {
            return Err(NlsamError::DimensionMismatch(format!(
                "mask dims {:?} vs volume spatial dims {:?}",
                self.dims,
                vol.spatial_dims()
            )));
        }
        Ok(())
    }
}

/// Per-volume b-values and gradient directions.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTable {
    bvals: Vec<f64>,
    bvecs: Vec<[f64; 3]>,
    b0_threshold: f64,
}

impl GradientTable {
    /// Validates the table and normalizes every nonzero direction to unit length.
    pub fn new(bvals: Vec<f64>, bvecs: Vec<[f64; 3]>, b0_threshold: f64) -> Result<Self> {
        if bvals.len() != bvecs.len() {
            return Err(NlsamError::Gradients(format!("{} b-values but {} directions", bvals.len(), bvecs.len())));
        }
        if bvals.is_empty() {
            return Err(NlsamError::Gradients("empty gradient table".into()));
        }
        if let Some(b) = bvals.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(NlsamError::Gradients(format!("invalid b-value {b}")));
        }
        let mut normalized = Vec::with_capacity(bvecs.len());
        for (i, g) in bvecs.iter().enumerate() {
            let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
            if !norm.is_finite() {
                return Err(NlsamError::Gradients(format!("non-finite direction {i}")));
            }
            if norm > 0.0 {
                normalized.push([g[0] / norm, g[1] / norm, g[2] / norm]);
            } else if bvals[i] > b0_threshold {
                return Err(NlsamError::Gradients(format!("volume {i} has b={} but a zero direction", bvals[i])));
            } else {
                normalized.push([0.0; 3]);
            }
        }
        if !bvals.iter().any(|&b| b <= b0_threshold) {
            return Err(NlsamError::Gradients(format!("no b0 volume (b <= {b0_threshold})")));
        }
        Ok(GradientTable { bvals, bvecs: normalized, b0_threshold })
    }

    pub fn len(&self) -> usize {
        self.bvals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bvals.is_empty()
    }

    pub fn bvals(&self) -> &[f64] {
        &self.bvals
    }

    pub fn bvecs(&self) -> &[[f64; 3]] {
        &self.bvecs
    }

    pub fn b0_threshold(&self) -> f64 {
        self.b0_threshold
    }

    pub fn is_b0(&self, idx: usize) -> bool {
        self.bvals[idx] <= self.b0_threshold
    }

    pub fn b0_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_b0(i)).collect()
    }

    pub fn dwi_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_b0(i)).collect()
    }

    pub fn check_matches(&self, vol: &Volume4D) -> Result<()> {
        if self.len() != vol.n_volumes() {
            return Err(NlsamError::Gradients(format!(
                "gradient table has {} entries but volume has {} volumes",
                self.len(),
                vol.n_volumes()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_are_unique_and_x_fastest() {
        let vol = Volume4D::zeros([2, 3, 4, 2], [1.0; 3]).unwrap();
        let mut seen = [false; 48];
        for v in 0..2 {
            for z in 0..4 {
                for y in 0..3 {
                    for x in 0..2 {
                        let o = vol.offset(x, y, z, v);
                        assert!(!seen[o]);
                        seen[o] = true;
                    }
                }
            }
        }
        assert_eq!(vol.offset(1, 0, 0, 0), 1);
        assert_eq!(vol.offset(0, 0, 0, 1), 24);
    }

    #[test]
    fn rejects_bad_volumes() {
        assert!(Volume4D::new([2, 2, 2, 1], [1.0; 3], vec![0.0; 7]).is_err());
        assert!(Volume4D::new([2, 2, 2, 1], [1.0, 0.0, 1.0], vec![0.0; 8]).is_err());
        assert!(Volume4D::new([1, 1, 1, 1], [1.0; 3], vec![f64::NAN]).is_err());
    }

    #[test]
    fn clamps_negative_values() {
        let mut vol = Volume4D::new([2, 1, 1, 1], [1.0; 3], vec![-1.0, 2.0]).unwrap();
        assert_eq!(vol.clamp_negative(), 1);
        assert_eq!(vol.data(), &[0.0, 2.0]);
    }

    #[test]
    fn gradient_table_normalizes_and_flags_b0() {
        let t = GradientTable::new(
            vec![0.0, 1000.0, 1000.0],
            vec![[0.0; 3], [2.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
            DEFAULT_B0_THRESHOLD,
        )
        .unwrap();
        assert_eq!(t.b0_indices(), vec![0]);
        assert_eq!(t.dwi_indices(), vec![1, 2]);
        assert_eq!(t.bvecs()[1], [1.0, 0.0, 0.0]);
    }

    #[test]
    fn gradient_table_requires_b0() {
        let err = GradientTable::new(vec![1000.0], vec![[1.0, 0.0, 0.0]], 50.0);
        assert!(err.is_err());
    }
}
