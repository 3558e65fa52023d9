//! Overlapping 4D blocks flattened into the columns of a patch matrix.

use rayon::prelude::*;

use crate::angular::AngularSubset;
use crate::error::{NlsamError, Result};
use crate::volume::{Mask3D, Volume4D};

/// Spatial patch width, angular neighbor count and patch-center stride.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockConfig {
    pub patch_size: usize,
    pub angular_neighbors: usize,
    pub stride: usize,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self { patch_size: 3, angular_neighbors: 4, stride: 1 }
    }
}

impl BlockConfig {
    pub fn new(patch_size: usize, angular_neighbors: usize, stride: usize) -> Result<Self> {
        let cfg = Self { patch_size, angular_neighbors, stride };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.patch_size.is_multiple_of(2) {
            return Err(NlsamError::InvalidParameter(format!(
                "patch size must be odd and positive, got {}",
                self.patch_size
            )));
        }
        if self.angular_neighbors == 0 {
            return Err(NlsamError::InvalidParameter("need at least one angular neighbor".into()));
        }
        if self.stride == 0 {
            return Err(NlsamError::InvalidParameter("stride must be positive".into()));
        }
        Ok(())
    }

    pub fn radius(&self) -> usize {
        self.patch_size / 2
    }

    pub fn voxels_per_patch(&self) -> usize {
        self.patch_size.pow(3)
    }

    /// Column length: one patch from each of the b0, the target and its neighbors.
    pub fn signal_length(&self) -> usize {
        self.voxels_per_patch() * (self.angular_neighbors + 2)
    }
}

/// Column-major matrix of flattened blocks. Within a column, member `j`
/// occupies rows `j·ps³ .. (j+1)·ps³`, each patch in x-fastest order.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchMatrix {
    rows: usize,
    patch_size: usize,
    n_members: usize,
    data: Vec<f64>,
    centers: Vec<[usize; 3]>,
}

impl PatchMatrix {
    pub fn new(patch_size: usize, n_members: usize, data: Vec<f64>, centers: Vec<[usize; 3]>) -> Result<Self> {
        let rows = patch_size.pow(3) * n_members;
        if rows == 0 || data.len() != rows * centers.len() {
            return Err(NlsamError::DimensionMismatch(format!(
                "{} values for {} columns of length {rows}",
                data.len(),
                centers.len()
            )));
        }
        Ok(Self { rows, patch_size, n_members, data, centers })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.centers.len()
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn n_members(&self) -> usize {
        self.n_members
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn centers(&self) -> &[[usize; 3]] {
        &self.centers
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Same geometry, new contents.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.patch_size, self.n_members, data, self.centers.clone())
    }
}

/// In-mask patch centers at the given stride, in x-fastest scan order.
pub fn patch_centers(dims: [usize; 3], cfg: &BlockConfig, mask: &Mask3D) -> Result<Vec<[usize; 3]>> {
    cfg.validate()?;
    if mask.dims() != dims {
        return Err(NlsamError::DimensionMismatch(format!("mask {:?} vs volume {dims:?}", mask.dims())));
    }
    if dims.iter().any(|&d| d < cfg.patch_size) {
        return Err(NlsamError::DimensionMismatch(format!(
            "volume {dims:?} is smaller than the patch size {}",
            cfg.patch_size
        )));
    }
    let r = cfg.radius();
    let mut centers = Vec::new();
    for z in (r..dims[2] - r).step_by(cfg.stride) {
        for y in (r..dims[1] - r).step_by(cfg.stride) {
            for x in (r..dims[0] - r).step_by(cfg.stride) {
                if mask.get(x, y, z) {
                    centers.push([x, y, z]);
                }
            }
        }
    }
    Ok(centers)
}

/// Extracts every masked block of `subset` from `vol` as one column.
pub fn assemble_block_matrix(
    vol: &Volume4D,
    subset: &AngularSubset,
    cfg: &BlockConfig,
    mask: &Mask3D,
) -> Result<PatchMatrix> {
    if subset.members().len() != cfg.angular_neighbors + 2 {
        return Err(NlsamError::DimensionMismatch(format!(
            "subset has {} members, configuration expects {}",
            subset.members().len(),
            cfg.angular_neighbors + 2
        )));
    }
    if let Some(&bad) = subset.members().iter().find(|&&v| v >= vol.n_volumes()) {
        return Err(NlsamError::DimensionMismatch(format!("volume {bad} out of range")));
    }
    mask.check_matches(vol)?;
    let dims = vol.spatial_dims();
    let centers = patch_centers(dims, cfg, mask)?;
    let ps = cfg.patch_size;
    let r = cfg.radius();
    let rows = cfg.signal_length();
    let mut data = vec![0.0; rows * centers.len()];
    data.par_chunks_mut(rows).zip(centers.par_iter()).for_each(|(col, c)| {
        let mut k = 0;
        for &v in subset.members() {
            let src = vol.volume(v);
            for dz in 0..ps {
                for dy in 0..ps {
                    let base = (c[0] - r) + dims[0] * ((c[1] + dy - r) + dims[1] * (c[2] + dz - r));
                    col[k..k + ps].copy_from_slice(&src[base..base + ps]);
                    k += ps;
                }
            }
        }
    });
    PatchMatrix::new(ps, subset.members().len(), data, centers)
}
