//! A small piecewise-constant crossing-fiber phantom.

use crate::angular::hemisphere_directions;
use crate::error::Result;
use crate::volume::{GradientTable, Mask3D, Volume4D, DEFAULT_B0_THRESHOLD};

/// Non-diffusion-weighted signal inside the phantom.
pub const PHANTOM_S0: f64 = 100.0;
const FIBER_AXIAL: f64 = 1.7e-3;
const FIBER_RADIAL: f64 = 0.3e-3;
const TISSUE_MD: f64 = 0.8e-3;

/// `n_b0` b0 volumes followed by `n_dirs` Fibonacci-hemisphere directions at `bval`.
pub fn phantom_gradient_table(n_b0: usize, n_dirs: usize, bval: f64) -> Result<GradientTable> {
    let mut bvals = vec![0.0; n_b0];
    let mut bvecs = vec![[0.0; 3]; n_b0];
    for g in hemisphere_directions(n_dirs) {
        bvals.push(bval);
        bvecs.push(g);
    }
    GradientTable::new(bvals, bvecs, DEFAULT_B0_THRESHOLD)
}

/// Tissue class of a phantom voxel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Outside,
    Tissue,
    /// Fiber along x.
    BundleX,
    /// Fiber along y.
    BundleY,
    Crossing,
}

/// Region layout: a sphere filling most of the grid, crossed by two
/// cylindrical bundles (along x and along y) through its center.
pub fn phantom_regions(dims: [usize; 3]) -> Vec<Region> {
    let c = dims.map(|d| (d as f64 - 1.0) / 2.0);
    let radius = 0.45 * dims.iter().copied().min().unwrap_or(0) as f64;
    let bundle = 0.22 * dims.iter().copied().min().unwrap_or(0) as f64;
    let mut out = Vec::with_capacity(dims.iter().product());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let (dx, dy, dz) = (x as f64 - c[0], y as f64 - c[1], z as f64 - c[2]);
                let region = if dx * dx + dy * dy + dz * dz > radius * radius {
                    Region::Outside
                } else {
                    let in_x = dy * dy + dz * dz <= bundle * bundle;
                    let in_y = dx * dx + dz * dz <= bundle * bundle;
                    match (in_x, in_y) {
                        (true, true) => Region::Crossing,
                        (true, false) => Region::BundleX,
                        (false, true) => Region::BundleY,
                        (false, false) => Region::Tissue,
                    }
                };
                out.push(region);
            }
        }
    }
    out
}

fn stick_attenuation(b: f64, g: [f64; 3], axis: usize) -> f64 {
    let cos2 = g[axis] * g[axis];
    (-b * (FIBER_RADIAL + (FIBER_AXIAL - FIBER_RADIAL) * cos2)).exp()
}

/// Noiseless signal under the tensor model for every region, plus the
/// in-phantom mask. Background voxels are zero.
pub fn crossing_phantom(dims: [usize; 3], table: &GradientTable) -> Result<(Volume4D, Mask3D)> {
    let regions = phantom_regions(dims);
    let n = regions.len();
    let nv = table.len();
    let mut data = vec![0.0; n * nv];
    for v in 0..nv {
        let b = table.bvals()[v];
        let g = table.bvecs()[v];
        let signal = |r: Region| match r {
            Region::Outside => 0.0,
            _ if table.is_b0(v) => PHANTOM_S0,
            Region::Tissue => PHANTOM_S0 * (-b * TISSUE_MD).exp(),
            Region::BundleX => PHANTOM_S0 * stick_attenuation(b, g, 0),
            Region::BundleY => PHANTOM_S0 * stick_attenuation(b, g, 1),
            Region::Crossing => PHANTOM_S0 * 0.5 * (stick_attenuation(b, g, 0) + stick_attenuation(b, g, 1)),
        };
        for (i, &r) in regions.iter().enumerate() {
            data[v * n + i] = signal(r);
        }
    }
    let vol = Volume4D::new([dims[0], dims[1], dims[2], nv], [2.0; 3], data)?;
    let mask = Mask3D::new(dims, regions.iter().map(|&r| r != Region::Outside).collect())?;
    Ok((vol, mask))
}
