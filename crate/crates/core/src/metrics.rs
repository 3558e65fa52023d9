//! PSNR and SSIM against a reference, restricted to a mask.

use rayon::prelude::*;

use crate::error::{NlsamError, Result};
use crate::filters::gaussian_kernel;
use crate::volume::{Mask3D, Volume4D};

const SSIM_SIGMA: f64 = 1.5;
const SSIM_RADIUS: usize = 5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// PSNR and SSIM, overall and per volume.
#[derive(Clone, Debug, PartialEq)]
pub struct QualityReport {
    /// `+∞` when the volumes agree exactly inside the mask.
    pub psnr_db: f64,
    pub psnr_infinite: bool,
    pub psnr_per_volume: Vec<f64>,
    pub ssim: f64,
    pub ssim_per_volume: Vec<f64>,
    pub mask_voxels: usize,
}

fn check(reference: &Volume4D, test: &Volume4D, mask: &Mask3D) -> Result<()> {
    if reference.dims() != test.dims() {
        return Err(NlsamError::DimensionMismatch(format!("{:?} vs {:?}", reference.dims(), test.dims())));
    }
    mask.check_matches(reference)?;
    if mask.count() == 0 {
        return Err(NlsamError::InvalidParameter("empty mask".into()));
    }
    Ok(())
}

fn masked_max(reference: &Volume4D, mask: &Mask3D) -> f64 {
    (0..reference.n_volumes())
        .flat_map(|v| reference.volume(v).iter().enumerate().filter(|(i, _)| mask.at(*i)).map(|(_, &x)| x))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn masked_mse(a: &[f64], b: &[f64], mask: &Mask3D) -> (f64, usize) {
    let mut sum = 0.0;
    let mut count = 0;
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if mask.at(i) {
            sum += (x - y) * (x - y);
            count += 1;
        }
    }
    (sum, count)
}

fn to_db(max: f64, mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (max * max / mse).log10()
    }
}

/// `10 log10(MAX² / MSE)`: MAX is the largest in-mask reference value and
/// the MSE runs over in-mask voxels of all volumes. `+∞` when MSE is zero.
pub fn psnr(reference: &Volume4D, test: &Volume4D, mask: &Mask3D) -> Result<f64> {
    check(reference, test, mask)?;
    let (sum, count) = (0..reference.n_volumes())
        .map(|v| masked_mse(reference.volume(v), test.volume(v), mask))
        .fold((0.0, 0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    Ok(to_db(masked_max(reference, mask), sum / count as f64))
}

fn dynamic_range(reference: &Volume4D, mask: &Mask3D) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in 0..reference.n_volumes() {
        for (i, &x) in reference.volume(v).iter().enumerate() {
            if mask.at(i) {
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
    }
    hi - lo
}

/// Mean SSIM over in-mask voxels of all volumes, computed on axial slices
/// with an 11-tap Gaussian window (σ = 1.5, truncated and renormalized at
/// the slice border), `K1 = 0.01`, `K2 = 0.03` and `L` the in-mask range of
/// the reference.
pub fn ssim(reference: &Volume4D, test: &Volume4D, mask: &Mask3D) -> Result<f64> {
    check(reference, test, mask)?;
    let range = dynamic_range(reference, mask);
    if !(range > 0.0) {
        return Err(NlsamError::ZeroDynamicRange);
    }
    ssim_with_range(reference, test, mask, range)
}

/// [`ssim`] with an explicit dynamic range `L`.
pub fn ssim_with_range(reference: &Volume4D, test: &Volume4D, mask: &Mask3D, range: f64) -> Result<f64> {
    check(reference, test, mask)?;
    if !(range > 0.0) {
        return Err(NlsamError::ZeroDynamicRange);
    }
    let (sum, count) = (0..reference.n_volumes())
        .map(|v| ssim_volume(reference.volume(v), test.volume(v), reference.spatial_dims(), mask, range))
        .fold((0.0, 0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    Ok(sum / count as f64)
}

/// Sum of the SSIM map over in-mask voxels, and their count.
fn ssim_volume(a: &[f64], b: &[f64], dims: [usize; 3], mask: &Mask3D, range: f64) -> (f64, usize) {
    let c1 = (K1 * range).powi(2);
    let c2 = (K2 * range).powi(2);
    let plane = dims[0] * dims[1];
    let kernel = ssim_kernel();
    let per_slice: Vec<(f64, usize)> = (0..dims[2])
        .into_par_iter()
        .map(|z| {
            let sa = &a[z * plane..(z + 1) * plane];
            let sb = &b[z * plane..(z + 1) * plane];
            let blur = |f: &dyn Fn(usize) -> f64| window_mean(f, dims[0], dims[1], &kernel);
            let mu_a = blur(&|i| sa[i]);
            let mu_b = blur(&|i| sb[i]);
            let aa = blur(&|i| sa[i] * sa[i]);
            let bb = blur(&|i| sb[i] * sb[i]);
            let ab = blur(&|i| sa[i] * sb[i]);
            let mut sum = 0.0;
            let mut count = 0;
            for i in 0..plane {
                if !mask.at(z * plane + i) {
                    continue;
                }
                let var_a = aa[i] - mu_a[i] * mu_a[i];
                let var_b = bb[i] - mu_b[i] * mu_b[i];
                let cov = ab[i] - mu_a[i] * mu_b[i];
                let num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
                let den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2);
                sum += num / den;
                count += 1;
            }
            (sum, count)
        })
        .collect();
    per_slice.iter().fold((0.0, 0), |acc, x| (acc.0 + x.0, acc.1 + x.1))
}

fn ssim_kernel() -> Vec<f64> {
    let k = gaussian_kernel(SSIM_SIGMA);
    // gaussian_kernel truncates at 4σ; keep the central 11 taps
    let mid = k.len() / 2;
    let taps = k[mid - SSIM_RADIUS..=mid + SSIM_RADIUS].to_vec();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Separable weighted mean over the in-slice part of each window.
fn window_mean(f: &dyn Fn(usize) -> f64, nx: usize, ny: usize, kernel: &[f64]) -> Vec<f64> {
    let r = kernel.len() / 2;
    let pass = |get: &dyn Fn(usize, usize) -> f64, len_x: usize, len_y: usize, along_x: bool| {
        let mut out = vec![0.0; len_x * len_y];
        for y in 0..len_y {
            for x in 0..len_x {
                let (pos, len) = if along_x { (x, len_x) } else { (y, len_y) };
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for (t, &w) in kernel.iter().enumerate() {
                    let q = pos as isize + t as isize - r as isize;
                    if q < 0 || q >= len as isize {
                        continue;
                    }
                    let q = q as usize;
                    acc += w * if along_x { get(q, y) } else { get(x, q) };
                    wsum += w;
                }
                out[x + len_x * y] = acc / wsum;
            }
        }
        out
    };
    let first = pass(&|x, y| f(x + nx * y), nx, ny, true);
    pass(&|x, y| first[x + nx * y], nx, ny, false)
}

/// Both metrics plus per-volume values.
pub fn quality_report(reference: &Volume4D, test: &Volume4D, mask: &Mask3D) -> Result<QualityReport> {
    check(reference, test, mask)?;
    let max = masked_max(reference, mask);
    let range = dynamic_range(reference, mask);
    if !(range > 0.0) {
        return Err(NlsamError::ZeroDynamicRange);
    }
    let dims = reference.spatial_dims();
    let mut psnr_per_volume = Vec::new();
    let mut ssim_per_volume = Vec::new();
    let (mut se, mut n, mut ss, mut sn) = (0.0, 0usize, 0.0, 0usize);
    for v in 0..reference.n_volumes() {
        let (sum, count) = masked_mse(reference.volume(v), test.volume(v), mask);
        psnr_per_volume.push(to_db(max, sum / count as f64));
        se += sum;
        n += count;
        let (s, c) = ssim_volume(reference.volume(v), test.volume(v), dims, mask, range);
        ssim_per_volume.push(s / c as f64);
        ss += s;
        sn += c;
    }
    let psnr_db = to_db(max, se / n as f64);
    Ok(QualityReport {
        psnr_db,
        psnr_infinite: psnr_db.is_infinite(),
        psnr_per_volume,
        ssim: ss / sn as f64,
        ssim_per_volume,
        mask_voxels: mask.count(),
    })
}
