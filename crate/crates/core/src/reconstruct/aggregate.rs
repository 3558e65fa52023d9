use rayon::prelude::*;

use crate::blocks::PatchMatrix;
use crate::error::{NlsamError, Result};
use crate::volume::{GradientTable, Mask3D, Volume4D};

/// How a block's sparsity turns into its weight in the overlap average.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Eq5Weighting {
    /// `1 / (1 + ‖α‖₀)`: sparser reconstructions count more.
    #[default]
    Inverse,
    /// `1 + ‖α‖₀`, the formula as printed.
    Literal,
}

impl Eq5Weighting {
    pub fn weight(self, l0: usize) -> f64 {
        match self {
            Eq5Weighting::Inverse => 1.0 / (1.0 + l0 as f64),
            Eq5Weighting::Literal => 1.0 + l0 as f64,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Eq5Weighting::Inverse => "inverse",
            Eq5Weighting::Literal => "literal",
        }
    }
}

/// Weighted sums of block values landing on one 3D image.
#[derive(Clone, Debug)]
pub struct Accumulator {
    dims: [usize; 3],
    numerator: Vec<f64>,
    denominator: Vec<f64>,
}

impl Accumulator {
    pub fn new(dims: [usize; 3]) -> Self {
        let n = dims.iter().product();
        Self { dims, numerator: vec![0.0; n], denominator: vec![0.0; n] }
    }

    /// Adds a `ps³` patch (x-fastest) centered at `center` with weight `w`.
    pub fn add_patch(&mut self, patch: &[f64], center: [usize; 3], ps: usize, w: f64) {
        let r = ps / 2;
        let d = self.dims;
        let mut k = 0;
        for dz in 0..ps {
            for dy in 0..ps {
                let base = (center[0] - r) + d[0] * ((center[1] + dy - r) + d[1] * (center[2] + dz - r));
                for dx in 0..ps {
                    self.numerator[base + dx] += w * patch[k];
                    self.denominator[base + dx] += w;
                    k += 1;
                }
            }
        }
    }

    pub fn numerator(&self) -> &[f64] {
        &self.numerator
    }

    pub fn denominator(&self) -> &[f64] {
        &self.denominator
    }

    /// Weighted means where blocks landed (and the mask allows); `input` elsewhere.
    pub fn finish(&self, input: &[f64], mask: Option<&Mask3D>) -> Vec<f64> {
        (0..input.len())
            .map(|i| {
                let allowed = mask.is_none_or(|m| m.at(i));
                if allowed && self.denominator[i] > 0.0 {
                    self.numerator[i] / self.denominator[i]
                } else {
                    input[i]
                }
            })
            .collect()
    }
}

/// Overlap-averages denoised blocks into one image per block member, each
/// block weighted by its sparsity. `inputs[j]` is member `j`'s original image;
/// voxels no block reaches, or outside `mask`, keep those values.
pub fn aggregate_blocks(
    columns: &PatchMatrix,
    l0: &[usize],
    weighting: Eq5Weighting,
    dims: [usize; 3],
    inputs: &[&[f64]],
    mask: Option<&Mask3D>,
) -> Result<Vec<Vec<f64>>> {
    let n: usize = dims.iter().product();
    if l0.len() != columns.n_cols() {
        return Err(NlsamError::DimensionMismatch(format!(
            "{} sparsity counts for {} columns",
            l0.len(),
            columns.n_cols()
        )));
    }
    if inputs.len() != columns.n_members() || inputs.iter().any(|img| img.len() != n) {
        return Err(NlsamError::DimensionMismatch("member images do not match the block geometry".into()));
    }
    if mask.is_some_and(|m| m.dims() != dims) {
        return Err(NlsamError::DimensionMismatch("mask does not match the block geometry".into()));
    }
    let ps = columns.patch_size();
    let r = ps / 2;
    if columns.centers().iter().any(|c| (0..3).any(|a| c[a] < r || c[a] + r >= dims[a])) {
        return Err(NlsamError::DimensionMismatch("block center too close to the volume edge".into()));
    }
    let seg = ps.pow(3);
    Ok((0..columns.n_members())
        .into_par_iter()
        .map(|j| {
            let mut acc = Accumulator::new(dims);
            for (col, (&c, &l)) in columns.centers().iter().zip(l0).enumerate() {
                let patch = &columns.column(col)[j * seg..(j + 1) * seg];
                acc.add_patch(patch, c, ps, weighting.weight(l));
            }
            acc.finish(inputs[j], mask)
        })
        .collect())
}

/// Denoised images produced by one angular subset, listed in member order.
#[derive(Clone, Debug)]
pub struct SubsetEstimate {
    pub members: Vec<usize>,
    pub images: Vec<Vec<f64>>,
}

/// Plain average, per volume, over every subset that produced an estimate of
/// it. The b0 slot (first member) is averaged over all subsets and written to
/// every b0 volume of `table`.
pub fn average_subset_outputs(
    estimates: &[SubsetEstimate],
    template: &Volume4D,
    table: &GradientTable,
) -> Result<Volume4D> {
    table.check_matches(template)?;
    let n = template.n_spatial();
    let nv = template.n_volumes();
    let mut sums = vec![vec![0.0; n]; nv];
    let mut counts = vec![0usize; nv];
    let mut b0_sum = vec![0.0; n];
    let mut b0_count = 0usize;
    for est in estimates {
        if est.members.len() != est.images.len() || est.images.iter().any(|img| img.len() != n) {
            return Err(NlsamError::DimensionMismatch("subset estimate does not match the volume".into()));
        }
        for (slot, (&v, img)) in est.members.iter().zip(&est.images).enumerate() {
            if v >= nv {
                return Err(NlsamError::DimensionMismatch(format!("volume {v} out of range")));
            }
            let target = if slot == 0 { &mut b0_sum } else { &mut sums[v] };
            target.iter_mut().zip(img).for_each(|(s, x)| *s += x);
            if slot == 0 {
                b0_count += 1;
            } else {
                counts[v] += 1;
            }
        }
    }
    let mut out = template.clone();
    for v in 0..nv {
        let (sum, count) = if table.is_b0(v) { (&b0_sum, b0_count) } else { (&sums[v], counts[v]) };
        if count == 0 {
            return Err(NlsamError::InvalidParameter(format!("volume {v} has no denoised estimate")));
        }
        let inv = 1.0 / count as f64;
        out.volume_mut(v).iter_mut().zip(sum).for_each(|(o, s)| *o = s * inv);
    }
    Ok(out)
}
