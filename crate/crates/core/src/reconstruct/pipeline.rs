use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;

use super::aggregate::{aggregate_blocks, average_subset_outputs, Eq5Weighting, SubsetEstimate};
use crate::angular::{all_subsets, greedy_set_cover, AngularSubset};
use crate::blocks::{assemble_block_matrix, BlockConfig, PatchMatrix};
use crate::distributions::{stabilize_volume, StabilizeOptions};
use crate::error::{NlsamError, Result};
use crate::noise::NoiseField;
use crate::seed::derive_seed;
use crate::sparse::{
    encode_bounded_with, train_dictionary_columns, Dictionary, EncodeOptions, PenaltyRule, TrainOptions,
};
use crate::volume::{GradientTable, Mask3D, Volume4D};

/// Which angular subsets are denoised.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    /// One subset per DWI.
    #[default]
    Full,
    /// A greedy set cover of the full family.
    Fast,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::Fast => "fast",
        }
    }
}

/// Whether each subset learns its own dictionary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DictionaryScope {
    #[default]
    PerSubset,
    /// One dictionary trained on the pooled columns of every subset.
    Global,
}

impl DictionaryScope {
    pub fn as_str(self) -> &'static str {
        match self {
            DictionaryScope::PerSubset => "per_subset",
            DictionaryScope::Global => "global",
        }
    }
}

/// Everything that controls a denoising run.
#[derive(Clone, Debug)]
pub struct DenoiseConfig {
    pub block: BlockConfig,
    pub penalty: PenaltyRule,
    pub mode: Mode,
    /// Map magnitudes to Gaussian-distributed values before denoising.
    pub stabilize: bool,
    pub stabilize_options: StabilizeOptions,
    pub weighting: Eq5Weighting,
    pub dictionary: DictionaryScope,
    /// Training controls; the seed field is ignored in favor of `seed`.
    pub train: TrainOptions,
    pub encode: EncodeOptions,
    /// Only blocks centered inside the mask are processed; `None` means everywhere.
    pub mask: Option<Mask3D>,
    pub seed: u64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        let penalty = PenaltyRule::default();
        Self {
            block: BlockConfig::default(),
            penalty,
            mode: Mode::Full,
            stabilize: true,
            stabilize_options: StabilizeOptions::default(),
            weighting: Eq5Weighting::Inverse,
            dictionary: DictionaryScope::PerSubset,
            train: TrainOptions::default(),
            encode: EncodeOptions {
                reweight_tol: penalty.reweight_tol,
                max_reweight: penalty.max_reweight,
                ..EncodeOptions::default()
            },
            mask: None,
            seed: 0,
        }
    }
}

/// What a run did, for logs and provenance files.
#[derive(Clone, Debug, Default)]
pub struct DenoiseReport {
    pub subsets_total: usize,
    /// Targets of the subsets actually processed, in processing order.
    pub subset_targets: Vec<usize>,
    pub columns_per_subset: usize,
    pub columns_encoded: usize,
    pub zero_codes: usize,
    /// Columns whose residual bound could not be met by any nonnegative code.
    pub bound_failures: usize,
    pub mean_l0: f64,
    pub seconds: f64,
}

/// [`nlsam_denoise_with_report`] without the report.
pub fn nlsam_denoise(
    vol: &Volume4D,
    table: &GradientTable,
    field: &NoiseField,
    cfg: &DenoiseConfig,
) -> Result<Volume4D> {
    nlsam_denoise_with_report(vol, table, field, cfg).map(|(out, _)| out)
}

/// Stabilize, match angular neighbors, then per subset: extract blocks,
/// learn a dictionary, code every block under its local residual bound and
/// overlap-average; finally average the estimates each volume received.
pub fn nlsam_denoise_with_report(
    vol: &Volume4D,
    table: &GradientTable,
    field: &NoiseField,
    cfg: &DenoiseConfig,
) -> Result<(Volume4D, DenoiseReport)> {
    let start = Instant::now();
    cfg.block.validate()?;
    table.check_matches(vol)?;
    let dims = vol.spatial_dims();
    if field.dims() != dims {
        return Err(NlsamError::DimensionMismatch(format!("noise field {:?} vs volume {dims:?}", field.dims())));
    }
    let mask = match &cfg.mask {
        Some(m) => {
            m.check_matches(vol)?;
            m.clone()
        }
        None => Mask3D::full(dims),
    };

    let mut work = if cfg.stabilize { stabilize_volume(vol, field, &cfg.stabilize_options)? } else { vol.clone() };
    let b0s = table.b0_indices();
    if b0s.len() > 1 {
        let n = work.n_spatial();
        let mut mean = vec![0.0; n];
        for &b in &b0s {
            mean.iter_mut().zip(work.volume(b)).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= b0s.len() as f64);
        work.volume_mut(b0s[0]).copy_from_slice(&mean);
    }

    let family = all_subsets(table, cfg.block.angular_neighbors)?;
    let chosen: Vec<AngularSubset> = match cfg.mode {
        Mode::Full => family.clone(),
        Mode::Fast => greedy_set_cover(&family).into_iter().map(|i| family[i].clone()).collect(),
    };
    info!("processing {} of {} angular subsets ({} mode)", chosen.len(), family.len(), cfg.mode.as_str());

    let train_block = BlockConfig { stride: 1, ..cfg.block };
    let global = match cfg.dictionary {
        DictionaryScope::PerSubset => None,
        DictionaryScope::Global => {
            let mut pooled = Vec::new();
            let mut m = 0;
            for s in &chosen {
                let x = assemble_block_matrix(&work, s, &train_block, &mask)?;
                m = x.rows();
                pooled.extend_from_slice(x.data());
            }
            Some(train(&pooled, m, cfg, u64::MAX)?)
        }
    };

    let mut report = DenoiseReport { subsets_total: family.len(), ..Default::default() };
    let mut estimates = Vec::with_capacity(chosen.len());
    let mut l0_total = 0usize;
    for subset in &chosen {
        let x = assemble_block_matrix(&work, subset, &cfg.block, &mask)?;
        let t_train = Instant::now();
        let dict = match &global {
            Some(d) => d.clone(),
            None => {
                let data = if cfg.block.stride == 1 {
                    x.data().to_vec()
                } else {
                    assemble_block_matrix(&work, subset, &train_block, &mask)?.data().to_vec()
                };
                train(&data, x.rows(), cfg, subset.target() as u64)?
            }
        };
        let train_secs = t_train.elapsed().as_secs_f64();
        let t_encode = Instant::now();
        let (denoised, l0, stats) = encode_all(&x, &dict, field, cfg)?;
        let encode_secs = t_encode.elapsed().as_secs_f64();
        report.columns_encoded += x.n_cols();
        report.columns_per_subset = x.n_cols();
        report.zero_codes += stats.0;
        report.bound_failures += stats.1;
        l0_total += l0.iter().sum::<usize>();
        let inputs: Vec<&[f64]> = subset.members().iter().map(|&v| work.volume(v)).collect();
        let images = aggregate_blocks(&denoised, &l0, cfg.weighting, dims, &inputs, Some(&mask))?;
        debug!(
            "subset {}: {} blocks, {} zero codes, training {train_secs:.1}s, coding {encode_secs:.1}s",
            subset.target(),
            x.n_cols(),
            stats.0
        );
        report.subset_targets.push(subset.target());
        estimates.push(SubsetEstimate { members: subset.members().to_vec(), images });
    }

    let mut out = average_subset_outputs(&estimates, &work, table)?;
    // voxels no block reached stay exactly as they came in
    let covered = coverage(dims, &cfg.block, &mask)?;
    for v in 0..out.n_volumes() {
        let src = vol.volume(v);
        for (i, o) in out.volume_mut(v).iter_mut().enumerate() {
            if !covered[i] {
                *o = src[i];
            } else if *o < 0.0 {
                *o = 0.0;
            }
        }
    }
    report.mean_l0 = if report.columns_encoded > 0 { l0_total as f64 / report.columns_encoded as f64 } else { 0.0 };
    report.seconds = start.elapsed().as_secs_f64();
    info!(
        "denoised {} blocks in {:.1}s (mean l0 {:.2}, {} zero codes, {} bound failures)",
        report.columns_encoded, report.seconds, report.mean_l0, report.zero_codes, report.bound_failures
    );
    Ok((out, report))
}

fn train(data: &[f64], m: usize, cfg: &DenoiseConfig, stream: u64) -> Result<Dictionary> {
    let opts = TrainOptions { seed: derive_seed(cfg.seed, stream), ..cfg.train };
    Ok(train_dictionary_columns(data, m, &opts)?.dictionary)
}

/// Codes every column under its local bound. Returns the reconstructions,
/// the ℓ0 counts and (zero codes, bound failures).
fn encode_all(
    x: &PatchMatrix,
    dict: &Dictionary,
    field: &NoiseField,
    cfg: &DenoiseConfig,
) -> Result<(PatchMatrix, Vec<usize>, (usize, usize))> {
    let m = x.rows();
    let dims = field.dims();
    let results: Vec<Result<(Vec<f64>, usize, bool)>> = x
        .centers()
        .par_iter()
        .enumerate()
        .map(|(j, c)| {
            let col = x.column(j);
            let idx = c[0] + dims[0] * (c[1] + dims[1] * c[2]);
            let sigma = field.sigma()[idx];
            if sigma <= 0.0 {
                return Ok((col.to_vec(), 0, true));
            }
            let lambda = cfg.penalty.coder_bound(sigma * sigma, m);
            let code = encode_bounded_with(col, dict, lambda, sigma, derive_seed(cfg.seed, idx as u64), &cfg.encode)?;
            Ok((dict.reconstruct(&code.alpha), code.l0(), code.bound_met))
        })
        .collect();
    let mut data = Vec::with_capacity(m * x.n_cols());
    let mut l0 = Vec::with_capacity(x.n_cols());
    let (mut zero, mut failed) = (0, 0);
    for r in results {
        let (recon, count, met) = r?;
        data.extend_from_slice(&recon);
        zero += usize::from(count == 0);
        failed += usize::from(!met);
        l0.push(count);
    }
    Ok((x.with_data(data)?, l0, (zero, failed)))
}

/// Voxels inside the mask that at least one processed block touches.
fn coverage(dims: [usize; 3], block: &BlockConfig, mask: &Mask3D) -> Result<Vec<bool>> {
    let centers = crate::blocks::patch_centers(dims, block, mask)?;
    let mut covered = vec![false; dims.iter().product()];
    let r = block.radius();
    for c in centers {
        for z in c[2] - r..=c[2] + r {
            for y in c[1] - r..=c[1] + r {
                for x in c[0] - r..=c[0] + r {
                    let i = x + dims[0] * (y + dims[1] * z);
                    covered[i] = mask.at(i);
                }
            }
        }
    }
    Ok(covered)
}
