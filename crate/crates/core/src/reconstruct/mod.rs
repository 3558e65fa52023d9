//! From denoised columns back to volumes, and the end-to-end pipeline.

mod aggregate;
mod pipeline;

pub use aggregate::{aggregate_blocks, average_subset_outputs, Accumulator, Eq5Weighting, SubsetEstimate};
pub use pipeline::{nlsam_denoise, nlsam_denoise_with_report, DenoiseConfig, DenoiseReport, DictionaryScope, Mode};
