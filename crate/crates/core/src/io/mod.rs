//! File formats: single-file NIfTI-1 volumes and FSL-style gradient tables.

mod fsl;
mod nifti;

pub use fsl::{parse_gradients, read_gradients, write_gradients};
pub use nifti::{read_mask, read_volume, write_mask, write_volume, write_volume_as, NiftiDataType};
