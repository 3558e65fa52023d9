#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::excessive_precision)]

pub mod angular;
pub mod blocks;
pub mod cli;
pub mod distributions;
pub mod error;
pub mod filters;
pub mod io;
pub mod metrics;
pub mod noise;
pub mod phantom;
pub mod reconstruct;
pub mod seed;
pub mod sim;
pub mod sparse;
pub mod special;
pub mod volume;
