//! Nonnegative sparse modeling: dictionary learning and bounded sparse coding.

mod dictionary;
mod encode;
mod lasso;
mod penalty;

pub use dictionary::{
    train_dictionary, train_dictionary_columns, Dictionary, DictionaryMeta, TrainOptions, TrainingResult,
};
pub use encode::{encode_bounded, encode_bounded_with, EncodeOptions};
pub use lasso::{kkt_violation, lasso_objective, nn_lasso, SparseCode};
pub use penalty::{PenaltyRule, ResidualBound};
