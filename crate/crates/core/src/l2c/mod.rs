//! Amortized counterfactual generation: a per-feature perturbation generator
//! and a Bernoulli feature selector trained jointly through relaxed samples.

mod compose;
mod generate;
mod masks;
mod model;
mod train;

pub use compose::{compose_counterfactual, one_hot_decode};
pub use generate::{
    sample_sparsity, satisfies_rules, satisfies_unary, Counterfactual, CounterfactualSet,
    GenerateConfig, DRAW_BATCH,
};
pub use masks::{
    apply_binary_mask, apply_unary_mask, default_epsilon, mask_multipliers, restricted_levels,
    restricted_mass_after_mask,
};
pub use model::{classifier_hash, L2cConfig, L2cModel, Noise};
pub use train::{EpochRecord, TrainReport};
