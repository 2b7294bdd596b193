//! Feature schemas, CSV ingestion, discretization and one-hot encoding.

mod dataset;
mod discretize;
mod encode;
mod schema;

pub(crate) use dataset::locate_columns;
pub use dataset::{load_csv, parse_cell, read_csv, split, Dataset, Value};
pub use discretize::{
    bucket_of, cart_edges, discretize, equal_frequency_edges, fit_cart, fit_equal_frequency,
    fit_manual_bins, fit_mdp_entropy, mdlp_edges, row_levels, Discretized, Discretizer,
    DiscretizerConfig, Strategy,
};
pub use encode::argmax;
pub use encode::{
    bucket_midpoint, decode_levels, encode_levels, equal_width_midpoint, midpoints, one_hot_encode,
};
pub use schema::{CorrelationRule, DatasetSchema, FeatureKind, FeatureSpec, Monotonic};
