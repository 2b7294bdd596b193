//! Seeded synthetic benchmark with a linearly separable label.
//!
//! Features: `x1` and `x2` continuous on `[0, 10]` (`x1` non-decreasing),
//! a mutable categorical `colour` that carries no signal, and an immutable
//! categorical `group`. The label is `x2 + 0.5 x1 > 7.5`; points closer than
//! `MARGIN` to the boundary are rejected.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tabular::{Dataset, DatasetSchema, FeatureSpec, Monotonic, Value};

pub const MARGIN: f64 = 0.5;

pub fn synthetic_schema() -> DatasetSchema {
    DatasetSchema::new(
        "label",
        vec![
            FeatureSpec::continuous("x1", 0.0, 10.0)
                .with_monotonic(Monotonic::NonDecreasing)
                .quasi_identifier(),
            FeatureSpec::continuous("x2", 0.0, 10.0).sensitive(),
            FeatureSpec::categorical("colour", &["red", "green", "blue"]),
            FeatureSpec::categorical("group", &["a", "b", "c"])
                .immutable()
                .quasi_identifier(),
        ],
    )
    .expect("static schema is valid")
}

pub fn synthetic_label(x1: f64, x2: f64) -> usize {
    usize::from(x2 + 0.5 * x1 > 7.5)
}

/// `n` rows drawn uniformly, rounded to two decimals.
pub fn synthetic_dataset(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let round = |v: f64| (v * 100.0).round() / 100.0;
    while rows.len() < n {
        let x1 = round(rng.random_range(0.0..=10.0));
        let x2 = round(rng.random_range(0.0..=10.0));
        if (x2 + 0.5 * x1 - 7.5).abs() < MARGIN {
            continue;
        }
        let colour = rng.random_range(0..3);
        let group = rng.random_range(0..3);
        rows.push(vec![
            Value::Real(x1),
            Value::Real(x2),
            Value::Level(colour),
            Value::Level(group),
        ]);
        labels.push(synthetic_label(x1, x2));
    }
    Dataset::new(synthetic_schema(), rows, labels)
}
