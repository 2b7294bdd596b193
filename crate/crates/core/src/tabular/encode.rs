use super::dataset::Value;
use super::discretize::row_levels;
use super::schema::{DatasetSchema, FeatureKind, FeatureSpec};
use crate::error::{Error, Result};

/// Flattened one-hot vector of a row of per-feature levels.
pub fn encode_levels(levels: &[usize], schema: &DatasetSchema) -> Result<Vec<f64>> {
    if levels.len() != schema.num_features() {
        return Err(Error::Shape(format!(
            "{} levels for {} features",
            levels.len(),
            schema.num_features()
        )));
    }
    let mut z = vec![0.0; schema.one_hot_dim()];
    let mut offset = 0;
    for (f, &l) in schema.features.iter().zip(levels) {
        let c = f.num_levels();
        if l >= c {
            return Err(Error::LevelOutOfRange {
                feature: f.name.clone(),
                level: l,
                levels: c,
            });
        }
        z[offset + l] = 1.0;
        offset += c;
    }
    Ok(z)
}

/// One-hot encode a raw row; continuous values go through the schema's
/// bucket edges (clamped at the ends).
pub fn one_hot_encode(row: &[Value], schema: &DatasetSchema) -> Result<Vec<f64>> {
    if row.len() != schema.num_features() {
        return Err(Error::Shape(format!(
            "row has {} cells, schema has {} features",
            row.len(),
            schema.num_features()
        )));
    }
    let (levels, _) = row_levels(schema, row)?;
    encode_levels(&levels, schema)
}

/// Level chosen in each block of a (hard) one-hot vector; argmax for relaxed
/// vectors, first index on ties.
pub fn decode_levels(z: &[f64], schema: &DatasetSchema) -> Vec<usize> {
    let mut offset = 0;
    schema
        .features
        .iter()
        .map(|f| {
            let c = f.num_levels();
            let block = &z[offset..offset + c];
            offset += c;
            argmax(block)
        })
        .collect()
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Midpoint of the `k`-th (1-based) of `c` equal-width intervals on `[a, b]`.
pub fn equal_width_midpoint(a: f64, b: f64, c: usize, k: usize) -> f64 {
    a + (2 * k - 1) as f64 * (b - a) / (2 * c) as f64
}

/// Midpoint of bucket `level` (0-based) of a continuous feature's edges.
pub fn bucket_midpoint(feature: &FeatureSpec, level: usize) -> Result<f64> {
    match &feature.kind {
        FeatureKind::Continuous { edges, .. } => {
            if level + 1 >= edges.len() {
                return Err(Error::LevelOutOfRange {
                    feature: feature.name.clone(),
                    level,
                    levels: edges.len() - 1,
                });
            }
            Ok(0.5 * (edges[level] + edges[level + 1]))
        }
        FeatureKind::Categorical { .. } => Err(Error::Invalid(format!(
            "feature {:?} is categorical and has no bucket midpoints",
            feature.name
        ))),
    }
}

/// All bucket midpoints of a continuous feature.
pub fn midpoints(feature: &FeatureSpec) -> Vec<f64> {
    feature
        .edges()
        .map(|e| e.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect())
        .unwrap_or_default()
}
