use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonic {
    #[default]
    None,
    NonDecreasing,
    NonIncreasing,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureKind {
    Categorical {
        levels: Vec<String>,
    },
    /// `edges` are right-closed bucket boundaries `e0 < e1 < ... < eB`; the
    /// first bucket is also closed on the left.
    Continuous {
        range: (f64, f64),
        edges: Vec<f64>,
    },
}

/// Metadata for one column. Serialized in the flat schema-config layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FeatureConfig", into = "FeatureConfig")]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub mutable: bool,
    pub monotonic: Monotonic,
    pub quasi_identifier: bool,
    pub sensitive: bool,
    pub mutation_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum KindTag {
    Categorical,
    Continuous,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FeatureConfig {
    name: String,
    kind: KindTag,
    #[serde(default = "default_true")]
    mutable: bool,
    #[serde(default)]
    monotonic: Monotonic,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    levels: Option<Vec<serde_json::Value>>,
    #[serde(default)]
    quasi_identifier: bool,
    #[serde(default)]
    sensitive: bool,
    #[serde(default)]
    mutation_cost: f64,
}

fn default_true() -> bool {
    true
}

fn level_label(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.trim().to_string(),
        other => other.to_string(),
    }
}

impl TryFrom<FeatureConfig> for FeatureSpec {
    type Error = Error;

    fn try_from(c: FeatureConfig) -> Result<Self> {
        let kind = match c.kind {
            KindTag::Categorical => FeatureKind::Categorical {
                levels: c
                    .levels
                    .unwrap_or_default()
                    .iter()
                    .map(level_label)
                    .collect(),
            },
            KindTag::Continuous => {
                let [lo, hi] = c.range.ok_or_else(|| {
                    Error::Schema(format!("continuous feature {:?} needs a range", c.name))
                })?;
                let edges = match c.levels {
                    Some(vals) => vals
                        .iter()
                        .map(|v| {
                            v.as_f64().ok_or_else(|| {
                                Error::Schema(format!(
                                    "continuous feature {:?}: bucket edge {v} is not a number",
                                    c.name
                                ))
                            })
                        })
                        .collect::<Result<Vec<_>>>()?,
                    None => vec![lo, hi],
                };
                FeatureKind::Continuous {
                    range: (lo, hi),
                    edges,
                }
            }
        };
        let spec = FeatureSpec {
            name: c.name,
            kind,
            mutable: c.mutable,
            monotonic: c.monotonic,
            quasi_identifier: c.quasi_identifier,
            sensitive: c.sensitive,
            mutation_cost: c.mutation_cost,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<FeatureSpec> for FeatureConfig {
    fn from(f: FeatureSpec) -> Self {
        let (kind, range, levels) = match f.kind {
            FeatureKind::Categorical { levels } => (
                KindTag::Categorical,
                None,
                Some(levels.into_iter().map(serde_json::Value::String).collect()),
            ),
            FeatureKind::Continuous { range, edges } => (
                KindTag::Continuous,
                Some([range.0, range.1]),
                Some(edges.into_iter().map(serde_json::Value::from).collect()),
            ),
        };
        FeatureConfig {
            name: f.name,
            kind,
            mutable: f.mutable,
            monotonic: f.monotonic,
            range,
            levels,
            quasi_identifier: f.quasi_identifier,
            sensitive: f.sensitive,
            mutation_cost: f.mutation_cost,
        }
    }
}

impl FeatureSpec {
    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Categorical {
                levels: levels.iter().map(|s| s.to_string()).collect(),
            },
            mutable: true,
            monotonic: Monotonic::None,
            quasi_identifier: false,
            sensitive: false,
            mutation_cost: 0.0,
        }
    }

    /// Continuous feature with a single bucket spanning `[lo, hi]`.
    pub fn continuous(name: &str, lo: f64, hi: f64) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Continuous {
                range: (lo, hi),
                edges: vec![lo, hi],
            },
            mutable: true,
            monotonic: Monotonic::None,
            quasi_identifier: false,
            sensitive: false,
            mutation_cost: 0.0,
        }
    }

    pub fn immutable(mut self) -> Self {
        self.mutable = false;
        self
    }

    pub fn with_monotonic(mut self, m: Monotonic) -> Self {
        self.monotonic = m;
        self
    }

    pub fn with_edges(mut self, new_edges: Vec<f64>) -> Self {
        if let FeatureKind::Continuous { edges, .. } = &mut self.kind {
            *edges = new_edges;
        }
        self
    }

    pub fn quasi_identifier(mut self) -> Self {
        self.quasi_identifier = true;
        self
    }

    pub fn sensitive(mut self) -> Self {
        self.sensitive = true;
        self
    }

    pub fn with_cost(mut self, cost: f64) -> Self {
        self.mutation_cost = cost;
        self
    }

    /// Number of levels `c_i` (buckets for continuous features).
    pub fn num_levels(&self) -> usize {
        match &self.kind {
            FeatureKind::Categorical { levels } => levels.len(),
            FeatureKind::Continuous { edges, .. } => edges.len().saturating_sub(1),
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, FeatureKind::Continuous { .. })
    }

    pub fn edges(&self) -> Option<&[f64]> {
        match &self.kind {
            FeatureKind::Continuous { edges, .. } => Some(edges),
            FeatureKind::Categorical { .. } => None,
        }
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        match &self.kind {
            FeatureKind::Continuous { range, .. } => Some(*range),
            FeatureKind::Categorical { .. } => None,
        }
    }

    /// Display label of a level: the category name, or `(lo, hi]` for buckets.
    pub fn level_label(&self, level: usize) -> String {
        match &self.kind {
            FeatureKind::Categorical { levels } => levels[level].clone(),
            FeatureKind::Continuous { edges, .. } => {
                let open = if level == 0 { '[' } else { '(' };
                format!("{open}{}, {}]", edges[level], edges[level + 1])
            }
        }
    }

    pub fn level_index(&self, label: &str) -> Option<usize> {
        match &self.kind {
            FeatureKind::Categorical { levels } => {
                let label = label.trim();
                levels.iter().position(|l| l == label)
            }
            FeatureKind::Continuous { .. } => None,
        }
    }

    /// Effective cost: immutable features ignore it.
    pub fn effective_cost(&self) -> f64 {
        if self.mutable {
            self.mutation_cost
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Schema(format!("feature {:?}: {msg}", self.name)));
        match &self.kind {
            FeatureKind::Categorical { levels } => {
                let distinct: HashSet<&String> = levels.iter().collect();
                if levels.len() < 2 || distinct.len() != levels.len() {
                    return bad("categorical features need at least 2 distinct levels".into());
                }
            }
            FeatureKind::Continuous { range, edges } => {
                if !(range.0 < range.1) || !range.0.is_finite() || !range.1.is_finite() {
                    return bad(format!(
                        "range [{}, {}] must satisfy a < b",
                        range.0, range.1
                    ));
                }
                validate_edges(&self.name, edges)?;
            }
        }
        if !(0.0..=1.0).contains(&self.mutation_cost) {
            return bad(format!(
                "mutation_cost {} outside [0, 1]",
                self.mutation_cost
            ));
        }
        Ok(())
    }
}

pub(crate) fn validate_edges(feature: &str, edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::BadEdges {
            feature: feature.to_string(),
            reason: "need at least 2 edges".into(),
        });
    }
    if edges.iter().any(|e| !e.is_finite()) {
        return Err(Error::BadEdges {
            feature: feature.to_string(),
            reason: "edges must be finite".into(),
        });
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::BadEdges {
            feature: feature.to_string(),
            reason: format!("edges {edges:?} are not strictly increasing"),
        });
    }
    Ok(())
}

/// "If `parent` moves to a higher level, `child` must not decrease."
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationRule {
    pub parent: String,
    pub child: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    #[serde(rename = "target")]
    pub target_name: String,
    pub features: Vec<FeatureSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub correlations: Vec<CorrelationRule>,
}

impl DatasetSchema {
    pub fn new(target_name: &str, features: Vec<FeatureSpec>) -> Result<Self> {
        let schema = DatasetSchema {
            target_name: target_name.to_string(),
            features,
            correlations: Vec::new(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn with_correlation(mut self, parent: &str, child: &str) -> Result<Self> {
        self.correlations.push(CorrelationRule {
            parent: parent.to_string(),
            child: child.to_string(),
        });
        self.validate()?;
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: DatasetSchema = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for f in &self.features {
            f.validate()?;
            if !names.insert(f.name.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate feature name {:?}",
                    f.name
                )));
            }
        }
        if names.contains(self.target_name.as_str()) {
            return Err(Error::Schema(format!(
                "target {:?} is also declared as a feature",
                self.target_name
            )));
        }
        for rule in &self.correlations {
            for name in [&rule.parent, &rule.child] {
                if self.index_of(name).is_none() {
                    return Err(Error::UnknownFeature(name.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    /// `D = Σ c_i`.
    pub fn one_hot_dim(&self) -> usize {
        self.features.iter().map(FeatureSpec::num_levels).sum()
    }

    /// Start offset of each feature block in the flattened one-hot vector.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.features
            .iter()
            .map(|f| {
                let o = acc;
                acc += f.num_levels();
                o
            })
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn feature(&self, name: &str) -> Result<&FeatureSpec> {
        self.index_of(name)
            .map(|i| &self.features[i])
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    /// Indices of the mutable features, in schema order (the set 𝕂).
    pub fn mutable_indices(&self) -> Vec<usize> {
        (0..self.features.len())
            .filter(|&i| self.features[i].mutable)
            .collect()
    }

    pub fn quasi_identifiers(&self) -> Vec<usize> {
        (0..self.features.len())
            .filter(|&i| self.features[i].quasi_identifier)
            .collect()
    }

    pub fn sensitive_features(&self) -> Vec<usize> {
        (0..self.features.len())
            .filter(|&i| self.features[i].sensitive)
            .collect()
    }

    /// Share of immutable features, the floor any valid explanation's
    /// sparsity must respect.
    pub fn min_sparsity(&self) -> f64 {
        let n = self.features.len();
        if n == 0 {
            return 0.0;
        }
        let immutable = self.features.iter().filter(|f| !f.mutable).count();
        100.0 * immutable as f64 / n as f64
    }

    /// Correlation rules resolved to feature indices `(parent, child)`.
    pub fn correlation_indices(&self) -> Result<Vec<(usize, usize)>> {
        self.correlations
            .iter()
            .map(|r| {
                let p = self
                    .index_of(&r.parent)
                    .ok_or_else(|| Error::UnknownFeature(r.parent.clone()))?;
                let c = self
                    .index_of(&r.child)
                    .ok_or_else(|| Error::UnknownFeature(r.child.clone()))?;
                Ok((p, c))
            })
            .collect()
    }

    /// Hex SHA-256 of the canonical JSON form; checkpoints carry it so a
    /// model is never paired with a different layout.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("schema serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> &'static str {
        r#"{
          "target": "y",
          "features": [
            {"name": "Age", "kind": "continuous", "mutable": true, "monotonic": "non_decreasing",
             "range": [19, 75], "quasi_identifier": true},
            {"name": "Job", "kind": "categorical", "mutable": false, "levels": ["a", "b", "c"],
             "sensitive": true, "mutation_cost": 0.0}
          ]
        }"#
    }

    #[test]
    fn parses_config_layout() {
        let s = DatasetSchema::from_json(config()).unwrap();
        assert_eq!(s.num_features(), 2);
        assert_eq!(s.features[0].monotonic, Monotonic::NonDecreasing);
        assert_eq!(s.features[0].edges().unwrap(), &[19.0, 75.0]);
        assert_eq!(s.one_hot_dim(), 1 + 3);
        assert_eq!(s.offsets(), vec![0, 1]);
        assert_eq!(s.mutable_indices(), vec![0]);
        assert_eq!(s.quasi_identifiers(), vec![0]);
        assert_eq!(s.sensitive_features(), vec![1]);
        assert!((s.min_sparsity() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_keeps_hash() {
        let s = DatasetSchema::from_json(config()).unwrap();
        let back = DatasetSchema::from_json(&s.to_json()).unwrap();
        assert_eq!(s, back);
        assert_eq!(s.hash(), back.hash());
        let other = DatasetSchema {
            features: vec![
                s.features[0].clone().with_edges(vec![19.0, 30.0, 75.0]),
                s.features[1].clone(),
            ],
            ..s.clone()
        };
        assert_ne!(s.hash(), other.hash());
    }

    #[test]
    fn rejects_bad_features() {
        assert!(FeatureSpec::categorical("x", &["a"]).validate().is_err());
        assert!(FeatureSpec::categorical("x", &["a", "a"])
            .validate()
            .is_err());
        assert!(FeatureSpec::continuous("x", 5.0, 5.0).validate().is_err());
        assert!(FeatureSpec::continuous("x", 0.0, 1.0)
            .with_edges(vec![0.0, 0.5, 0.4, 1.0])
            .validate()
            .is_err());
        assert!(FeatureSpec::continuous("x", 0.0, 1.0)
            .with_cost(1.5)
            .validate()
            .is_err());
        let dup = DatasetSchema::new(
            "y",
            vec![
                FeatureSpec::continuous("x", 0.0, 1.0),
                FeatureSpec::continuous("x", 0.0, 1.0),
            ],
        );
        assert!(dup.is_err());
    }

    #[test]
    fn correlation_rules_must_name_known_features() {
        let s = DatasetSchema::from_json(config()).unwrap();
        assert!(matches!(
            s.clone().with_correlation("Job", "Height"),
            Err(Error::UnknownFeature(n)) if n == "Height"
        ));
        let s = s.with_correlation("Job", "Age").unwrap();
        assert_eq!(s.correlation_indices().unwrap(), vec![(1, 0)]);
    }

    #[test]
    fn level_labels_use_right_closed_intervals() {
        let f = FeatureSpec::continuous("Age", 19.0, 75.0).with_edges(vec![19.0, 27.0, 33.0, 75.0]);
        assert_eq!(f.num_levels(), 3);
        assert_eq!(f.level_label(0), "[19, 27]");
        assert_eq!(f.level_label(1), "(27, 33]");
    }
}
