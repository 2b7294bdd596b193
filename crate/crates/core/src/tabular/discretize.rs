//! Discretizers for continuous features.
//!
//! All strategies produce an edge list `e0 < e1 < ... < eB` interpreted as
//! buckets `[e0, e1], (e1, e2], ..., (eB-1, eB]`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Value};
use super::schema::{validate_edges, DatasetSchema, FeatureKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    EqualFrequency,
    MdpEntropy,
    Cart,
    Manual,
    Mixed,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Strategy::EqualFrequency => "equal_frequency",
            Strategy::MdpEntropy => "mdp_entropy",
            Strategy::Cart => "cart",
            Strategy::Manual => "manual",
            Strategy::Mixed => "mixed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscretizerConfig {
    pub strategy: Strategy,
    pub max_buckets: usize,
    pub min_split_samples: usize,
    /// Domain-knowledge edges per feature.
    pub manual: BTreeMap<String, Vec<f64>>,
    /// Drives the per-feature draw of the mixed strategy.
    pub seed: u64,
}

impl Default for DiscretizerConfig {
    fn default() -> Self {
        DiscretizerConfig {
            strategy: Strategy::EqualFrequency,
            max_buckets: 4,
            min_split_samples: 30,
            manual: BTreeMap::new(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub strategy: Strategy,
    pub edges: BTreeMap<String, Vec<f64>>,
    /// Per-feature strategy actually used (differs from `strategy` only
    /// for [`Strategy::Mixed`]).
    #[serde(default)]
    pub assigned: BTreeMap<String, Strategy>,
    pub max_buckets: usize,
    pub min_split_samples: usize,
}

/// Bucket of `x` under right-closed `edges`, and whether `x` fell outside the
/// edge span and was clamped.
pub fn bucket_of(edges: &[f64], x: f64) -> (usize, bool) {
    let last = edges.len() - 1;
    let inner = &edges[1..last];
    let k = inner.partition_point(|&e| e < x);
    (k, x < edges[0] || x > edges[last])
}

fn sorted_finite(values: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v
}

fn distinct_count(sorted: &[f64]) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    1 + sorted.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Linear-interpolated quantile of sorted data (numpy's default).
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Quantile cuts at `k / max_buckets`; duplicate edges are merged, which
/// reduces the bucket count on heavily tied data.
pub fn equal_frequency_edges(
    feature: &str,
    values: &[f64],
    max_buckets: usize,
) -> Result<Vec<f64>> {
    let sorted = sorted_finite(values);
    if distinct_count(&sorted) < 2 || max_buckets == 0 {
        return Err(Error::SingleBucket(feature.to_string()));
    }
    let mut edges: Vec<f64> = (0..=max_buckets)
        .map(|k| quantile(&sorted, k as f64 / max_buckets as f64))
        .collect();
    edges.dedup();
    if edges.len() < 2 {
        return Err(Error::SingleBucket(feature.to_string()));
    }
    Ok(edges)
}

/// Binary-class-aware entropy (base 2) of a label count vector.
fn entropy(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum()
}

fn class_counts(pairs: &[(f64, usize)], classes: usize) -> Vec<usize> {
    let mut c = vec![0; classes];
    for &(_, y) in pairs {
        c[y] += 1;
    }
    c
}

struct BestCut {
    /// Index of the first element of the right part.
    split: usize,
    threshold: f64,
    weighted_entropy: f64,
}

/// Scan every boundary between distinct consecutive values and return the
/// cut with minimum weighted class entropy (first one on ties).
fn best_cut(pairs: &[(f64, usize)], classes: usize) -> Option<BestCut> {
    let n = pairs.len();
    let total = class_counts(pairs, classes);
    let mut left = vec![0usize; classes];
    let mut best: Option<BestCut> = None;
    for i in 1..n {
        left[pairs[i - 1].1] += 1;
        if pairs[i - 1].0 == pairs[i].0 {
            continue;
        }
        let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
        let w = (i as f64 * entropy(&left) + (n - i) as f64 * entropy(&right)) / n as f64;
        if best.as_ref().is_none_or(|b| w < b.weighted_entropy - 1e-12) {
            best = Some(BestCut {
                split: i,
                threshold: 0.5 * (pairs[i - 1].0 + pairs[i].0),
                weighted_entropy: w,
            });
        }
    }
    best
}

fn sorted_pairs(
    feature: &str,
    values: &[f64],
    labels: &[usize],
) -> Result<(Vec<(f64, usize)>, usize)> {
    if values.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} values but {} labels for {feature:?}",
            values.len(),
            labels.len()
        )));
    }
    let mut pairs: Vec<(f64, usize)> = values.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let sorted: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    if distinct_count(&sorted) < 2 {
        return Err(Error::SingleBucket(feature.to_string()));
    }
    let classes = labels.iter().copied().max().unwrap_or(0) + 1;
    Ok((pairs, classes))
}

fn span_edges(pairs: &[(f64, usize)], mut cuts: Vec<f64>) -> Vec<f64> {
    cuts.sort_by(f64::total_cmp);
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(pairs[0].0);
    edges.extend(cuts);
    edges.push(pairs[pairs.len() - 1].0);
    edges
}

/// Recursive entropy splitting halted by the minimum-description-length
/// acceptance test of Fayyad & Irani.
pub fn mdlp_edges(feature: &str, values: &[f64], labels: &[usize]) -> Result<Vec<f64>> {
    let (pairs, classes) = sorted_pairs(feature, values, labels)?;
    let mut cuts = Vec::new();
    mdlp_recurse(&pairs, classes, &mut cuts);
    Ok(span_edges(&pairs, cuts))
}

/// Whether splitting `pairs` at `split` passes the MDL criterion.
pub(crate) fn mdl_accepts(pairs: &[(f64, usize)], classes: usize, split: usize) -> bool {
    let n = pairs.len() as f64;
    let (l, r) = pairs.split_at(split);
    let (cs, cl, cr) = (
        class_counts(pairs, classes),
        class_counts(l, classes),
        class_counts(r, classes),
    );
    let (es, el, er) = (entropy(&cs), entropy(&cl), entropy(&cr));
    let gain = es - (l.len() as f64 * el + r.len() as f64 * er) / n;
    let k = |c: &[usize]| c.iter().filter(|&&x| x > 0).count() as f64;
    let delta = (3f64.powf(k(&cs)) - 2.0).log2() - (k(&cs) * es - k(&cl) * el - k(&cr) * er);
    gain > ((n - 1.0).log2() + delta) / n
}

fn mdlp_recurse(pairs: &[(f64, usize)], classes: usize, cuts: &mut Vec<f64>) {
    if pairs.len() < 2 {
        return;
    }
    let Some(cut) = best_cut(pairs, classes) else {
        return;
    };
    if !mdl_accepts(pairs, classes, cut.split) {
        return;
    }
    cuts.push(cut.threshold);
    let (l, r) = pairs.split_at(cut.split);
    mdlp_recurse(l, classes, cuts);
    mdlp_recurse(r, classes, cuts);
}

/// Univariate entropy decision tree; leaves become buckets. Nodes with fewer
/// than `min_split` samples, pure nodes and zero-gain nodes are not split.
pub fn cart_edges(
    feature: &str,
    values: &[f64],
    labels: &[usize],
    min_split: usize,
) -> Result<Vec<f64>> {
    if min_split < 2 {
        return Err(Error::Invalid(format!(
            "min_split must be at least 2, got {min_split}"
        )));
    }
    let (pairs, classes) = sorted_pairs(feature, values, labels)?;
    let mut cuts = Vec::new();
    cart_recurse(&pairs, classes, min_split, &mut cuts);
    Ok(span_edges(&pairs, cuts))
}

fn cart_recurse(pairs: &[(f64, usize)], classes: usize, min_split: usize, cuts: &mut Vec<f64>) {
    if pairs.len() < min_split {
        return;
    }
    let parent = entropy(&class_counts(pairs, classes));
    if parent <= 0.0 {
        return;
    }
    let Some(cut) = best_cut(pairs, classes) else {
        return;
    };
    if parent - cut.weighted_entropy <= 1e-12 {
        return;
    }
    cuts.push(cut.threshold);
    let (l, r) = pairs.split_at(cut.split);
    cart_recurse(l, classes, min_split, cuts);
    cart_recurse(r, classes, min_split, cuts);
}

pub fn fit_equal_frequency(data: &Dataset, feature: &str, max_buckets: usize) -> Result<Vec<f64>> {
    equal_frequency_edges(feature, &data.column_values(feature)?, max_buckets)
}

pub fn fit_mdp_entropy(data: &Dataset, feature: &str, labels: &[usize]) -> Result<Vec<f64>> {
    mdlp_edges(feature, &data.column_values(feature)?, labels)
}

pub fn fit_cart(
    data: &Dataset,
    feature: &str,
    labels: &[usize],
    min_split: usize,
) -> Result<Vec<f64>> {
    cart_edges(feature, &data.column_values(feature)?, labels, min_split)
}

fn check_covers(feature: &str, edges: &[f64], values: &[f64]) -> Result<()> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || (edges[0] <= lo && edges[edges.len() - 1] >= hi) {
        Ok(())
    } else {
        Err(Error::BadEdges {
            feature: feature.to_string(),
            reason: format!(
                "edges [{}, {}] do not cover observed values [{lo}, {hi}]",
                edges[0],
                edges[edges.len() - 1]
            ),
        })
    }
}

/// Domain-knowledge discretizer from user-supplied edges.
pub fn fit_manual_bins(edges: BTreeMap<String, Vec<f64>>, data: &Dataset) -> Result<Discretizer> {
    for (name, e) in &edges {
        validate_edges(name, e)?;
        check_covers(name, e, &data.column_values(name)?)?;
    }
    for f in data.schema.features.iter().filter(|f| f.is_continuous()) {
        if !edges.contains_key(&f.name) {
            return Err(Error::BadEdges {
                feature: f.name.clone(),
                reason: "no manual edges supplied".into(),
            });
        }
    }
    let assigned = edges
        .keys()
        .map(|k| (k.clone(), Strategy::Manual))
        .collect();
    Ok(Discretizer {
        strategy: Strategy::Manual,
        edges,
        assigned,
        max_buckets: DiscretizerConfig::default().max_buckets,
        min_split_samples: DiscretizerConfig::default().min_split_samples,
    })
}

impl Discretizer {
    /// Fit every continuous feature of `data`. `labels` are the black-box
    /// predictions used by the supervised strategies.
    pub fn fit(data: &Dataset, labels: &[usize], cfg: &DiscretizerConfig) -> Result<Self> {
        if cfg.strategy == Strategy::Manual {
            let mut d = fit_manual_bins(cfg.manual.clone(), data)?;
            d.max_buckets = cfg.max_buckets;
            d.min_split_samples = cfg.min_split_samples;
            return Ok(d);
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut edges = BTreeMap::new();
        let mut assigned = BTreeMap::new();
        for f in data.schema.features.iter().filter(|f| f.is_continuous()) {
            let strategy = match cfg.strategy {
                Strategy::Mixed => {
                    let mut pool = vec![
                        Strategy::EqualFrequency,
                        Strategy::MdpEntropy,
                        Strategy::Cart,
                    ];
                    if cfg.manual.contains_key(&f.name) {
                        pool.push(Strategy::Manual);
                    }
                    *pool.choose(&mut rng).expect("non-empty pool")
                }
                s => s,
            };
            let values = data.column_values(&f.name)?;
            let e = match strategy {
                Strategy::EqualFrequency => {
                    equal_frequency_edges(&f.name, &values, cfg.max_buckets)?
                }
                Strategy::MdpEntropy => mdlp_edges(&f.name, &values, labels)?,
                Strategy::Cart => cart_edges(&f.name, &values, labels, cfg.min_split_samples)?,
                Strategy::Manual => {
                    let e = cfg.manual[&f.name].clone();
                    validate_edges(&f.name, &e)?;
                    check_covers(&f.name, &e, &values)?;
                    e
                }
                Strategy::Mixed => unreachable!("mixed resolves per feature"),
            };
            edges.insert(f.name.clone(), e);
            assigned.insert(f.name.clone(), strategy);
        }
        Ok(Discretizer {
            strategy: cfg.strategy,
            edges,
            assigned,
            max_buckets: cfg.max_buckets,
            min_split_samples: cfg.min_split_samples,
        })
    }

    /// Copy of `schema` with fitted edges installed on continuous features.
    pub fn apply_to_schema(&self, schema: &DatasetSchema) -> Result<DatasetSchema> {
        let mut out = schema.clone();
        for f in out.features.iter_mut() {
            if let FeatureKind::Continuous { edges, .. } = &mut f.kind {
                let fitted = self.edges.get(&f.name).ok_or_else(|| Error::BadEdges {
                    feature: f.name.clone(),
                    reason: "discretizer has no edges for this feature".into(),
                })?;
                *edges = fitted.clone();
            }
        }
        out.validate()?;
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("discretizer serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let d: Discretizer = serde_json::from_str(&text)?;
        for (name, e) in &d.edges {
            validate_edges(name, e)?;
        }
        Ok(d)
    }
}

/// A dataset seen through a discretizer: raw values are kept (one-hot
/// decoding needs them) next to the per-feature level matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretized {
    /// Raw rows under the schema carrying fitted edges.
    pub data: Dataset,
    pub levels: Vec<Vec<usize>>,
    /// Number of continuous cells clamped into an edge bucket.
    pub clamped: usize,
}

/// Level of every feature in `row` under `schema`; the second value counts
/// continuous cells that fell outside the edge span.
pub fn row_levels(schema: &DatasetSchema, row: &[Value]) -> Result<(Vec<usize>, usize)> {
    let mut clamped = 0;
    let levels = schema
        .features
        .iter()
        .zip(row)
        .map(|(f, &v)| match (&f.kind, v) {
            (FeatureKind::Categorical { levels }, Value::Level(l)) if l < levels.len() => Ok(l),
            (FeatureKind::Continuous { edges, .. }, Value::Real(x)) => {
                let (k, c) = bucket_of(edges, x);
                clamped += usize::from(c);
                Ok(k)
            }
            (FeatureKind::Continuous { .. }, Value::Level(l)) if l < f.num_levels() => Ok(l),
            (_, v) => Err(Error::UnknownLevel {
                row: 0,
                column: f.name.clone(),
                value: format!("{v:?}"),
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((levels, clamped))
}

pub fn discretize(data: &Dataset, disc: &Discretizer) -> Result<Discretized> {
    let schema = disc.apply_to_schema(&data.schema)?;
    let mut clamped = 0;
    let mut levels = Vec::with_capacity(data.len());
    for row in &data.rows {
        let (l, c) = row_levels(&schema, row)?;
        clamped += c;
        levels.push(l);
    }
    Ok(Discretized {
        data: Dataset {
            schema,
            rows: data.rows.clone(),
            labels: data.labels.clone(),
        },
        levels,
        clamped,
    })
}
