//! Linkage-attack audit of released counterfactuals: equivalence classes over
//! quasi-identifiers, singleton and single-value class rates, exact matches
//! against an attack set, and the k-anonymity release filter.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::l2c::CounterfactualSet;
use crate::tabular::{bucket_of, locate_columns, parse_cell, DatasetSchema, FeatureKind, Value};

/// A released counterfactual, in level form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub input_id: usize,
    pub levels: Vec<usize>,
    pub label: usize,
    pub valid: bool,
}

/// Every returned explanation of every set, valid or not.
pub fn released_records(sets: &[CounterfactualSet]) -> Vec<Record> {
    sets.iter()
        .flat_map(|s| {
            s.returned().map(|c| Record {
                input_id: s.input_id,
                levels: c.levels.clone(),
                label: c.predicted_label,
                valid: c.valid,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceClassTable {
    pub key_features: Vec<String>,
    pub include_label: bool,
    /// Key tuple (quasi-identifier levels, then the label if included) to
    /// record indices.
    pub classes: BTreeMap<Vec<usize>, Vec<usize>>,
}

fn qi_indices(schema: &DatasetSchema) -> Result<Vec<usize>> {
    let qi = schema.quasi_identifiers();
    if qi.is_empty() {
        return Err(Error::NoQuasiIdentifiers);
    }
    Ok(qi)
}

fn key(record: &Record, qi: &[usize], include_label: bool) -> Vec<usize> {
    let mut k: Vec<usize> = qi.iter().map(|&i| record.levels[i]).collect();
    if include_label {
        k.push(record.label);
    }
    k
}

pub fn build_classes(
    records: &[Record],
    schema: &DatasetSchema,
    include_label: bool,
) -> Result<EquivalenceClassTable> {
    let qi = qi_indices(schema)?;
    let mut classes: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        classes
            .entry(key(r, &qi, include_label))
            .or_default()
            .push(i);
    }
    let mut key_features: Vec<String> = qi
        .iter()
        .map(|&i| schema.features[i].name.clone())
        .collect();
    if include_label {
        key_features.push("predicted_label".into());
    }
    Ok(EquivalenceClassTable {
        key_features,
        include_label,
        classes,
    })
}

impl EquivalenceClassTable {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn num_records(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }

    /// Class size to number of classes of that size.
    pub fn size_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for members in self.classes.values() {
            *h.entry(members.len()).or_insert(0) += 1;
        }
        h
    }
}

fn percent(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

/// Percent of classes with a single member.
pub fn one_anonymity(table: &EquivalenceClassTable) -> f64 {
    let singles = table.classes.values().filter(|m| m.len() == 1).count();
    percent(singles, table.num_classes())
}

/// Percent of records that sit alone in their class.
pub fn one_anonymity_records(table: &EquivalenceClassTable) -> f64 {
    let singles = table.classes.values().filter(|m| m.len() == 1).count();
    percent(singles, table.num_records())
}

/// Percent of classes whose members all share one value of `sensitive`.
pub fn l_diversity_violations(
    table: &EquivalenceClassTable,
    records: &[Record],
    sensitive: usize,
) -> f64 {
    let bad = table
        .classes
        .values()
        .filter(|members| {
            let first = records[members[0]].levels[sensitive];
            members
                .iter()
                .all(|&i| records[i].levels[sensitive] == first)
        })
        .count();
    percent(bad, table.num_classes())
}

/// Outcome of matching released records against an attack set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum MapOutcome {
    /// Percent of released records matching exactly one attack record.
    Measured { percent: f64 },
    /// No released record matched any attack record; the risk cannot be
    /// assessed, which is not the same as zero risk.
    Unverifiable,
}

/// Exact quasi-identifier matching of released records against attack-set
/// tuples (already in level form, schema quasi-identifier order).
pub fn one_map(
    records: &[Record],
    attack: &[Vec<usize>],
    schema: &DatasetSchema,
) -> Result<MapOutcome> {
    let qi = qi_indices(schema)?;
    let mut counts: BTreeMap<&[usize], usize> = BTreeMap::new();
    for a in attack {
        if a.len() != qi.len() {
            return Err(Error::Shape(format!(
                "attack tuple has {} values for {} quasi-identifiers",
                a.len(),
                qi.len()
            )));
        }
        *counts.entry(a.as_slice()).or_insert(0) += 1;
    }
    let mut any = false;
    let mut unique = 0;
    for r in records {
        let k = key(r, &qi, false);
        match counts.get(k.as_slice()) {
            Some(1) => {
                any = true;
                unique += 1;
            }
            Some(_) => any = true,
            None => {}
        }
    }
    Ok(if any {
        MapOutcome::Measured {
            percent: percent(unique, records.len()),
        }
    } else {
        MapOutcome::Unverifiable
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KAnonymized {
    pub k: usize,
    /// Indices of records kept, ascending.
    pub kept: Vec<usize>,
    /// Per-input percent of valid records surviving, averaged over inputs
    /// that had any valid record.
    pub validity_retention: f64,
}

/// Keep only records whose class has at least `k` members.
pub fn k_anonymize_filter(
    records: &[Record],
    table: &EquivalenceClassTable,
    k: usize,
) -> Result<KAnonymized> {
    if k < 2 {
        return Err(Error::Invalid(format!("k must be at least 2, got {k}")));
    }
    let mut kept: Vec<usize> = table
        .classes
        .values()
        .filter(|m| m.len() >= k)
        .flat_map(|m| m.iter().copied())
        .collect();
    kept.sort_unstable();
    let kept_set: BTreeSet<usize> = kept.iter().copied().collect();
    let mut per_input: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (i, r) in records.iter().enumerate().filter(|(_, r)| r.valid) {
        let e = per_input.entry(r.input_id).or_insert((0, 0));
        e.1 += 1;
        e.0 += usize::from(kept_set.contains(&i));
    }
    let validity_retention = if per_input.is_empty() {
        0.0
    } else {
        per_input.values().map(|&(a, b)| percent(a, b)).sum::<f64>() / per_input.len() as f64
    };
    Ok(KAnonymized {
        k,
        kept,
        validity_retention,
    })
}

/// Quasi-identifier tuples of an attack CSV, in level form under `schema`
/// (continuous values bucketed with the schema's edges). Only the
/// quasi-identifier columns are required.
pub fn read_attack_csv<R: std::io::Read>(
    reader: R,
    schema: &DatasetSchema,
) -> Result<Vec<Vec<usize>>> {
    let qi = qi_indices(schema)?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let names: Vec<&str> = qi
        .iter()
        .map(|&i| schema.features[i].name.as_str())
        .collect();
    let cols = locate_columns(&header, &names)?;
    let mut out = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let tuple = qi
            .iter()
            .zip(&cols)
            .map(|(&i, &c)| {
                let f = &schema.features[i];
                let raw = rec.get(c).unwrap_or("");
                Ok(match (parse_cell(f, raw, r + 1)?, &f.kind) {
                    (Value::Real(x), FeatureKind::Continuous { edges, .. }) => {
                        bucket_of(edges, x).0
                    }
                    (Value::Level(l), _) => l,
                    (Value::Real(_), FeatureKind::Categorical { .. }) => {
                        unreachable!("categorical cells parse to levels")
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(tuple);
    }
    Ok(out)
}

pub fn load_attack_csv(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<Vec<Vec<usize>>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_attack_csv(file, schema)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KAnonymityReport {
    pub k: usize,
    pub retained_records: usize,
    pub validity_retention: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub num_records: usize,
    pub num_classes: usize,
    pub key_features: Vec<String>,
    pub one_anonymity: f64,
    pub one_anonymity_records: f64,
    /// Sensitive feature to percent of single-value classes.
    pub one_diversity: BTreeMap<String, f64>,
    pub one_map: Option<MapOutcome>,
    pub class_size_histogram: BTreeMap<usize, usize>,
    pub k_anonymity: Option<KAnonymityReport>,
}

impl PrivacyReport {
    pub fn audit(
        records: &[Record],
        schema: &DatasetSchema,
        attack: Option<&[Vec<usize>]>,
        k: Option<usize>,
    ) -> Result<Self> {
        let table = build_classes(records, schema, true)?;
        let one_diversity = schema
            .sensitive_features()
            .into_iter()
            .map(|i| {
                (
                    schema.features[i].name.clone(),
                    l_diversity_violations(&table, records, i),
                )
            })
            .collect();
        let one_map = attack.map(|a| one_map(records, a, schema)).transpose()?;
        let k_anonymity = k
            .map(|k| {
                k_anonymize_filter(records, &table, k).map(|f| KAnonymityReport {
                    k,
                    retained_records: f.kept.len(),
                    validity_retention: f.validity_retention,
                })
            })
            .transpose()?;
        Ok(PrivacyReport {
            num_records: records.len(),
            num_classes: table.num_classes(),
            key_features: table.key_features.clone(),
            one_anonymity: one_anonymity(&table),
            one_anonymity_records: one_anonymity_records(&table),
            one_diversity,
            one_map,
            class_size_histogram: table.size_histogram(),
            k_anonymity,
        })
    }
}
