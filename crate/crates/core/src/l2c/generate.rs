use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::masks::restricted_levels;
use super::model::{renormalized_blocks, L2cModel};
use crate::blackbox::Classifier;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::tabular::{
    bucket_midpoint, encode_levels, row_levels, Dataset, DatasetSchema, Monotonic, Value,
};

/// Draws taken between budget checks.
pub const DRAW_BATCH: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    pub num_samples: usize,
    pub budget_seconds: f64,
    /// Hard cap on draws per input, so an input the model cannot flip still
    /// terminates deterministically.
    pub max_draws: usize,
    /// Minimum per-sample sparsity (percent) for a draw to be returned.
    pub sparsity_filter: Option<f64>,
    /// Drop draws that break a monotonic constraint or an active
    /// correlation rule.
    pub constraint_filter: bool,
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            num_samples: 100,
            budget_seconds: 300.0,
            max_draws: 10_000,
            sparsity_filter: None,
            constraint_filter: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterfactual {
    /// Level of every feature (the hard one-hot sample).
    pub levels: Vec<usize>,
    /// Selection bit per mutable feature.
    pub selected: Vec<bool>,
    pub row: Vec<Value>,
    pub predicted_label: usize,
    pub valid: bool,
    /// Passed the post-hoc filters.
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualSet {
    pub input_id: usize,
    pub origin_row: Vec<Value>,
    pub origin_levels: Vec<usize>,
    pub origin_label: usize,
    pub target_label: usize,
    pub generation_seed: u64,
    pub num_requested: usize,
    /// Every draw, in order.
    pub samples: Vec<Counterfactual>,
    /// Indices into `samples` forming the returned explanations: the
    /// earliest accepted valid draws, padded with the earliest accepted
    /// invalid ones.
    pub requested: Vec<usize>,
    pub budget_exhausted: bool,
    #[serde(skip)]
    pub elapsed_seconds: f64,
}

impl CounterfactualSet {
    pub fn returned(&self) -> impl Iterator<Item = &Counterfactual> {
        self.requested.iter().map(|&i| &self.samples[i])
    }

    pub fn num_valid(&self) -> usize {
        self.returned().filter(|c| c.valid).count()
    }

    /// At least one returned explanation is valid.
    pub fn covered(&self) -> bool {
        self.num_valid() > 0
    }

    /// One-hot form of sample `i`.
    pub fn z_tilde(&self, schema: &DatasetSchema, i: usize) -> Result<Vec<f64>> {
        encode_levels(&self.samples[i].levels, schema)
    }

    /// Returned explanations as CSV: feature columns, then
    /// `predicted_label,valid,input_id`.
    pub fn write_csv<W: std::io::Write>(&self, schema: &DatasetSchema, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = schema.features.iter().map(|f| f.name.clone()).collect();
        header.extend(["predicted_label", "valid", "input_id"].map(String::from));
        w.write_record(&header)?;
        for c in self.returned() {
            let mut rec: Vec<String> = schema
                .features
                .iter()
                .zip(&c.row)
                .map(|(f, &v)| Dataset::format_value(f, v))
                .collect();
            rec.push(c.predicted_label.to_string());
            rec.push(u8::from(c.valid).to_string());
            rec.push(self.input_id.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn save(&self, schema: &DatasetSchema, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let stem = format!("input_{:05}", self.input_id);
        let csv_path = dir.join(format!("{stem}.csv"));
        let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        self.write_csv(schema, file)?;
        let json_path = dir.join(format!("{stem}.json"));
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// For each monotonic feature, in schema order, whether `levels` respects
/// its direction relative to `origin`.
pub fn satisfies_unary(schema: &DatasetSchema, origin: &[usize], levels: &[usize]) -> Vec<bool> {
    schema
        .features
        .iter()
        .enumerate()
        .filter(|(_, f)| f.monotonic != Monotonic::None)
        .map(|(i, f)| {
            !restricted_levels(f.monotonic, origin[i], f.num_levels()).contains(&levels[i])
        })
        .collect()
}

/// Whether every `(parent, child)` rule holds: a parent that moved up
/// implies a child no lower than its origin.
pub fn satisfies_rules(rules: &[(usize, usize)], origin: &[usize], levels: &[usize]) -> bool {
    rules
        .iter()
        .all(|&(p, c)| levels[p] <= origin[p] || levels[c] >= origin[c])
}

impl L2cModel {
    /// Hard counterfactual draws for one input until `num_samples` accepted
    /// valid draws, the time budget, or `max_draws` is reached.
    pub fn generate(
        &self,
        clf: &Classifier,
        input_id: usize,
        row: &[Value],
        cfg: &GenerateConfig,
    ) -> Result<CounterfactualSet> {
        if cfg.num_samples == 0 {
            return Err(Error::Invalid("num_samples must be at least 1".into()));
        }
        self.check_classifier(clf)?;
        let start = Instant::now();
        let schema = &self.schema;
        let rules = self.active_rules(clf)?;
        let rule_features = self.active_rule_features(clf)?;
        let (levels, _) = row_levels(schema, row)?;
        let z = encode_levels(&levels, schema)?;
        let origin_label = clf.predict_row(schema, row)?;
        let target = 1 - origin_label;

        let p = self.perturbation_distribution(&z)?;
        let p = match self.unary_multipliers(&levels) {
            Some(m) => renormalized_blocks(
                &p.iter().zip(&m).map(|(a, b)| a * b).collect::<Vec<_>>(),
                &self.blocks,
            ),
            None => p,
        };
        let pi = self.selection_distribution(&z)?;
        let midpoints: Vec<Vec<f64>> = self
            .mutable
            .iter()
            .map(|&i| {
                let f = &schema.features[i];
                if f.is_continuous() {
                    (0..f.num_levels()).map(|j| bucket_midpoint(f, j)).collect()
                } else {
                    Ok(Vec::new())
                }
            })
            .collect::<Result<_>>()?;

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut samples = Vec::new();
        let mut accepted_valid = 0;
        let mut budget_exhausted = false;
        while accepted_valid < cfg.num_samples && samples.len() < cfg.max_draws {
            if start.elapsed().as_secs_f64() > cfg.budget_seconds {
                budget_exhausted = true;
                break;
            }
            for _ in 0..DRAW_BATCH.min(cfg.max_draws - samples.len()) {
                let noise = self.draw_noise(&mut rng);
                let mut draw = self.gumbel_argmax(&p, &noise.gumbel);
                let children = self.triggered_children(&rules, &draw, &levels);
                if !children.is_empty() {
                    let mut mult = vec![1.0; p.len()];
                    self.add_child_masks(&mut mult, &children, &levels);
                    let masked: Vec<f64> = p.iter().zip(&mult).map(|(a, b)| a * b).collect();
                    draw = self
                        .gumbel_argmax(&renormalized_blocks(&masked, &self.blocks), &noise.gumbel);
                }
                let selected: Vec<bool> = (0..self.num_mutable())
                    .map(|k| {
                        if !self.config.selector {
                            return true;
                        }
                        let q = pi[k];
                        q > 0.0 && q.ln() - (1.0 - q).ln() + noise.g1[k] - noise.g0[k] > 0.0
                    })
                    .collect();
                let mut new_levels = levels.clone();
                let mut new_row = row.to_vec();
                for (k, &i) in self.mutable.iter().enumerate() {
                    if !selected[k] {
                        continue;
                    }
                    new_levels[i] = draw[k];
                    new_row[i] = match row[i] {
                        Value::Real(_) => Value::Real(midpoints[k][draw[k]]),
                        Value::Level(_) => Value::Level(draw[k]),
                    };
                }
                let predicted_label = clf.predict_row(schema, &new_row)?;
                let valid = predicted_label == target;
                let mut accepted = true;
                if let Some(min) = cfg.sparsity_filter {
                    accepted &= sample_sparsity(&levels, &new_levels) >= min;
                }
                if cfg.constraint_filter {
                    accepted &= satisfies_unary(schema, &levels, &new_levels)
                        .iter()
                        .all(|&b| b)
                        && satisfies_rules(&rule_features, &levels, &new_levels);
                }
                accepted_valid += usize::from(accepted && valid);
                samples.push(Counterfactual {
                    levels: new_levels,
                    selected,
                    row: new_row,
                    predicted_label,
                    valid,
                    accepted,
                });
            }
        }

        let mut requested: Vec<usize> = samples
            .iter()
            .enumerate()
            .filter(|(_, c)| c.accepted && c.valid)
            .map(|(i, _)| i)
            .take(cfg.num_samples)
            .collect();
        if requested.len() < cfg.num_samples {
            let missing = cfg.num_samples - requested.len();
            requested.extend(
                samples
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.accepted && !c.valid)
                    .map(|(i, _)| i)
                    .take(missing),
            );
            requested.sort_unstable();
        }
        Ok(CounterfactualSet {
            input_id,
            origin_row: row.to_vec(),
            origin_levels: levels,
            origin_label,
            target_label: target,
            generation_seed: cfg.seed,
            num_requested: cfg.num_samples,
            samples,
            requested,
            budget_exhausted,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Generate for every row of `data`; row `r` uses seed `seed ^ ids[r]`.
    pub fn generate_all(
        &self,
        clf: &Classifier,
        data: &Dataset,
        ids: &[usize],
        cfg: &GenerateConfig,
        exec: Exec,
    ) -> Result<Vec<CounterfactualSet>> {
        if ids.len() != data.len() {
            return Err(Error::Shape(format!(
                "{} ids for {} rows",
                ids.len(),
                data.len()
            )));
        }
        exec.map_range(data.len(), |r| {
            let mut c = cfg.clone();
            c.seed = cfg.seed ^ ids[r] as u64;
            self.generate(clf, ids[r], &data.rows[r], &c)
        })
        .into_iter()
        .collect()
    }
}

/// Percent of features whose level is unchanged.
pub fn sample_sparsity(origin: &[usize], levels: &[usize]) -> f64 {
    if origin.is_empty() {
        return 100.0;
    }
    let same = origin.iter().zip(levels).filter(|(a, b)| a == b).count();
    100.0 * same as f64 / origin.len() as f64
}
