//! Desiderata of counterfactual sets. All comparisons happen on feature
//! levels, so continuous features count as changed only when their bucket
//! changes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::l2c::{satisfies_rules, satisfies_unary, CounterfactualSet};
use crate::tabular::{DatasetSchema, Monotonic};

/// Percent of `samples` labelled valid.
pub fn validity_of(valid: &[bool]) -> Result<f64> {
    if valid.is_empty() {
        return Err(Error::Invalid("validity of an empty set".into()));
    }
    Ok(100.0 * valid.iter().filter(|&&v| v).count() as f64 / valid.len() as f64)
}

/// Mean percent of features unchanged from `origin`.
pub fn sparsity_of(origin: &[usize], samples: &[Vec<usize>]) -> f64 {
    if samples.is_empty() || origin.is_empty() {
        return 0.0;
    }
    let n = origin.len() as f64;
    let total: f64 = samples
        .iter()
        .map(|s| s.iter().zip(origin).filter(|(a, b)| a == b).count() as f64 / n)
        .sum();
    100.0 * total / samples.len() as f64
}

/// Mean Hamming distance over all unordered pairs, normalized by the feature
/// count; zero with fewer than two samples.
pub fn diversity_of(samples: &[Vec<usize>]) -> f64 {
    let m = samples.len();
    if m < 2 {
        return 0.0;
    }
    let n = samples[0].len() as f64;
    let mut total = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            let d = samples[i]
                .iter()
                .zip(&samples[j])
                .filter(|(a, b)| a != b)
                .count();
            total += d as f64 / n;
        }
    }
    100.0 * total / (m * (m - 1) / 2) as f64
}

pub fn harmonic_mean(diversity: f64, sparsity: f64) -> f64 {
    if diversity + sparsity == 0.0 {
        0.0
    } else {
        2.0 * diversity * sparsity / (diversity + sparsity)
    }
}

/// Share of samples respecting each monotonic feature, averaged over those
/// features; 100 when nothing is constrained or there are no samples.
pub fn unary_rate_of(schema: &DatasetSchema, origin: &[usize], samples: &[Vec<usize>]) -> f64 {
    let k = schema
        .features
        .iter()
        .filter(|f| f.monotonic != Monotonic::None)
        .count();
    if k == 0 || samples.is_empty() {
        return 100.0;
    }
    let mut per_feature = vec![0usize; k];
    for s in samples {
        for (acc, ok) in per_feature
            .iter_mut()
            .zip(satisfies_unary(schema, origin, s))
        {
            *acc += usize::from(ok);
        }
    }
    let m = samples.len() as f64;
    100.0 * per_feature.iter().map(|&c| c as f64 / m).sum::<f64>() / k as f64
}

/// Share of samples satisfying every `(parent, child)` rule.
pub fn binary_rate_of(rules: &[(usize, usize)], origin: &[usize], samples: &[Vec<usize>]) -> f64 {
    if rules.is_empty() || samples.is_empty() {
        return 100.0;
    }
    let ok = samples
        .iter()
        .filter(|s| satisfies_rules(rules, origin, s))
        .count();
    100.0 * ok as f64 / samples.len() as f64
}

/// Metrics of one input's returned explanations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputMetrics {
    pub validity: f64,
    pub coverage: f64,
    pub sparsity: f64,
    pub diversity: f64,
    pub unary: f64,
    pub binary: f64,
}

/// Metrics of a single set. An input with no returned explanations scores
/// zero on validity, coverage, sparsity and diversity.
pub fn input_metrics(
    set: &CounterfactualSet,
    schema: &DatasetSchema,
    rules: &[(usize, usize)],
) -> InputMetrics {
    let returned: Vec<_> = set.returned().collect();
    let levels: Vec<Vec<usize>> = returned.iter().map(|c| c.levels.clone()).collect();
    let valid_levels: Vec<Vec<usize>> = returned
        .iter()
        .filter(|c| c.valid)
        .map(|c| c.levels.clone())
        .collect();
    let validity =
        validity_of(&returned.iter().map(|c| c.valid).collect::<Vec<_>>()).unwrap_or(0.0);
    InputMetrics {
        validity,
        coverage: if valid_levels.is_empty() { 0.0 } else { 100.0 },
        sparsity: sparsity_of(&set.origin_levels, &levels),
        diversity: diversity_of(&valid_levels),
        unary: unary_rate_of(schema, &set.origin_levels, &levels),
        binary: binary_rate_of(rules, &set.origin_levels, &levels),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesiderataReport {
    pub num_inputs: usize,
    pub min_sparsity: f64,
    pub sparsity: f64,
    pub diversity: f64,
    pub harmonic_mean: f64,
    pub validity: f64,
    pub coverage: f64,
    pub unary: f64,
    /// Present only when correlation rules were enforced.
    pub binary: Option<f64>,
    /// Mean wall-clock seconds per input. Excluded from the JSON so reports
    /// stay reproducible.
    #[serde(skip)]
    pub inference_time_seconds: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

impl DesiderataReport {
    /// Unweighted mean over inputs. The harmonic mean is taken of the
    /// aggregated diversity and sparsity.
    pub fn evaluate(
        sets: &[CounterfactualSet],
        schema: &DatasetSchema,
        rules: &[(usize, usize)],
        exec: Exec,
    ) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::Invalid("no counterfactual sets found".into()));
        }
        let per = exec.map(sets, |s| input_metrics(s, schema, rules));
        let sparsity = mean(per.iter().map(|m| m.sparsity));
        let diversity = mean(per.iter().map(|m| m.diversity));
        Ok(DesiderataReport {
            num_inputs: sets.len(),
            min_sparsity: schema.min_sparsity(),
            sparsity,
            diversity,
            harmonic_mean: harmonic_mean(diversity, sparsity),
            validity: mean(per.iter().map(|m| m.validity)),
            coverage: mean(per.iter().map(|m| m.coverage)),
            unary: mean(per.iter().map(|m| m.unary)),
            binary: (!rules.is_empty()).then(|| mean(per.iter().map(|m| m.binary))),
            inference_time_seconds: mean(sets.iter().map(|s| s.elapsed_seconds)),
        })
    }

    /// Field-wise mean of several reports (one per seed).
    pub fn mean_of(reports: &[DesiderataReport]) -> Option<Self> {
        let first = reports.first()?;
        let avg = |f: fn(&DesiderataReport) -> f64| mean(reports.iter().map(f));
        let binary = reports
            .iter()
            .map(|r| r.binary)
            .collect::<Option<Vec<f64>>>()
            .map(|b| mean(b.into_iter()));
        let sparsity = avg(|r| r.sparsity);
        let diversity = avg(|r| r.diversity);
        Some(DesiderataReport {
            num_inputs: first.num_inputs,
            min_sparsity: first.min_sparsity,
            sparsity,
            diversity,
            harmonic_mean: harmonic_mean(diversity, sparsity),
            validity: avg(|r| r.validity),
            coverage: avg(|r| r.coverage),
            unary: avg(|r| r.unary),
            binary,
            inference_time_seconds: avg(|r| r.inference_time_seconds),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl fmt::Display for DesiderataReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let binary = self
            .binary
            .map_or_else(|| "-".to_string(), |b| format!("{b:.2}"));
        writeln!(
            f,
            "Min Sparsity: {:.2} %  ({} inputs)",
            self.min_sparsity, self.num_inputs
        )?;
        writeln!(
            f,
            "{:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "Sparsity",
            "Diversity",
            "Harmonic",
            "Validity",
            "Coverage",
            "Unary",
            "Binary",
            "Time(s)"
        )?;
        write!(
            f,
            "{:>10.2} {:>10.2} {:>10.2} {:>10.2} {:>10.2} {:>10.2} {:>10} {:>10.5}",
            self.sparsity,
            self.diversity,
            self.harmonic_mean,
            self.validity,
            self.coverage,
            self.unary,
            binary,
            self.inference_time_seconds
        )
    }
}
