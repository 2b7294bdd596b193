use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schema::{DatasetSchema, FeatureKind, FeatureSpec};
use crate::error::{Error, Result};

/// One cell: a level index for categorical features, a raw real for
/// continuous ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Level(usize),
    Real(f64),
}

impl Value {
    pub fn as_real(self) -> Option<f64> {
        match self {
            Value::Real(x) => Some(x),
            Value::Level(_) => None,
        }
    }

    pub fn as_level(self) -> Option<usize> {
        match self {
            Value::Level(l) => Some(l),
            Value::Real(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: DatasetSchema,
    pub rows: Vec<Vec<Value>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(schema: DatasetSchema, rows: Vec<Vec<Value>>, labels: Vec<usize>) -> Result<Self> {
        let data = Dataset {
            schema,
            rows,
            labels,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.len() != self.labels.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} labels",
                self.rows.len(),
                self.labels.len()
            )));
        }
        for (r, (row, &label)) in self.rows.iter().zip(&self.labels).enumerate() {
            if label > 1 {
                return Err(Error::BadLabel {
                    row: r + 1,
                    value: label.to_string(),
                });
            }
            check_row(&self.schema, row, r + 1)?;
        }
        Ok(())
    }

    /// Raw values of one continuous column.
    pub fn column_values(&self, feature: &str) -> Result<Vec<f64>> {
        let i = self
            .schema
            .index_of(feature)
            .ok_or_else(|| Error::UnknownFeature(feature.to_string()))?;
        if !self.schema.features[i].is_continuous() {
            return Err(Error::Invalid(format!(
                "feature {feature:?} is not continuous"
            )));
        }
        Ok(self
            .rows
            .iter()
            .map(|row| row[i].as_real().expect("validated continuous cell"))
            .collect())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn with_schema(mut self, schema: DatasetSchema) -> Result<Self> {
        self.schema = schema;
        self.validate()?;
        Ok(self)
    }

    /// Render a cell the way it appears in CSV.
    pub fn format_value(feature: &FeatureSpec, value: Value) -> String {
        match (value, &feature.kind) {
            (Value::Level(l), FeatureKind::Categorical { levels }) => levels[l].clone(),
            (Value::Real(x), _) => format!("{x}"),
            (Value::Level(l), FeatureKind::Continuous { .. }) => feature.level_label(l),
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self
            .schema
            .features
            .iter()
            .map(|f| f.name.as_str())
            .collect();
        header.push(&self.schema.target_name);
        w.write_record(&header)?;
        for (row, label) in self.rows.iter().zip(&self.labels) {
            let mut rec: Vec<String> = row
                .iter()
                .zip(&self.schema.features)
                .map(|(&v, f)| Self::format_value(f, v))
                .collect();
            rec.push(label.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn check_row(schema: &DatasetSchema, row: &[Value], row_no: usize) -> Result<()> {
    if row.len() != schema.features.len() {
        return Err(Error::Shape(format!(
            "row {row_no} has {} cells, schema has {} features",
            row.len(),
            schema.features.len()
        )));
    }
    for (f, &v) in schema.features.iter().zip(row) {
        match (&f.kind, v) {
            (FeatureKind::Categorical { levels }, Value::Level(l)) if l < levels.len() => {}
            (FeatureKind::Categorical { .. }, v) => {
                return Err(Error::UnknownLevel {
                    row: row_no,
                    column: f.name.clone(),
                    value: format!("{v:?}"),
                })
            }
            (FeatureKind::Continuous { range, .. }, Value::Real(x)) => {
                if !(x >= range.0 && x <= range.1) {
                    return Err(Error::OutOfRange {
                        row: row_no,
                        column: f.name.clone(),
                        value: x,
                        lo: range.0,
                        hi: range.1,
                    });
                }
            }
            (FeatureKind::Continuous { .. }, Value::Level(_)) => {
                return Err(Error::Invalid(format!(
                    "row {row_no}: continuous feature {:?} holds a level",
                    f.name
                )))
            }
        }
    }
    Ok(())
}

/// Parse one CSV cell against its feature.
pub fn parse_cell(feature: &FeatureSpec, raw: &str, row: usize) -> Result<Value> {
    let raw = raw.trim();
    match &feature.kind {
        FeatureKind::Categorical { .. } => {
            feature
                .level_index(raw)
                .map(Value::Level)
                .ok_or_else(|| Error::UnknownLevel {
                    row,
                    column: feature.name.clone(),
                    value: raw.to_string(),
                })
        }
        FeatureKind::Continuous { range, .. } => {
            let x: f64 = raw.parse().map_err(|_| Error::MalformedNumber {
                row,
                column: feature.name.clone(),
                value: raw.to_string(),
            })?;
            if !x.is_finite() {
                return Err(Error::MalformedNumber {
                    row,
                    column: feature.name.clone(),
                    value: raw.to_string(),
                });
            }
            if x < range.0 || x > range.1 {
                return Err(Error::OutOfRange {
                    row,
                    column: feature.name.clone(),
                    value: x,
                    lo: range.0,
                    hi: range.1,
                });
            }
            Ok(Value::Real(x))
        }
    }
}

/// Column positions of `names` inside a CSV header.
pub(crate) fn locate_columns(header: &csv::StringRecord, names: &[&str]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h.trim() == *name)
                .ok_or_else(|| Error::MissingColumn {
                    column: name.to_string(),
                })
        })
        .collect()
}

/// Load a CSV whose header names every schema feature plus the target.
/// Extra columns are ignored; rows keep their file order. Row numbers in
/// errors count data rows from 1.
pub fn load_csv(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

pub fn read_csv<R: std::io::Read>(reader: R, schema: &DatasetSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let mut names: Vec<&str> = schema.features.iter().map(|f| f.name.as_str()).collect();
    names.push(&schema.target_name);
    let cols = locate_columns(&header, &names)?;
    let target_col = *cols.last().expect("target column");

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row_no = r + 1;
        let row = schema
            .features
            .iter()
            .zip(&cols)
            .map(|(f, &c)| parse_cell(f, rec.get(c).unwrap_or(""), row_no))
            .collect::<Result<Vec<_>>>()?;
        let raw_label = rec.get(target_col).unwrap_or("").trim();
        let label = match raw_label {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::BadLabel {
                    row: row_no,
                    value: other.to_string(),
                })
            }
        };
        rows.push(row);
        labels.push(label);
    }
    Ok(Dataset {
        schema: schema.clone(),
        rows,
        labels,
    })
}

/// Deterministic shuffled split into parts of the given sizes (the last part
/// takes any remainder).
pub fn split(data: &Dataset, sizes: &[usize], seed: u64) -> Vec<Dataset> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut idx: Vec<usize> = (0..data.len()).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut out = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for (k, &n) in sizes.iter().enumerate() {
        let end = if k + 1 == sizes.len() {
            idx.len()
        } else {
            (start + n).min(idx.len())
        };
        out.push(data.subset(&idx[start..end]));
        start = end;
    }
    out
}
