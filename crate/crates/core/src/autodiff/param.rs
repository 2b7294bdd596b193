use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A trainable array with its gradient and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    /// Position inside the owning [`ParamSet`].
    pub id: usize,
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub step_count: u64,
}

impl Parameter {
    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Parameter>,
}

/// Per-parameter gradient buffers produced by one or more backward passes.
/// Slots missing from the buffer are not accumulated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    pub slots: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(set: &ParamSet) -> Self {
        Gradients {
            slots: set.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.slots.iter_mut().zip(&other.slots) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn slot_mut(&mut self, id: usize) -> Option<&mut Vec<f64>> {
        self.slots.get_mut(id).filter(|s| !s.is_empty())
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, shape: &[usize], value: Vec<f64>) -> Result<usize> {
        let n: usize = shape.iter().product();
        if n != value.len() {
            return Err(Error::Shape(format!(
                "parameter {name:?}: shape {shape:?} holds {n} values, got {}",
                value.len()
            )));
        }
        let id = self.params.len();
        self.params.push(Parameter {
            id,
            name: name.to_string(),
            shape: shape.to_vec(),
            grad: vec![0.0; n],
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            value,
            step_count: 0,
        });
        Ok(id)
    }

    pub fn get(&self, id: usize) -> &Parameter {
        &self.params[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Parameter {
        &mut self.params[id]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(Parameter::len).sum()
    }

    /// `grad += scale * g` for every parameter.
    pub fn accumulate(&mut self, grads: &Gradients, scale: f64) {
        for (p, g) in self.params.iter_mut().zip(&grads.slots) {
            for (a, b) in p.grad.iter_mut().zip(g) {
                *a += scale * b;
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Flat copy of every value, in parameter order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.value.iter().copied())
            .collect()
    }

    pub fn to_records(&self) -> Vec<ParamRecord> {
        self.params
            .iter()
            .map(|p| ParamRecord {
                name: p.name.clone(),
                shape: p.shape.clone(),
                values: p.value.clone(),
            })
            .collect()
    }

    pub fn from_records(records: Vec<ParamRecord>) -> Result<Self> {
        let mut set = ParamSet::new();
        for r in records {
            set.add(&r.name, &r.shape, r.values)?;
        }
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(&self.to_records())?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_records(serde_json::from_str(&text)?)
    }
}

/// Serialized form of a parameter: name, shape header and row-major values.
/// Optimizer state is not persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Serialize for ParamSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_records().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ParamSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let records = Vec::<ParamRecord>::deserialize(d)?;
        ParamSet::from_records(records).map_err(serde::de::Error::custom)
    }
}
