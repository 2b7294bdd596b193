//! Differentiable binary classifiers standing in for the black box: logistic
//! regression and a small ReLU MLP, both ending in a single logit.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sgd_step, sigmoid, Adam, DenseLayer, Gradients, ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::tabular::{one_hot_encode, Dataset, DatasetSchema, FeatureKind, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Logistic,
    Mlp,
}

/// How raw rows are turned into the classifier's design matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Standardized continuous columns, one-hot categorical blocks.
    #[default]
    Mixed,
    /// Every feature one-hot over its levels (continuous features bucketed).
    Discretized,
}

/// Columns occupied by one feature in the design matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ColumnBlock {
    Standardized { col: usize, mean: f64, std: f64 },
    OneHot { start: usize, len: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputLayout {
    pub mode: InputMode,
    pub blocks: Vec<ColumnBlock>,
    pub width: usize,
}

impl InputLayout {
    /// Layout for `data`; standardization statistics (mean, population std)
    /// come from its rows.
    pub fn fit(data: &Dataset, mode: InputMode) -> Result<Self> {
        let schema = &data.schema;
        let mut blocks = Vec::with_capacity(schema.num_features());
        let mut width = 0;
        for (i, f) in schema.features.iter().enumerate() {
            match (&f.kind, mode) {
                (FeatureKind::Continuous { .. }, InputMode::Mixed) => {
                    let xs: Vec<f64> = data
                        .rows
                        .iter()
                        .map(|r| {
                            r[i].as_real().ok_or_else(|| {
                                Error::Schema(format!("feature {:?} holds a level", f.name))
                            })
                        })
                        .collect::<Result<_>>()?;
                    let n = xs.len().max(1) as f64;
                    let mean = xs.iter().sum::<f64>() / n;
                    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
                    blocks.push(ColumnBlock::Standardized {
                        col: width,
                        mean,
                        std,
                    });
                    width += 1;
                }
                _ => {
                    let len = f.num_levels();
                    blocks.push(ColumnBlock::OneHot { start: width, len });
                    width += len;
                }
            }
        }
        Ok(InputLayout {
            mode,
            blocks,
            width,
        })
    }

    /// Design-matrix row for a raw row.
    pub fn encode(&self, schema: &DatasetSchema, row: &[Value]) -> Result<Vec<f64>> {
        if self.mode == InputMode::Discretized {
            return one_hot_encode(row, schema);
        }
        if row.len() != self.blocks.len() {
            return Err(Error::Shape(format!(
                "row has {} cells, layout has {} features",
                row.len(),
                self.blocks.len()
            )));
        }
        let mut x = vec![0.0; self.width];
        for ((block, &v), f) in self.blocks.iter().zip(row).zip(&schema.features) {
            match (*block, v) {
                (ColumnBlock::Standardized { col, mean, std }, Value::Real(r)) => {
                    x[col] = (r - mean) / std
                }
                (ColumnBlock::OneHot { start, len }, Value::Level(l)) if l < len => {
                    x[start + l] = 1.0
                }
                (_, v) => {
                    return Err(Error::UnknownLevel {
                        row: 0,
                        column: f.name.clone(),
                        value: format!("{v:?}"),
                    })
                }
            }
        }
        Ok(x)
    }

    pub fn encode_all(&self, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        data.rows
            .iter()
            .map(|r| self.encode(&data.schema, r))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub kind: ClassifierKind,
    pub mode: InputMode,
    /// Hidden widths of the MLP; ignored for logistic regression.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig::logistic(0)
    }
}

impl ClassifierConfig {
    pub fn logistic(seed: u64) -> Self {
        ClassifierConfig {
            kind: ClassifierKind::Logistic,
            mode: InputMode::Mixed,
            hidden: Vec::new(),
            epochs: 1000,
            lr: 0.1,
            batch_size: 64,
            seed,
        }
    }

    pub fn mlp(hidden: &[usize], seed: u64) -> Self {
        ClassifierConfig {
            kind: ClassifierKind::Mlp,
            mode: InputMode::Mixed,
            hidden: hidden.to_vec(),
            epochs: 200,
            lr: 1e-2,
            batch_size: 64,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub kind: ClassifierKind,
    pub layout: InputLayout,
    pub params: ParamSet,
    pub layers: Vec<DenseLayer>,
    /// Hash of the schema the layout was fitted on.
    pub schema_hash: String,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

/// Samples per gradient chunk; chunk sums are reduced in order so the result
/// does not depend on the executor.
const CHUNK: usize = 32;

impl Classifier {
    /// Freshly initialized network (Glorot weights, zero biases).
    pub fn init(
        kind: ClassifierKind,
        layout: InputLayout,
        hidden: &[usize],
        schema_hash: &str,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let widths: Vec<usize> = match kind {
            ClassifierKind::Logistic => vec![layout.width, 1],
            ClassifierKind::Mlp => {
                if hidden.is_empty() || hidden.contains(&0) {
                    return Err(Error::Invalid(format!("bad hidden widths {hidden:?}")));
                }
                std::iter::once(layout.width)
                    .chain(hidden.iter().copied())
                    .chain([1])
                    .collect()
            }
        };
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| DenseLayer::init(&mut params, &format!("f{i}"), w[0], w[1], &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Classifier {
            kind,
            layout,
            params,
            layers,
            schema_hash: schema_hash.to_string(),
            train_accuracy: 0.0,
            val_accuracy: None,
        })
    }

    pub fn input_width(&self) -> usize {
        self.layout.width
    }

    fn check_width(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.layout.width {
            return Err(Error::Shape(format!(
                "classifier expects {} inputs, got {}",
                self.layout.width,
                x.len()
            )));
        }
        Ok(())
    }

    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        self.check_width(x)?;
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(&self.params, &h);
            if i < last {
                crate::autodiff::relu_in_place(&mut h);
            }
        }
        Ok(h[0])
    }

    /// `(p0, p1)`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<[f64; 2]> {
        let p1 = sigmoid(self.logit(x)?);
        Ok([1.0 - p1, p1])
    }

    /// Argmax label, ties to 0.
    pub fn predict_label(&self, x: &[f64]) -> Result<usize> {
        let [p0, p1] = self.predict_proba(x)?;
        Ok(usize::from(p1 > p0))
    }

    pub fn predict_row(&self, schema: &DatasetSchema, row: &[Value]) -> Result<usize> {
        self.predict_label(&self.layout.encode(schema, row)?)
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<usize>> {
        data.rows
            .iter()
            .map(|r| self.predict_row(&data.schema, r))
            .collect()
    }

    /// Class probabilities `[p0, p1]` of `x` on `tape`. With `trainable`
    /// off the weights are constants and only `x` receives adjoints.
    pub fn forward<'p>(&'p self, tape: &mut Tape<'p>, x: Var, trainable: bool) -> Result<Var> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.on_tape(tape, &self.params, h, trainable)?;
            if i < last {
                h = tape.relu(h);
            }
        }
        let p = tape.sigmoid(h);
        tape.two_class(p)
    }

    /// Gradient of `CE(f(x), target)` with respect to `x`.
    pub fn input_gradient(&self, x: &[f64], target: usize) -> Result<Vec<f64>> {
        self.check_width(x)?;
        let mut tape = Tape::new();
        let xv = tape.leaf(x.to_vec());
        let probs = self.forward(&mut tape, xv, false)?;
        let loss = tape.cross_entropy(probs, target)?;
        let adj = tape.backward(loss, &mut Gradients::default());
        Ok(adj.get(xv, x.len()))
    }

    pub fn accuracy(&self, xs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
        if xs.is_empty() {
            return Ok(0.0);
        }
        let mut hits = 0;
        for (x, &y) in xs.iter().zip(labels) {
            hits += usize::from(self.predict_label(x)? == y);
        }
        Ok(hits as f64 / xs.len() as f64)
    }

    /// Summed cross-entropy and parameter gradients over `idx`.
    fn batch_gradients(
        &self,
        xs: &[Vec<f64>],
        ys: &[usize],
        idx: &[usize],
        exec: Exec,
    ) -> Result<(f64, Gradients)> {
        let chunks: Vec<&[usize]> = idx.chunks(CHUNK).collect();
        let parts = exec.map(&chunks, |chunk| -> Result<(f64, Gradients)> {
            let mut grads = Gradients::zeros_like(&self.params);
            let mut loss = 0.0;
            for &i in chunk.iter() {
                let mut tape = Tape::new();
                let x = tape.leaf(xs[i].clone());
                let p = self.forward(&mut tape, x, true)?;
                let l = tape.cross_entropy(p, ys[i])?;
                loss += tape.scalar(l);
                tape.backward(l, &mut grads);
            }
            Ok((loss, grads))
        });
        let mut total = Gradients::zeros_like(&self.params);
        let mut loss = 0.0;
        for part in parts {
            let (l, g) = part?;
            loss += l;
            total.add_assign(&g);
        }
        Ok((loss, total))
    }

    /// Fit a classifier on `data`. Logistic regression uses full-batch
    /// gradient descent, the MLP mini-batch Adam.
    pub fn train(
        data: &Dataset,
        val: Option<&Dataset>,
        cfg: &ClassifierConfig,
        exec: Exec,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Invalid("cannot train on an empty dataset".into()));
        }
        if let Some((row, &y)) = data.labels.iter().enumerate().find(|(_, &y)| y > 1) {
            return Err(Error::BadLabel {
                row: row + 1,
                value: y.to_string(),
            });
        }
        if cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.lr > 0.0) {
            return Err(Error::Invalid(format!(
                "epochs, batch size and learning rate must be positive (got {}, {}, {})",
                cfg.epochs, cfg.batch_size, cfg.lr
            )));
        }
        let layout = InputLayout::fit(data, cfg.mode)?;
        let mut model =
            Classifier::init(cfg.kind, layout, &cfg.hidden, &data.schema.hash(), cfg.seed)?;
        let xs = model.layout.encode_all(data)?;
        let ys = &data.labels;
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
        let adam = Adam::new(cfg.lr);
        for _ in 0..cfg.epochs {
            match cfg.kind {
                ClassifierKind::Logistic => {
                    let (_, g) = model.batch_gradients(&xs, ys, &order, exec)?;
                    model.params.accumulate(&g, 1.0 / xs.len() as f64);
                    sgd_step(&mut model.params, cfg.lr);
                }
                ClassifierKind::Mlp => {
                    order.shuffle(&mut rng);
                    for batch in order.chunks(cfg.batch_size) {
                        let (_, g) = model.batch_gradients(&xs, ys, batch, exec)?;
                        model.params.accumulate(&g, 1.0 / batch.len() as f64);
                        adam.step(&mut model.params);
                    }
                }
            }
        }
        model.train_accuracy = model.accuracy(&xs, ys)?;
        if let Some(v) = val {
            let vx = model.layout.encode_all(v)?;
            model.val_accuracy = Some(model.accuracy(&vx, &v.labels)?);
        }
        Ok(model)
    }

    /// Accuracy on a dataset under the same schema.
    pub fn evaluate(&self, data: &Dataset) -> Result<f64> {
        let xs = self.layout.encode_all(data)?;
        self.accuracy(&xs, &data.labels)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
