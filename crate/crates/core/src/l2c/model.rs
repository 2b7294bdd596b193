use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::masks::{default_epsilon, mask_multipliers};
use crate::autodiff::{
    relu_in_place, sigmoid, softmax_blocks, BlendColumn, DenseLayer, Gradients, ParamSet, Tape, Var,
};
use crate::blackbox::{Classifier, ColumnBlock, InputMode};
use crate::error::{Error, Result};
use crate::tabular::{argmax, bucket_midpoint, DatasetSchema, FeatureKind, Monotonic, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct L2cConfig {
    pub generator_hidden: usize,
    pub selector_hidden: usize,
    pub tau: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Reparameterized samples per input per step.
    pub mc_samples: usize,
    /// With the selector off every mutable feature is always selected and the
    /// sparsity penalty is dropped.
    pub selector: bool,
    pub seed: u64,
}

impl Default for L2cConfig {
    fn default() -> Self {
        L2cConfig {
            generator_hidden: 64,
            selector_hidden: 64,
            tau: 0.2,
            alpha: 1e-4,
            epsilon: default_epsilon(),
            epochs: 200,
            lr: 1e-4,
            batch_size: 64,
            mc_samples: 1,
            selector: true,
            seed: 0,
        }
    }
}

impl L2cConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Temperature(self.tau));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Invalid(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Invalid(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if self.generator_hidden == 0 || self.selector_hidden == 0 {
            return Err(Error::Invalid("hidden widths must be positive".into()));
        }
        if self.batch_size == 0 || self.mc_samples == 0 {
            return Err(Error::Invalid(
                "batch size and sample count must be positive".into(),
            ));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Invalid(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

/// Generator G (3 dense layers, ReLU between) and selector S (2 dense
/// layers, sigmoid output) over the one-hot encoding of a discretized schema.
#[derive(Debug, Clone, PartialEq)]
pub struct L2cModel {
    pub schema: DatasetSchema,
    pub config: L2cConfig,
    pub params: ParamSet,
    pub generator: Vec<DenseLayer>,
    pub selector: Vec<DenseLayer>,
    /// Feature index of each mutable feature, in selector order.
    pub mutable: Vec<usize>,
    /// Level count of each mutable feature.
    pub blocks: Vec<usize>,
    /// Start of each mutable block in the generator output.
    pub gen_offsets: Vec<usize>,
    /// `1 - cost` per mutable feature.
    pub keep: Vec<f64>,
}

/// Everything an input contributes to the relaxed loss that does not depend
/// on the parameters or the noise.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub z: Vec<f64>,
    pub levels: Vec<usize>,
    pub columns: Vec<BlendColumn>,
    /// Unary mask multipliers over the generator output, `None` when no
    /// constrained feature is mutable.
    pub unary: Option<Vec<f64>>,
    pub target: usize,
}

/// Gumbel noise for one reparameterized sample: one draw per generator
/// output and a pair per selection gate.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    pub gumbel: Vec<f64>,
    pub g0: Vec<f64>,
    pub g1: Vec<f64>,
}

/// Per-sample loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LossParts {
    pub loss: Var,
    pub ce: f64,
    pub l1: f64,
}

impl L2cModel {
    pub fn new(schema: &DatasetSchema, config: &L2cConfig) -> Result<Self> {
        config.validate()?;
        schema.validate()?;
        let mutable = schema.mutable_indices();
        if mutable.is_empty() {
            return Err(Error::Schema("schema declares no mutable features".into()));
        }
        let blocks: Vec<usize> = mutable
            .iter()
            .map(|&i| schema.features[i].num_levels())
            .collect();
        let gen_offsets = blocks
            .iter()
            .scan(0, |acc, &c| {
                let o = *acc;
                *acc += c;
                Some(o)
            })
            .collect();
        let keep = mutable
            .iter()
            .map(|&i| 1.0 - schema.features[i].effective_cost())
            .collect();
        let d = schema.one_hot_dim();
        let dm: usize = blocks.iter().sum();
        let (h, hs) = (config.generator_hidden, config.selector_hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        let generator = vec![
            DenseLayer::init(&mut params, "generator.0", d, h, &mut rng)?,
            DenseLayer::init(&mut params, "generator.1", h, h, &mut rng)?,
            DenseLayer::init(&mut params, "generator.2", h, dm, &mut rng)?,
        ];
        let selector = vec![
            DenseLayer::init(&mut params, "selector.0", d, hs, &mut rng)?,
            DenseLayer::init(&mut params, "selector.1", hs, mutable.len(), &mut rng)?,
        ];
        Ok(L2cModel {
            schema: schema.clone(),
            config: config.clone(),
            params,
            generator,
            selector,
            mutable,
            blocks,
            gen_offsets,
            keep,
        })
    }

    pub fn num_mutable(&self) -> usize {
        self.mutable.len()
    }

    /// Width of the generator output.
    pub fn generator_width(&self) -> usize {
        self.blocks.iter().sum()
    }

    fn check_z(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.schema.one_hot_dim() {
            return Err(Error::Shape(format!(
                "expected a one-hot vector of length {}, got {}",
                self.schema.one_hot_dim(),
                z.len()
            )));
        }
        Ok(())
    }

    fn generator_logits(&self, z: &[f64]) -> Vec<f64> {
        let mut h = self.generator[0].apply(&self.params, z);
        relu_in_place(&mut h);
        let mut h = self.generator[1].apply(&self.params, &h);
        relu_in_place(&mut h);
        self.generator[2].apply(&self.params, &h)
    }

    /// Per-feature perturbation distributions `p_i`, flattened over the
    /// mutable blocks.
    pub fn perturbation_distribution(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_z(z)?;
        Ok(softmax_blocks(&self.generator_logits(z), &self.blocks))
    }

    /// Cost-weighted selection probabilities `π`, one per mutable feature.
    pub fn selection_distribution(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_z(z)?;
        let mut h = self.selector[0].apply(&self.params, z);
        relu_in_place(&mut h);
        Ok(self.selector[1]
            .apply(&self.params, &h)
            .into_iter()
            .zip(&self.keep)
            .map(|(a, k)| k * sigmoid(a))
            .collect())
    }

    /// Unary mask multipliers for an input at `levels`; `None` when nothing
    /// is constrained.
    pub fn unary_multipliers(&self, levels: &[usize]) -> Option<Vec<f64>> {
        let mut any = false;
        let mut out = Vec::with_capacity(self.generator_width());
        for (&i, &c) in self.mutable.iter().zip(&self.blocks) {
            let m = self.schema.features[i].monotonic;
            any |= m != Monotonic::None;
            out.extend(mask_multipliers(m, levels[i], c, self.config.epsilon));
        }
        any.then_some(out)
    }

    /// Correlation rules as `(parent, child)` positions among the mutable
    /// features. Rules touching an immutable feature can never fire.
    pub fn rule_positions(&self) -> Result<Vec<(usize, usize)>> {
        let pos = |i: usize| self.mutable.iter().position(|&m| m == i);
        Ok(self
            .schema
            .correlation_indices()?
            .into_iter()
            .filter_map(|(p, c)| Some((pos(p)?, pos(c)?)))
            .collect())
    }

    /// Children whose block must be masked because the parent's sample moved
    /// up. `samples` are hard levels per mutable feature.
    pub(crate) fn triggered_children(
        &self,
        rules: &[(usize, usize)],
        samples: &[usize],
        levels: &[usize],
    ) -> Vec<usize> {
        rules
            .iter()
            .filter(|&&(p, _)| samples[p] > levels[self.mutable[p]])
            .map(|&(_, c)| c)
            .collect()
    }

    /// Hard level per mutable block of `log p + G`.
    pub(crate) fn gumbel_argmax(&self, p: &[f64], noise: &[f64]) -> Vec<usize> {
        self.gen_offsets
            .iter()
            .zip(&self.blocks)
            .map(|(&o, &c)| {
                let scored: Vec<f64> = (o..o + c)
                    .map(|j| p[j].max(crate::autodiff::PROB_FLOOR).ln() + noise[j])
                    .collect();
                argmax(&scored)
            })
            .collect()
    }

    /// Fold the non-decreasing child masks of fired rules into `mult`.
    pub(crate) fn add_child_masks(&self, mult: &mut [f64], children: &[usize], levels: &[usize]) {
        for &k in children {
            let o = self.gen_offsets[k];
            let c = self.blocks[k];
            let m = mask_multipliers(
                Monotonic::NonDecreasing,
                levels[self.mutable[k]],
                c,
                self.config.epsilon,
            );
            for (dst, v) in mult[o..o + c].iter_mut().zip(m) {
                *dst = dst.min(v);
            }
        }
    }

    /// Classifier compatibility: one block per feature, matching level
    /// counts, standardized columns only for continuous features.
    pub fn check_classifier(&self, clf: &Classifier) -> Result<()> {
        let layout = &clf.layout;
        if layout.blocks.len() != self.schema.num_features() {
            return Err(Error::Schema(format!(
                "classifier expects {} features, schema has {}",
                layout.blocks.len(),
                self.schema.num_features()
            )));
        }
        for (block, f) in layout.blocks.iter().zip(&self.schema.features) {
            let ok = match (block, &f.kind) {
                (ColumnBlock::Standardized { .. }, FeatureKind::Continuous { .. }) => {
                    layout.mode == InputMode::Mixed
                }
                (ColumnBlock::OneHot { len, .. }, _) => *len == f.num_levels(),
                _ => false,
            };
            if !ok {
                return Err(Error::Schema(format!(
                    "classifier layout does not match feature {:?}",
                    f.name
                )));
            }
        }
        Ok(())
    }

    /// Columns mapping (selection gates, generator samples) to the
    /// classifier input for an origin row.
    pub(crate) fn blend_columns(
        &self,
        clf: &Classifier,
        row: &[Value],
        z: &[f64],
    ) -> Result<Vec<BlendColumn>> {
        let offsets = self.schema.offsets();
        let mut cols = Vec::with_capacity(clf.layout.width);
        for (i, (block, f)) in clf
            .layout
            .blocks
            .iter()
            .zip(&self.schema.features)
            .enumerate()
        {
            let pos = self.mutable.iter().position(|&m| m == i);
            match *block {
                ColumnBlock::Standardized { mean, std, .. } => {
                    let x = row[i].as_real().ok_or_else(|| {
                        Error::Schema(format!("feature {:?} holds a level", f.name))
                    })?;
                    let base = (x - mean) / std;
                    let terms = match pos {
                        Some(k) => (0..self.blocks[k])
                            .map(|j| {
                                Ok((
                                    self.gen_offsets[k] + j,
                                    (bucket_midpoint(f, j)? - mean) / std,
                                ))
                            })
                            .collect::<Result<Vec<_>>>()?,
                        None => Vec::new(),
                    };
                    cols.push(BlendColumn {
                        gate: pos,
                        base,
                        terms,
                    });
                }
                ColumnBlock::OneHot { len, .. } => {
                    for j in 0..len {
                        cols.push(BlendColumn {
                            gate: pos,
                            base: z[offsets[i] + j],
                            terms: pos
                                .map(|k| vec![(self.gen_offsets[k] + j, 1.0)])
                                .unwrap_or_default(),
                        });
                    }
                }
            }
        }
        Ok(cols)
    }

    /// Relaxed loss of one raw input under fixed noise (one [`Noise`] per
    /// Monte Carlo sample) and its gradient for every parameter.
    pub fn loss_gradient(
        &self,
        clf: &Classifier,
        row: &[Value],
        noise: &[Noise],
    ) -> Result<(f64, Gradients)> {
        self.check_classifier(clf)?;
        let rules = self.active_rules(clf)?;
        let prep = self.prepare(clf, row)?;
        let mut tape = Tape::new();
        let parts = self.sample_loss(clf, &mut tape, &prep, noise, &rules)?;
        let mut grads = Gradients::zeros_like(&self.params);
        tape.backward(parts.loss, &mut grads);
        Ok((tape.scalar(parts.loss), grads))
    }

    /// Relaxed loss `mean_m CE(f(x̃_m), y') + α ‖π‖₁` of one input.
    pub(crate) fn sample_loss<'p>(
        &'p self,
        clf: &'p Classifier,
        tape: &mut Tape<'p>,
        prep: &Prepared,
        noise: &[Noise],
        rules: &[(usize, usize)],
    ) -> Result<LossParts> {
        let z = tape.leaf(prep.z.clone());
        let mut h = self.generator[0].on_tape(tape, &self.params, z, true)?;
        h = tape.relu(h);
        h = self.generator[1].on_tape(tape, &self.params, h, true)?;
        h = tape.relu(h);
        let logits = self.generator[2].on_tape(tape, &self.params, h, true)?;
        let p = tape.softmax_block(logits, &self.blocks)?;

        let pi = if self.config.selector {
            let q = self.selector[0].on_tape(tape, &self.params, z, true)?;
            let q = tape.relu(q);
            let a = self.selector[1].on_tape(tape, &self.params, q, true)?;
            let r = tape.sigmoid(a);
            Some(if self.keep.iter().all(|&k| k == 1.0) {
                r
            } else {
                tape.mul_const(r, self.keep.clone())?
            })
        } else {
            None
        };

        let mut ce_total: Option<Var> = None;
        for n in noise {
            let mut mult = prep.unary.clone();
            if !rules.is_empty() {
                let masked: Vec<f64> = match &mult {
                    Some(m) => {
                        let raw: Vec<f64> =
                            tape.value(p).iter().zip(m).map(|(a, b)| a * b).collect();
                        renormalized_blocks(&raw, &self.blocks)
                    }
                    None => tape.value(p).to_vec(),
                };
                let samples = self.gumbel_argmax(&masked, &n.gumbel);
                let children = self.triggered_children(rules, &samples, &prep.levels);
                if !children.is_empty() {
                    let m = mult.get_or_insert_with(|| vec![1.0; self.generator_width()]);
                    self.add_child_masks(m, &children, &prep.levels);
                }
            }
            let pm = match mult {
                Some(m) => {
                    let scaled = tape.mul_const(p, m)?;
                    tape.normalize_block(scaled, &self.blocks)?
                }
                None => p,
            };
            let lp = tape.log(pm);
            let zt = tape.gumbel_softmax(lp, &n.gumbel, self.config.tau, &self.blocks)?;
            let s = match pi {
                Some(pi) => tape.binary_concrete(pi, &n.g0, &n.g1, self.config.tau)?,
                None => tape.leaf(vec![1.0; self.num_mutable()]),
            };
            let x = tape.gated_blend(s, zt, prep.columns.clone())?;
            let probs = clf.forward(tape, x, false)?;
            let ce = tape.cross_entropy(probs, prep.target)?;
            ce_total = Some(match ce_total {
                Some(acc) => tape.add(acc, ce)?,
                None => ce,
            });
        }
        let ce_sum = ce_total.ok_or_else(|| Error::Invalid("no noise samples supplied".into()))?;
        let ce = tape.scale(ce_sum, 1.0 / noise.len() as f64);
        let ce_value = tape.scalar(ce);
        let (loss, l1_value) = match pi {
            Some(pi) if self.config.alpha > 0.0 => {
                let l1 = tape.l1_norm(pi);
                let l1_value = tape.scalar(l1);
                let pen = tape.scale(l1, self.config.alpha);
                (tape.add(ce, pen)?, l1_value)
            }
            Some(pi) => (ce, tape.value(pi).iter().map(|v| v.abs()).sum()),
            None => (ce, 0.0),
        };
        Ok(LossParts {
            loss,
            ce: ce_value,
            l1: l1_value,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>, classifier_hash: &str) -> Result<()> {
        let path = path.as_ref();
        let ckpt = Checkpoint {
            schema_hash: self.schema.hash(),
            classifier_hash: classifier_hash.to_string(),
            config: self.config.clone(),
            schema: self.schema.clone(),
            params: self.params.clone(),
        };
        let json = serde_json::to_string_pretty(&ckpt)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    /// Load a checkpoint; returns the model and the classifier hash it was
    /// trained against.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, String)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        let found = ckpt.schema.hash();
        if found != ckpt.schema_hash {
            return Err(Error::SchemaHash {
                expected: ckpt.schema_hash,
                found,
            });
        }
        let mut model = L2cModel::new(&ckpt.schema, &ckpt.config)?;
        if model
            .params
            .to_records()
            .iter()
            .map(|r| (&r.name, &r.shape))
            .ne(ckpt.params.to_records().iter().map(|r| (&r.name, &r.shape)))
        {
            return Err(Error::Shape(
                "checkpoint parameters do not match the schema".into(),
            ));
        }
        model.params = ckpt.params;
        Ok((model, ckpt.classifier_hash))
    }
}

/// Serialized model: hyperparameters, schema (with its hash) and weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    schema_hash: String,
    classifier_hash: String,
    config: L2cConfig,
    schema: DatasetSchema,
    params: ParamSet,
}

pub(crate) fn renormalized_blocks(xs: &[f64], blocks: &[usize]) -> Vec<f64> {
    let mut out = xs.to_vec();
    let mut o = 0;
    for &c in blocks {
        let total: f64 = out[o..o + c].iter().sum();
        if total > 0.0 {
            out[o..o + c].iter_mut().for_each(|v| *v /= total);
        }
        o += c;
    }
    out
}

/// Identity of a trained classifier, stored in checkpoints.
pub fn classifier_hash(clf: &Classifier) -> Result<String> {
    use sha2::{Digest, Sha256};
    let json = serde_json::to_string(clf)?;
    let digest = Sha256::digest(json.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
