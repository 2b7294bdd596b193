use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{L2cModel, Noise, Prepared};
use crate::autodiff::{gumbel_vec, Adam, Gradients, Tape};
use crate::blackbox::{Classifier, InputMode};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::tabular::{encode_levels, row_levels, Dataset};

/// Mean loss terms over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub cross_entropy: f64,
    pub l1: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// Wall-clock seconds per epoch; kept apart from the deterministic history.
    pub epoch_seconds: Vec<f64>,
}

const CHUNK: usize = 16;

impl L2cModel {
    /// Rules enforced for this classifier: correlation rules only apply to
    /// classifiers trained on the discretized space.
    pub fn active_rules(&self, clf: &Classifier) -> Result<Vec<(usize, usize)>> {
        if clf.layout.mode == InputMode::Discretized {
            self.rule_positions()
        } else {
            Ok(Vec::new())
        }
    }

    /// [`L2cModel::active_rules`] as `(parent, child)` feature indices, the
    /// form the metrics and filters expect.
    pub fn active_rule_features(&self, clf: &Classifier) -> Result<Vec<(usize, usize)>> {
        Ok(self
            .active_rules(clf)?
            .into_iter()
            .map(|(p, c)| (self.mutable[p], self.mutable[c]))
            .collect())
    }

    pub(crate) fn prepare(
        &self,
        clf: &Classifier,
        row: &[crate::tabular::Value],
    ) -> Result<Prepared> {
        let (levels, _) = row_levels(&self.schema, row)?;
        let z = encode_levels(&levels, &self.schema)?;
        let target = 1 - clf.predict_row(&self.schema, row)?;
        let columns = self.blend_columns(clf, row, &z)?;
        let unary = self.unary_multipliers(&levels);
        Ok(Prepared {
            z,
            levels,
            columns,
            unary,
            target,
        })
    }

    pub fn draw_noise<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Noise {
        let k = self.num_mutable();
        Noise {
            gumbel: gumbel_vec(rng, self.generator_width()),
            g0: gumbel_vec(rng, k),
            g1: gumbel_vec(rng, k),
        }
    }

    /// Summed loss terms and gradients of a batch of prepared inputs.
    pub(crate) fn batch_gradients(
        &self,
        clf: &Classifier,
        batch: &[(&Prepared, Vec<Noise>)],
        rules: &[(usize, usize)],
        exec: Exec,
    ) -> Result<(Gradients, [f64; 3])> {
        let chunks: Vec<&[(&Prepared, Vec<Noise>)]> = batch.chunks(CHUNK).collect();
        let parts = exec.map(&chunks, |chunk| -> Result<(Gradients, [f64; 3])> {
            let mut grads = Gradients::zeros_like(&self.params);
            let mut sums = [0.0; 3];
            for (prep, noise) in chunk.iter() {
                let mut tape = Tape::new();
                let parts = self.sample_loss(clf, &mut tape, prep, noise, rules)?;
                sums[0] += tape.scalar(parts.loss);
                sums[1] += parts.ce;
                sums[2] += parts.l1;
                tape.backward(parts.loss, &mut grads);
            }
            Ok((grads, sums))
        });
        let mut total = Gradients::zeros_like(&self.params);
        let mut sums = [0.0; 3];
        for part in parts {
            let (g, s) = part?;
            total.add_assign(&g);
            for (a, b) in sums.iter_mut().zip(s) {
                *a += b;
            }
        }
        Ok((total, sums))
    }

    /// Minimize the relaxed objective over `data` with Adam. Targets are the
    /// flipped classifier predictions; the classifier itself stays frozen.
    pub fn train(&mut self, data: &Dataset, clf: &Classifier, exec: Exec) -> Result<TrainReport> {
        if data.is_empty() {
            return Err(Error::Invalid("cannot train on an empty dataset".into()));
        }
        self.check_classifier(clf)?;
        let rules = self.active_rules(clf)?;
        let prepared = data
            .rows
            .iter()
            .map(|r| self.prepare(clf, r))
            .collect::<Result<Vec<_>>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_add(0x5eed));
        let adam = Adam::new(self.config.lr);
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        let mut report = TrainReport::default();
        for epoch in 1..=self.config.epochs {
            let start = Instant::now();
            order.shuffle(&mut rng);
            let mut sums = [0.0; 3];
            for idx in order.chunks(self.config.batch_size) {
                let batch: Vec<(&Prepared, Vec<Noise>)> = idx
                    .iter()
                    .map(|&i| {
                        let noise = (0..self.config.mc_samples)
                            .map(|_| self.draw_noise(&mut rng))
                            .collect();
                        (&prepared[i], noise)
                    })
                    .collect();
                let (grads, s) = self.batch_gradients(clf, &batch, &rules, exec)?;
                self.params.accumulate(&grads, 1.0 / idx.len() as f64);
                adam.step(&mut self.params);
                for (a, b) in sums.iter_mut().zip(s) {
                    *a += b;
                }
            }
            let n = prepared.len() as f64;
            report.history.push(EpochRecord {
                epoch,
                loss: sums[0] / n,
                cross_entropy: sums[1] / n,
                l1: sums[2] / n,
            });
            report.epoch_seconds.push(start.elapsed().as_secs_f64());
        }
        Ok(report)
    }
}
