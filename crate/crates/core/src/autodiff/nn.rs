use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::param::ParamSet;
use super::tape::{Tape, Var};
use crate::error::Result;

/// Indices of a dense layer's weight (`out × in`) and bias inside a
/// [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: usize,
    pub bias: usize,
    pub inputs: usize,
    pub outputs: usize,
}

impl DenseLayer {
    /// Glorot-uniform weights, zero bias.
    pub fn init<R: Rng>(
        set: &mut ParamSet,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        let w: Vec<f64> = (0..inputs * outputs).map(|_| dist.sample(rng)).collect();
        let weight = set.add(&format!("{name}.weight"), &[outputs, inputs], w)?;
        let bias = set.add(&format!("{name}.bias"), &[outputs], vec![0.0; outputs])?;
        Ok(DenseLayer {
            weight,
            bias,
            inputs,
            outputs,
        })
    }

    pub fn on_tape<'p>(
        &self,
        tape: &mut Tape<'p>,
        set: &'p ParamSet,
        x: Var,
        trainable: bool,
    ) -> Result<Var> {
        tape.dense(x, set.get(self.weight), set.get(self.bias), trainable)
    }

    /// Tape-free forward pass.
    pub fn apply(&self, set: &ParamSet, x: &[f64]) -> Vec<f64> {
        let w = &set.get(self.weight).value;
        let b = &set.get(self.bias).value;
        (0..self.outputs)
            .map(|r| {
                let row = &w[r * self.inputs..(r + 1) * self.inputs];
                b[r] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    pub fn zero(&self, set: &mut ParamSet) {
        set.get_mut(self.weight)
            .value
            .iter_mut()
            .for_each(|v| *v = 0.0);
        set.get_mut(self.bias)
            .value
            .iter_mut()
            .for_each(|v| *v = 0.0);
    }
}

pub fn relu_in_place(xs: &mut [f64]) {
    xs.iter_mut().for_each(|v| *v = v.max(0.0));
}
