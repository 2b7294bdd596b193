//! Reverse-mode automatic differentiation and Adam, sized for the small dense
//! networks used here, plus the Gumbel noise used by the relaxed samplers.

mod adam;
mod check;
mod nn;
mod param;
mod tape;

pub use adam::{adam_step, sgd_step, Adam};
pub use check::{numeric_gradient, relative_error};
pub use nn::{relu_in_place, DenseLayer};
pub use param::{Gradients, ParamRecord, ParamSet, Parameter};
pub use tape::{softmax_blocks, Adjoints, BlendColumn, Tape, Var, PROB_FLOOR};

use rand::Rng;
use rand_distr::Open01;

/// Standard Gumbel draw `-ln(-ln u)`, `u ~ Uniform(0, 1)`.
pub fn gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    -(-u.ln()).ln()
}

pub fn gumbel_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| gumbel(rng)).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
