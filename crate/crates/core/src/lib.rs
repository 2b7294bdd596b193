// Negated float comparisons are deliberate throughout: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod blackbox;
pub mod error;
pub mod exec;
pub mod l2c;
pub mod metrics;
pub mod privacy;
pub mod synthetic;
pub mod tabular;

pub use error::{Error, Result};
