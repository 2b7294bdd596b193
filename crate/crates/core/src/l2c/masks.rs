//! Plausibility masks on per-feature perturbation distributions.

use crate::tabular::{FeatureSpec, Monotonic};

/// Default masking constant `e^-10`.
pub fn default_epsilon() -> f64 {
    (-10.0f64).exp()
}

/// Levels a monotonic feature may not move to from `level` (0-based).
pub fn restricted_levels(
    direction: Monotonic,
    level: usize,
    levels: usize,
) -> std::ops::Range<usize> {
    match direction {
        Monotonic::None => 0..0,
        Monotonic::NonDecreasing => 0..level.min(levels),
        Monotonic::NonIncreasing => (level + 1).min(levels)..levels,
    }
}

/// Multipliers for one block: `eps` on restricted levels, `1` elsewhere.
pub fn mask_multipliers(direction: Monotonic, level: usize, levels: usize, eps: f64) -> Vec<f64> {
    let mut m = vec![1.0; levels];
    for j in restricted_levels(direction, level, levels) {
        m[j] = eps;
    }
    m
}

fn renormalize(p: &mut [f64]) {
    let total: f64 = p.iter().sum();
    if total > 0.0 {
        p.iter_mut().for_each(|v| *v /= total);
    }
}

/// Scale the restricted entries of `p` by `eps` and renormalize.
pub fn apply_unary_mask(p: &[f64], feature: &FeatureSpec, level: usize, eps: f64) -> Vec<f64> {
    mask_with(p, feature.monotonic, level, eps)
}

pub(crate) fn mask_with(p: &[f64], direction: Monotonic, level: usize, eps: f64) -> Vec<f64> {
    let mut out: Vec<f64> = p
        .iter()
        .zip(mask_multipliers(direction, level, p.len(), eps))
        .map(|(a, m)| a * m)
        .collect();
    renormalize(&mut out);
    out
}

/// Child-side mask of a correlation rule: once the parent moves up, the
/// child may not fall below its current level.
pub fn apply_binary_mask(
    p_child: &[f64],
    child_level: usize,
    parent_moved_up: bool,
    eps: f64,
) -> Vec<f64> {
    if parent_moved_up {
        mask_with(p_child, Monotonic::NonDecreasing, child_level, eps)
    } else {
        p_child.to_vec()
    }
}

/// Total probability left on restricted levels after masking, in closed
/// form: `eps R / (eps R + U)` with `R` and `U` the restricted and allowed
/// mass before masking.
pub fn restricted_mass_after_mask(restricted: f64, allowed: f64, eps: f64) -> f64 {
    let r = eps * restricted;
    if r + allowed == 0.0 {
        0.0
    } else {
        r / (r + allowed)
    }
}
