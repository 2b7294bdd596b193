//! Numeric counterparts of the blend used in training: composing a
//! perturbed one-hot vector and decoding it back to a heterogeneous row.

use crate::error::{Error, Result};
use crate::tabular::{argmax, bucket_midpoint, DatasetSchema, Value};

fn check(schema: &DatasetSchema, z_tilde: &[f64], s: &[f64]) -> Result<Vec<usize>> {
    let mutable = schema.mutable_indices();
    let width: usize = mutable
        .iter()
        .map(|&i| schema.features[i].num_levels())
        .sum();
    if z_tilde.len() != width || s.len() != mutable.len() {
        return Err(Error::Shape(format!(
            "expected {} perturbation entries and {} gates, got {} and {}",
            width,
            mutable.len(),
            z_tilde.len(),
            s.len()
        )));
    }
    Ok(mutable)
}

/// `z̃_i = (1 - s_i) z_i + s_i z̃_i` on mutable blocks; immutable blocks are
/// copied from `z`. `z_tilde` holds the mutable blocks only, `s` one gate
/// per mutable feature.
pub fn compose_counterfactual(
    schema: &DatasetSchema,
    z: &[f64],
    z_tilde: &[f64],
    s: &[f64],
) -> Result<Vec<f64>> {
    let mutable = check(schema, z_tilde, s)?;
    if z.len() != schema.one_hot_dim() {
        return Err(Error::Shape(format!(
            "one-hot vector of length {}",
            z.len()
        )));
    }
    let offsets = schema.offsets();
    let mut out = z.to_vec();
    let mut g = 0;
    for (k, &i) in mutable.iter().enumerate() {
        let c = schema.features[i].num_levels();
        for j in 0..c {
            let o = offsets[i] + j;
            out[o] = (1.0 - s[k]) * z[o] + s[k] * z_tilde[g + j];
        }
        g += c;
    }
    Ok(out)
}

/// Decode a perturbation back to raw values. Continuous features take the
/// gated midpoint blend `(1 - s) x + s Σ z̃_j mid_j` (exactly `x` when the gate
/// is closed); categorical features take the argmax of the composed block,
/// first level on ties.
pub fn one_hot_decode(
    schema: &DatasetSchema,
    z_tilde: &[f64],
    s: &[f64],
    origin: &[Value],
) -> Result<Vec<Value>> {
    let mutable = check(schema, z_tilde, s)?;
    let mut out = origin.to_vec();
    let mut g = 0;
    for (k, &i) in mutable.iter().enumerate() {
        let f = &schema.features[i];
        let c = f.num_levels();
        let block = &z_tilde[g..g + c];
        g += c;
        out[i] = match origin[i] {
            Value::Real(x) => {
                if s[k] == 0.0 {
                    Value::Real(x)
                } else {
                    let mut mix = 0.0;
                    for (j, w) in block.iter().enumerate() {
                        mix += w * bucket_midpoint(f, j)?;
                    }
                    Value::Real((1.0 - s[k]) * x + s[k] * mix)
                }
            }
            Value::Level(l) => {
                let composed: Vec<f64> = block
                    .iter()
                    .enumerate()
                    .map(|(j, w)| (1.0 - s[k]) * f64::from(u8::from(j == l)) + s[k] * w)
                    .collect();
                Value::Level(argmax(&composed))
            }
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::FeatureSpec;

    fn schema() -> DatasetSchema {
        DatasetSchema::new(
            "y",
            vec![
                FeatureSpec::continuous("x", 0.0, 100.0)
                    .with_edges(vec![0.0, 25.0, 50.0, 75.0, 100.0]),
                FeatureSpec::categorical("c", &["a", "b", "c"]),
                FeatureSpec::categorical("fixed", &["u", "v"]).immutable(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn closed_gates_are_identity() {
        let s = schema();
        let z = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        let zt = [0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        assert_eq!(
            compose_counterfactual(&s, &z, &zt, &[0.0, 0.0]).unwrap(),
            z.to_vec()
        );
        let origin = [Value::Real(42.7), Value::Level(2), Value::Level(1)];
        assert_eq!(
            one_hot_decode(&s, &zt, &[0.0, 0.0], &origin).unwrap(),
            origin.to_vec()
        );
    }

    #[test]
    fn open_gates_take_the_sample() {
        let s = schema();
        let z = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        let zt = [0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let out = compose_counterfactual(&s, &z, &zt, &[1.0, 1.0]).unwrap();
        assert_eq!(out, vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let origin = [Value::Real(10.0), Value::Level(2), Value::Level(1)];
        let x = one_hot_decode(&s, &zt, &[1.0, 1.0], &origin).unwrap();
        assert_eq!(x, vec![Value::Real(37.5), Value::Level(0), Value::Level(1)]);
    }

    #[test]
    fn relaxed_gate_blends() {
        let s = schema();
        let z = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let zt = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let out = compose_counterfactual(&s, &z, &zt, &[0.5, 0.5]).unwrap();
        assert_eq!(&out[..4], &[0.5, 0.5, 0.0, 0.0]);
        for b in [&out[..4], &out[4..7], &out[7..]] {
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let origin = [Value::Real(10.0), Value::Level(1), Value::Level(0)];
        let x = one_hot_decode(&s, &zt, &[0.5, 0.5], &origin).unwrap();
        assert_eq!(x[0], Value::Real(23.75));
    }
}
