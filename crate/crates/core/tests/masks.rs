use l2c_core::l2c::{
    apply_binary_mask, apply_unary_mask, default_epsilon, restricted_levels,
    restricted_mass_after_mask,
};
use l2c_core::tabular::{FeatureSpec, Monotonic};
use proptest::prelude::*;

fn simplex(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6f64..1.0, 2..=max_len).prop_map(|w| {
        let t: f64 = w.iter().sum();
        w.into_iter().map(|x| x / t).collect()
    })
}

fn direction() -> impl Strategy<Value = Monotonic> {
    prop_oneof![
        Just(Monotonic::NonDecreasing),
        Just(Monotonic::NonIncreasing)
    ]
}

fn feature(c: usize, m: Monotonic) -> FeatureSpec {
    let names: Vec<String> = (0..c).map(|i| i.to_string()).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    FeatureSpec::categorical("f", &refs).with_monotonic(m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn masked_mass_has_closed_form((p, l) in simplex(8).prop_flat_map(|p| { let n = p.len(); (Just(p), 0..n) }), m in direction()) {
        let eps = default_epsilon();
        let q = apply_unary_mask(&p, &feature(p.len(), m), l, eps);
        let bad = restricted_levels(m, l, p.len());
        let r: f64 = p[bad.clone()].iter().sum();
        let after: f64 = q[bad.clone()].iter().sum();
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!((after - restricted_mass_after_mask(r, 1.0 - r, eps)).abs() < 1e-12);
        // Allowed levels keep their relative odds.
        let allowed: Vec<usize> = (0..p.len()).filter(|j| !bad.contains(j)).collect();
        for w in allowed.windows(2) {
            prop_assert!((q[w[0]] * p[w[1]] - q[w[1]] * p[w[0]]).abs() < 1e-12);
        }
        // The origin level is never restricted.
        prop_assert!(!bad.contains(&l));
        // Enough allowed mass guarantees the 1e-3 ceiling.
        if 1.0 - r >= eps * r * (1.0 - 1e-3) / 1e-3 {
            prop_assert!(after <= 1e-3 + 1e-15);
        }
    }

    #[test]
    fn binary_mask_only_acts_when_parent_rises(p in simplex(6), seed in 0usize..6) {
        let l = seed % p.len();
        let eps = default_epsilon();
        prop_assert_eq!(apply_binary_mask(&p, l, false, eps), p.clone());
        let q = apply_binary_mask(&p, l, true, eps);
        let below: f64 = q[..l].iter().sum();
        let before: f64 = p[..l].iter().sum();
        prop_assert!((below - restricted_mass_after_mask(before, 1.0 - before, eps)).abs() < 1e-12);
    }
}
