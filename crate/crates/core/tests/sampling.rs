mod support;

use std::time::Instant;

use l2c_core::autodiff::{gumbel, gumbel_vec, Tape};
use l2c_core::tabular::argmax;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::{chi_square_p_value, hard_gumbel_sample};

static ONE_BLOCK: [usize; 1] = [3];

#[test]
fn gumbel_max_follows_categorical_law() {
    let start = Instant::now();
    let p = [0.2, 0.3, 0.5];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut counts = [0usize; 3];
    for _ in 0..10_000 {
        let g = gumbel_vec(&mut rng, 3);
        counts[hard_gumbel_sample(&p, &g, 0.2)] += 1;
    }
    let pv = chi_square_p_value(&counts, &p);
    eprintln!(
        "counts {counts:?}, p-value {pv:.4}, {:.2?}",
        start.elapsed()
    );
    assert!(pv > 0.01, "chi-square p-value {pv}");
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn hard_sample_does_not_depend_on_temperature() {
    let p = [0.1, 0.6, 0.3];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let g = gumbel_vec(&mut rng, 3);
        let a = hard_gumbel_sample(&p, &g, 5.0);
        let b = hard_gumbel_sample(&p, &g, 0.05);
        assert_eq!(a, b);
    }
}

#[test]
fn low_temperature_relaxation_is_nearly_one_hot() {
    let p = [0.2, 0.3, 0.5];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut max_gap: f64 = 0.0;
    for _ in 0..1000 {
        let g = gumbel_vec(&mut rng, 3);
        let mut t = Tape::new();
        let lp = t.leaf(p.iter().map(|q: &f64| q.ln()).collect());
        let y = t.gumbel_softmax(lp, &g, 1e-3, &ONE_BLOCK).unwrap();
        let v = t.value(y);
        let k = argmax(v);
        max_gap = max_gap.max(1.0 - v[k]);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    // Ties within 1e-3 of each other are rare but possible.
    assert!(max_gap < 0.5);
}

#[test]
fn binary_concrete_frequency_matches_pi() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 20_000;
    let mut ones = 0;
    for _ in 0..n {
        let (g0, g1) = (gumbel(&mut rng), gumbel(&mut rng));
        let mut t = Tape::new();
        let pi = t.leaf(vec![0.7]);
        let s = t.binary_concrete(pi, &[g0], &[g1], 0.2).unwrap();
        ones += usize::from(t.value(s)[0] > 0.5);
    }
    let freq = ones as f64 / n as f64;
    eprintln!("binary concrete frequency {freq:.4}");
    assert!((freq - 0.7).abs() < 0.02);
}

#[test]
fn binary_concrete_saturates_at_extremes() {
    let mut t = Tape::new();
    let pi = t.leaf(vec![0.0, 1.0]);
    let s = t
        .binary_concrete(pi, &[3.0, -3.0], &[-3.0, 3.0], 0.2)
        .unwrap();
    let v = t.value(s);
    assert!(v[0] < 1e-9, "{}", v[0]);
    assert!(v[1] > 1.0 - 1e-9, "{}", v[1]);
}
