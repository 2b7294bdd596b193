//! Independent reference implementations shared by the integration tests
//! and the acceptance target: finite-difference gradient checks, naive
//! pairwise metrics and privacy measures, and a chi-square test.
#![allow(dead_code)]

use l2c_core::autodiff::{
    numeric_gradient, relative_error, BlendColumn, Gradients, ParamSet, Tape, Var,
};
use l2c_core::blackbox::{Classifier, ClassifierConfig, InputMode};
use l2c_core::exec::Exec;
use l2c_core::l2c::{L2cConfig, L2cModel};
use l2c_core::privacy::{MapOutcome, Record};
use l2c_core::synthetic::synthetic_dataset;
use l2c_core::tabular::{
    argmax, discretize, Dataset, DatasetSchema, Discretizer, DiscretizerConfig, FeatureSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub const H: f64 = 1e-5;
pub const SEEDS: u64 = 100;
static BLOCKS: [usize; 3] = [2, 3, 1];

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

// ---- gradients ----

/// Scalar probe `Σ c_j y_j` of an op's output, so vector ops get a full
/// Jacobian-vector check.
fn probe<'p>(tape: &mut Tape<'p>, y: Var, weights: &[f64]) -> Var {
    let w = tape.mul_const(y, weights.to_vec()).unwrap();
    tape.sum(w)
}

/// Worst relative error of one op over `SEEDS` random inputs.
pub fn check_op<G, F>(gen: G, op: F) -> f64
where
    G: Fn(&mut ChaCha8Rng) -> Vec<f64>,
    F: for<'p> Fn(&mut Tape<'p>, Var) -> Var,
{
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gen(&mut rng);
        let out_len = {
            let mut t = Tape::new();
            let v = t.leaf(x.clone());
            let y = op(&mut t, v);
            t.value(y).len()
        };
        let weights: Vec<f64> = (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let value = |x: &[f64]| {
            let mut t = Tape::new();
            let v = t.leaf(x.to_vec());
            let y = op(&mut t, v);
            let l = probe(&mut t, y, &weights);
            t.scalar(l)
        };
        let mut t = Tape::new();
        let v = t.leaf(x.clone());
        let y = op(&mut t, v);
        let l = probe(&mut t, y, &weights);
        let analytic = t.backward(l, &mut Gradients::default()).get(v, x.len());
        let numeric = numeric_gradient(value, &x, H);
        worst = worst.max(relative_error(&analytic, &numeric, 1e-10));
    }
    worst
}

pub fn uniform(n: usize, lo: f64, hi: f64) -> impl Fn(&mut ChaCha8Rng) -> Vec<f64> {
    move |rng| (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Values bounded away from zero, for ops with a kink there.
pub fn away_from_zero(n: usize) -> impl Fn(&mut ChaCha8Rng) -> Vec<f64> {
    move |rng| {
        (0..n)
            .map(|_| {
                let v: f64 = rng.random_range(0.05..2.0);
                if rng.random_bool(0.5) {
                    v
                } else {
                    -v
                }
            })
            .collect()
    }
}

/// Every tape op with its worst relative error.
pub fn op_suite() -> Vec<(&'static str, f64)> {
    vec![
        ("relu", check_op(away_from_zero(6), |t, x| t.relu(x))),
        (
            "sigmoid",
            check_op(uniform(6, -4.0, 4.0), |t, x| t.sigmoid(x)),
        ),
        ("log", check_op(uniform(6, 0.05, 0.95), |t, x| t.log(x))),
        (
            "scale",
            check_op(uniform(6, -2.0, 2.0), |t, x| t.scale(x, -1.7)),
        ),
        (
            "mul_const",
            check_op(uniform(3, -2.0, 2.0), |t, x| {
                t.mul_const(x, vec![0.5, -2.0, 3.0]).unwrap()
            }),
        ),
        ("sum", check_op(uniform(5, -2.0, 2.0), |t, x| t.sum(x))),
        ("l1_norm", check_op(away_from_zero(5), |t, x| t.l1_norm(x))),
        (
            "add",
            check_op(uniform(4, -2.0, 2.0), |t, x| {
                let y = t.sigmoid(x);
                t.add(x, y).unwrap()
            }),
        ),
        (
            "mul",
            check_op(uniform(4, -2.0, 2.0), |t, x| {
                let y = t.sigmoid(x);
                t.mul(x, y).unwrap()
            }),
        ),
        (
            "softmax_block",
            check_op(uniform(6, -3.0, 3.0), |t, x| {
                t.softmax_block(x, &BLOCKS).unwrap()
            }),
        ),
        (
            "normalize_block",
            check_op(uniform(6, 0.1, 2.0), |t, x| {
                t.normalize_block(x, &BLOCKS).unwrap()
            }),
        ),
        (
            "gumbel_softmax",
            check_op(uniform(6, -3.0, 0.0), |t, x| {
                t.gumbel_softmax(x, &[0.3, -0.2, 1.1, 0.0, -0.7, 0.4], 0.7, &BLOCKS)
                    .unwrap()
            }),
        ),
        (
            "binary_concrete",
            check_op(uniform(4, 0.05, 0.95), |t, x| {
                t.binary_concrete(x, &[0.1, -0.5, 0.8, 0.0], &[0.3, 0.2, -0.4, 1.0], 0.7)
                    .unwrap()
            }),
        ),
        (
            "two_class",
            check_op(uniform(1, 0.05, 0.95), |t, x| t.two_class(x).unwrap()),
        ),
        (
            "cross_entropy",
            check_op(uniform(2, 0.05, 0.95), |t, x| {
                t.cross_entropy(x, 1).unwrap()
            }),
        ),
        (
            "cross_entropy_target0",
            check_op(uniform(2, 0.05, 0.95), |t, x| {
                t.cross_entropy(x, 0).unwrap()
            }),
        ),
        // The probed vector doubles as gates (entries 0, 1) and samples
        // (entries 2..5), so both adjoint paths are exercised.
        (
            "gated_blend",
            check_op(uniform(5, 0.05, 0.95), |t, x| {
                let cols = vec![
                    BlendColumn {
                        gate: Some(0),
                        base: 0.3,
                        terms: vec![(2, 1.5), (3, -0.5)],
                    },
                    BlendColumn {
                        gate: None,
                        base: 2.0,
                        terms: vec![],
                    },
                    BlendColumn {
                        gate: Some(1),
                        base: -1.0,
                        terms: vec![(4, 1.0)],
                    },
                ];
                t.gated_blend(x, x, cols).unwrap()
            }),
        ),
        ("dense", dense_check()),
    ]
}

/// Dense layer checked against weights, bias and input at once.
fn dense_check() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // flat = w (4x3) ++ b (4) ++ x (3)
        let flat: Vec<f64> = (0..19).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eval = |flat: &[f64]| -> (f64, Vec<f64>) {
            let mut set = ParamSet::new();
            set.add("w", &[4, 3], flat[..12].to_vec()).unwrap();
            set.add("b", &[4], flat[12..16].to_vec()).unwrap();
            let mut t = Tape::new();
            let xv = t.leaf(flat[16..].to_vec());
            let y = t.dense(xv, set.get(0), set.get(1), true).unwrap();
            let l = probe(&mut t, y, &c);
            let mut g = Gradients::zeros_like(&set);
            let adj = t.backward(l, &mut g);
            let mut grad = g.slots.concat();
            grad.extend(adj.get(xv, 3));
            (t.scalar(l), grad)
        };
        let analytic = eval(&flat).1;
        let numeric = numeric_gradient(|f| eval(f).0, &flat, H);
        worst = worst.max(relative_error(&analytic, &numeric, 1e-10));
    }
    worst
}

fn set_flat(params: &mut ParamSet, flat: &[f64]) {
    let mut o = 0;
    for p in params.iter_mut() {
        let n = p.value.len();
        p.value.copy_from_slice(&flat[o..o + n]);
        o += n;
    }
}

/// Worst relative error of the full training objective over `SEEDS` random
/// (model, input, noise) triples.
pub fn composed_check(clf: &Classifier, data: &Dataset) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let cfg = L2cConfig {
            generator_hidden: 8,
            selector_hidden: 6,
            tau: 0.5,
            alpha: 0.3,
            mc_samples: 2,
            seed,
            ..L2cConfig::default()
        };
        let model = L2cModel::new(&data.schema, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let row = &data.rows[rng.random_range(0..data.len())];
        let noise: Vec<_> = (0..cfg.mc_samples)
            .map(|_| model.draw_noise(&mut rng))
            .collect();
        let (_, grads) = model.loss_gradient(clf, row, &noise).unwrap();
        let analytic = grads.slots.concat();
        let flat = model.params.flat_values();
        let mut probe_model = model.clone();
        let numeric = numeric_gradient(
            |f| {
                set_flat(&mut probe_model.params, f);
                probe_model.loss_gradient(clf, row, &noise).unwrap().0
            },
            &flat,
            H,
        );
        worst = worst.max(relative_error(&analytic, &numeric, 1e-10));
    }
    worst
}

/// Composed-objective check on a mixed-input classifier, then on a
/// discretized classifier with a correlation rule so child masks fire.
pub fn composed_suite() -> Vec<(&'static str, f64)> {
    let data = synthetic_dataset(200, 3).unwrap();
    let mut ccfg = ClassifierConfig::logistic(3);
    ccfg.epochs = 200;
    let clf = Classifier::train(&data, None, &ccfg, Exec::Sequential).unwrap();
    let labels = clf.predict_dataset(&data).unwrap();
    let disc = Discretizer::fit(&data, &labels, &DiscretizerConfig::default()).unwrap();
    let d = discretize(&data, &disc).unwrap().data;
    let mixed = composed_check(&clf, &d);

    let schema = d.schema.clone().with_correlation("x2", "x1").unwrap();
    let d = d.with_schema(schema).unwrap();
    ccfg.mode = InputMode::Discretized;
    let clf = Classifier::train(&d, None, &ccfg, Exec::Sequential).unwrap();
    vec![
        ("mixed inputs", mixed),
        ("discretized inputs", composed_check(&clf, &d)),
    ]
}

// ---- sampling ----

static ONE_BLOCK: [usize; 1] = [3];

/// Argmax of a relaxed sample over one three-level block.
pub fn hard_gumbel_sample(p: &[f64], noise: &[f64], tau: f64) -> usize {
    let mut t = Tape::new();
    let lp = t.leaf(p.iter().map(|q| q.ln()).collect());
    let y = t.gumbel_softmax(lp, noise, tau, &ONE_BLOCK).unwrap();
    argmax(t.value(y))
}

pub fn chi_square_p_value(counts: &[usize], p: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(p)
        .map(|(&c, &q)| {
            let e = q * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((p.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

// ---- desiderata ----

pub fn brute_sparsity(origin: &[usize], samples: &[Vec<usize>]) -> f64 {
    let mut same = 0;
    for s in samples {
        for j in 0..origin.len() {
            if s[j] == origin[j] {
                same += 1;
            }
        }
    }
    100.0 * same as f64 / (samples.len() * origin.len()) as f64
}

pub fn brute_diversity(samples: &[Vec<usize>]) -> f64 {
    let (m, n) = (samples.len(), samples[0].len());
    let mut diff = 0;
    let mut pairs = 0;
    for i in 0..m {
        for j in 0..m {
            if i < j {
                pairs += 1;
                diff += samples[i]
                    .iter()
                    .zip(&samples[j])
                    .filter(|(a, b)| a != b)
                    .count();
            }
        }
    }
    100.0 * diff as f64 / (pairs * n) as f64
}

pub fn brute_validity(valid: &[bool]) -> f64 {
    100.0 * valid.iter().filter(|&&b| b).count() as f64 / valid.len() as f64
}

// ---- privacy ----

/// q1, q2 are quasi-identifiers, s is sensitive, o is neither.
pub fn privacy_schema() -> DatasetSchema {
    DatasetSchema::new(
        "y",
        vec![
            FeatureSpec::categorical("q1", &["a", "b", "c"]).quasi_identifier(),
            FeatureSpec::categorical("o", &["0", "1", "2", "3"]),
            FeatureSpec::categorical("q2", &["x", "y"]).quasi_identifier(),
            FeatureSpec::categorical("s", &["lo", "mid", "hi"]).sensitive(),
        ],
    )
    .unwrap()
}

pub const QI: [usize; 2] = [0, 2];
pub const S: usize = 3;

pub fn same_qi(a: &Record, b: &Record) -> bool {
    QI.iter().all(|&i| a.levels[i] == b.levels[i])
}

/// Size of each record's class.
fn class_sizes(records: &[Record]) -> Vec<usize> {
    records
        .iter()
        .map(|a| records.iter().filter(|b| same_qi(a, b)).count())
        .collect()
}

/// Records that are the first member of their class.
fn representatives(records: &[Record]) -> Vec<usize> {
    (0..records.len())
        .filter(|&i| (0..i).all(|j| !same_qi(&records[i], &records[j])))
        .collect()
}

pub fn brute_one_anonymity(records: &[Record]) -> f64 {
    let sizes = class_sizes(records);
    let reps = representatives(records);
    let singles = reps.iter().filter(|&&i| sizes[i] == 1).count();
    100.0 * singles as f64 / reps.len() as f64
}

pub fn brute_one_diversity(records: &[Record]) -> f64 {
    let reps = representatives(records);
    let bad = reps
        .iter()
        .filter(|&&i| {
            records
                .iter()
                .filter(|b| same_qi(&records[i], b))
                .all(|b| b.levels[S] == records[i].levels[S])
        })
        .count();
    100.0 * bad as f64 / reps.len() as f64
}

pub fn brute_one_map(records: &[Record], attack: &[Vec<usize>]) -> MapOutcome {
    let matches: Vec<usize> = records
        .iter()
        .map(|r| {
            attack
                .iter()
                .filter(|a| a[0] == r.levels[QI[0]] && a[1] == r.levels[QI[1]])
                .count()
        })
        .collect();
    if matches.iter().all(|&m| m == 0) {
        return MapOutcome::Unverifiable;
    }
    let unique = matches.iter().filter(|&&m| m == 1).count();
    MapOutcome::Measured {
        percent: 100.0 * unique as f64 / records.len() as f64,
    }
}

/// Kept record indices and mean per-input validity retention.
pub fn brute_filter(records: &[Record], k: usize) -> (Vec<usize>, f64) {
    let sizes = class_sizes(records);
    let kept: Vec<usize> = (0..records.len()).filter(|&i| sizes[i] >= k).collect();
    let mut inputs: Vec<usize> = records
        .iter()
        .filter(|r| r.valid)
        .map(|r| r.input_id)
        .collect();
    inputs.sort_unstable();
    inputs.dedup();
    let mut total = 0.0;
    for &id in &inputs {
        let valid: Vec<usize> = (0..records.len())
            .filter(|&i| records[i].valid && records[i].input_id == id)
            .collect();
        let survived = valid.iter().filter(|i| kept.contains(i)).count();
        total += 100.0 * survived as f64 / valid.len() as f64;
    }
    let retention = if inputs.is_empty() {
        0.0
    } else {
        total / inputs.len() as f64
    };
    (kept, retention)
}

pub fn record(input_id: usize, levels: [usize; 4], valid: bool) -> Record {
    Record {
        input_id,
        levels: levels.to_vec(),
        label: 1,
        valid,
    }
}

/// Fixture `i`: a handful of written-out cases, then seeded random tables
/// whose level ranges shrink so that classes collide more often.
pub fn privacy_fixture(i: u64) -> (Vec<Record>, Vec<Vec<usize>>) {
    match i {
        0 => (
            // classes: (a,x)x3 {lo,lo,hi}, (b,y)x1, (c,x)x2 {mid,mid}, (a,y)x1, (b,x)x1
            vec![
                record(0, [0, 0, 0, 0], true),
                record(0, [0, 1, 0, 0], true),
                record(1, [0, 3, 0, 2], false),
                record(1, [1, 0, 1, 1], true),
                record(2, [2, 2, 0, 1], true),
                record(2, [2, 1, 0, 1], true),
                record(3, [0, 0, 1, 0], false),
                record(3, [1, 2, 0, 2], true),
            ],
            vec![vec![0, 0], vec![1, 1], vec![2, 0], vec![2, 0]],
        ),
        1 => (
            (0..10)
                .map(|j| record(j, [1, j % 4, 1, j % 3], true))
                .collect(),
            vec![vec![1, 1]],
        ),
        2 => (
            (0..6)
                .map(|j| record(j, [j % 3, 0, j / 3, 0], j % 2 == 0))
                .collect(),
            vec![vec![2, 2]],
        ),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(i);
            let n = rng.random_range(1..=50);
            let (q1, q2) = (rng.random_range(1..=3), rng.random_range(1..=2));
            let records = (0..n)
                .map(|_| {
                    record(
                        rng.random_range(0..8),
                        [
                            rng.random_range(0..q1),
                            rng.random_range(0..4),
                            rng.random_range(0..q2),
                            rng.random_range(0..3),
                        ],
                        rng.random_bool(0.7),
                    )
                })
                .collect();
            let attack = (0..rng.random_range(0..20))
                .map(|_| vec![rng.random_range(0..3), rng.random_range(0..2)])
                .collect();
            (records, attack)
        }
    }
}
