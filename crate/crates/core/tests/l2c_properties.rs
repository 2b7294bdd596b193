use l2c_core::blackbox::{Classifier, ClassifierConfig};
use l2c_core::exec::Exec;
use l2c_core::l2c::{classifier_hash, satisfies_unary, GenerateConfig, L2cConfig, L2cModel};
use l2c_core::synthetic::synthetic_dataset;
use l2c_core::tabular::{
    discretize, encode_levels, row_levels, Dataset, Discretizer, DiscretizerConfig,
};
use l2c_core::Error;

struct Fixture {
    data: Dataset,
    clf: Classifier,
}

fn fixture(n: usize, seed: u64) -> Fixture {
    let raw = synthetic_dataset(n, seed).unwrap();
    let clf = Classifier::train(
        &raw,
        None,
        &ClassifierConfig::logistic(seed),
        Exec::Sequential,
    )
    .unwrap();
    let labels = clf.predict_dataset(&raw).unwrap();
    let disc = Discretizer::fit(&raw, &labels, &DiscretizerConfig::default()).unwrap();
    let data = discretize(&raw, &disc).unwrap().data;
    Fixture { data, clf }
}

fn small_config(seed: u64) -> L2cConfig {
    L2cConfig {
        generator_hidden: 16,
        selector_hidden: 16,
        epochs: 20,
        lr: 1e-2,
        batch_size: 32,
        seed,
        ..L2cConfig::default()
    }
}

fn one_hot(model: &L2cModel, data: &Dataset, r: usize) -> Vec<f64> {
    let (levels, _) = row_levels(&model.schema, &data.rows[r]).unwrap();
    encode_levels(&levels, &model.schema).unwrap()
}

#[test]
fn zero_output_layers_give_uniform_and_half() {
    let f = fixture(100, 1);
    let mut model = L2cModel::new(&f.data.schema, &small_config(0)).unwrap();
    let last = *model.generator.last().unwrap();
    last.zero(&mut model.params);
    let last = *model.selector.last().unwrap();
    last.zero(&mut model.params);
    let z = one_hot(&model, &f.data, 0);
    let p = model.perturbation_distribution(&z).unwrap();
    let mut o = 0;
    for &c in &model.blocks {
        for q in &p[o..o + c] {
            assert!((q - 1.0 / c as f64).abs() < 1e-12);
        }
        o += c;
    }
    for pi in model.selection_distribution(&z).unwrap() {
        assert!((pi - 0.5).abs() < 1e-12);
    }
}

#[test]
fn cost_scales_selection_probability() {
    let f = fixture(100, 2);
    let mut schema = f.data.schema.clone();
    let mutable = schema.mutable_indices();
    schema.features[mutable[0]] = schema.features[mutable[0]].clone().with_cost(1.0);
    schema.features[mutable[1]] = schema.features[mutable[1]].clone().with_cost(0.5);
    let mut model = L2cModel::new(&schema, &small_config(0)).unwrap();
    let last = *model.selector.last().unwrap();
    last.zero(&mut model.params);
    let z = one_hot(&model, &f.data, 0);
    let pi = model.selection_distribution(&z).unwrap();
    assert_eq!(pi[0], 0.0);
    assert!((pi[1] - 0.25).abs() < 1e-12);
    assert!((pi[2] - 0.5).abs() < 1e-12);
}

#[test]
fn generated_sets_respect_structure() {
    let f = fixture(300, 3);
    let mut model = L2cModel::new(&f.data.schema, &small_config(3)).unwrap();
    model.train(&f.data, &f.clf, Exec::default()).unwrap();
    let cfg = GenerateConfig {
        num_samples: 20,
        max_draws: 200,
        seed: 9,
        ..GenerateConfig::default()
    };
    let schema = &model.schema;
    for r in 0..20 {
        let set = model.generate(&f.clf, r, &f.data.rows[r], &cfg).unwrap();
        assert!(set.requested.windows(2).all(|w| w[0] < w[1]));
        assert!(set.requested.len() <= cfg.num_samples);
        for c in &set.samples {
            for (i, feat) in schema.features.iter().enumerate() {
                if !feat.mutable {
                    assert_eq!(c.row[i], set.origin_row[i]);
                    assert_eq!(c.levels[i], set.origin_levels[i]);
                }
            }
            // Unselected features keep their exact original value.
            for (k, &i) in model.mutable.iter().enumerate() {
                if !c.selected[k] {
                    assert_eq!(c.row[i], set.origin_row[i]);
                }
            }
            assert_eq!(
                c.predicted_label,
                f.clf.predict_row(schema, &c.row).unwrap()
            );
            assert_eq!(c.valid, c.predicted_label == set.target_label);
        }
    }
}

#[test]
fn constraint_filter_returns_only_feasible_draws() {
    let f = fixture(300, 4);
    let mut model = L2cModel::new(&f.data.schema, &small_config(4)).unwrap();
    model.train(&f.data, &f.clf, Exec::default()).unwrap();
    let cfg = GenerateConfig {
        num_samples: 20,
        max_draws: 300,
        constraint_filter: true,
        sparsity_filter: Some(50.0),
        seed: 5,
        ..GenerateConfig::default()
    };
    for r in 0..20 {
        let set = model.generate(&f.clf, r, &f.data.rows[r], &cfg).unwrap();
        for c in set.returned() {
            assert!(
                satisfies_unary(&model.schema, &set.origin_levels, &c.levels)
                    .iter()
                    .all(|&b| b)
            );
            let same = c
                .levels
                .iter()
                .zip(&set.origin_levels)
                .filter(|(a, b)| a == b)
                .count();
            assert!(same * 2 >= c.levels.len());
        }
    }
}

#[test]
fn selector_off_selects_everything() {
    let f = fixture(100, 5);
    let cfg = L2cConfig {
        selector: false,
        epochs: 2,
        ..small_config(5)
    };
    let mut model = L2cModel::new(&f.data.schema, &cfg).unwrap();
    let report = model.train(&f.data, &f.clf, Exec::Sequential).unwrap();
    assert!(report.history.iter().all(|e| e.l1 == 0.0));
    let set = model
        .generate(
            &f.clf,
            0,
            &f.data.rows[0],
            &GenerateConfig {
                num_samples: 5,
                max_draws: 64,
                ..Default::default()
            },
        )
        .unwrap();
    assert!(set.samples.iter().all(|c| c.selected.iter().all(|&s| s)));
}

#[test]
fn training_is_deterministic_across_executors() {
    let f = fixture(200, 6);
    let mut a = L2cModel::new(&f.data.schema, &small_config(6)).unwrap();
    let mut b = a.clone();
    let ra = a.train(&f.data, &f.clf, Exec::Sequential).unwrap();
    let rb = b.train(&f.data, &f.clf, Exec::default()).unwrap();
    assert_eq!(ra.history, rb.history);
    assert_eq!(a.params, b.params);

    let cfg = GenerateConfig {
        num_samples: 10,
        max_draws: 128,
        seed: 1,
        ..Default::default()
    };
    let ids: Vec<usize> = (0..f.data.len()).collect();
    let sa = a
        .generate_all(&f.clf, &f.data, &ids, &cfg, Exec::Sequential)
        .unwrap();
    let sb = b
        .generate_all(&f.clf, &f.data, &ids, &cfg, Exec::default())
        .unwrap();
    // Wall-clock time is the only field allowed to differ.
    assert_eq!(
        serde_json::to_string(&sa).unwrap(),
        serde_json::to_string(&sb).unwrap()
    );
}

#[test]
fn loss_decreases_with_training() {
    let f = fixture(300, 7);
    let cfg = L2cConfig {
        epochs: 40,
        ..small_config(7)
    };
    let mut model = L2cModel::new(&f.data.schema, &cfg).unwrap();
    let report = model.train(&f.data, &f.clf, Exec::default()).unwrap();
    let first = report.history[..5].iter().map(|e| e.loss).sum::<f64>();
    let last = report.history[35..].iter().map(|e| e.loss).sum::<f64>();
    assert!(last < first, "first {first} last {last}");
}

#[test]
fn sparsity_penalty_lowers_selection_mass() {
    let f = fixture(300, 8);
    let mean_pi = |alpha: f64| {
        let cfg = L2cConfig {
            alpha,
            epochs: 10,
            ..small_config(8)
        };
        let mut model = L2cModel::new(&f.data.schema, &cfg).unwrap();
        model.train(&f.data, &f.clf, Exec::default()).unwrap();
        let mut total = 0.0;
        for r in 0..f.data.len() {
            total += model
                .selection_distribution(&one_hot(&model, &f.data, r))
                .unwrap()
                .iter()
                .sum::<f64>();
        }
        total / f.data.len() as f64
    };
    let (none, some) = (mean_pi(0.0), mean_pi(0.05));
    assert!(some < none, "alpha 0: {none}, alpha 0.05: {some}");
}

#[test]
fn checkpoint_round_trip() {
    let f = fixture(100, 9);
    let mut model = L2cModel::new(&f.data.schema, &small_config(9)).unwrap();
    model.train(&f.data, &f.clf, Exec::Sequential).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let hash = classifier_hash(&f.clf).unwrap();
    model.save(&path, &hash).unwrap();
    let (back, h) = L2cModel::load(&path).unwrap();
    assert_eq!(h, hash);
    // Optimizer moments are not persisted.
    assert_eq!(back.params.flat_values(), model.params.flat_values());
    assert_eq!(back.config, model.config);
    assert_eq!(back.schema, model.schema);

    // A schema edited after saving no longer matches its stored hash.
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("\"colour\"", "\"color\"", 1)).unwrap();
    assert!(matches!(
        L2cModel::load(&path),
        Err(Error::SchemaHash { .. })
    ));
}
