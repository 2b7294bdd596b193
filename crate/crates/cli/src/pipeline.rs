//! One function per pipeline stage. Artifacts live under the configured
//! output directory:
//!
//! ```text
//! config.json                      effective config
//! report.json, privacy.json        per-seed and mean summaries
//! timing.csv                       wall-clock log (not reproducible)
//! seed_<s>/classifier.json, blackbox.json
//! seed_<s>/discretizer.json
//! seed_<s>/l2c.json, loss.csv
//! seed_<s>/counterfactuals/input_<id>.{csv,json}
//! seed_<s>/inference_seconds.csv     per-input wall-clock (not reproducible)
//! seed_<s>/report.json, privacy.json
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use l2c_core::blackbox::{Classifier, InputMode};
use l2c_core::exec::Exec;
use l2c_core::l2c::{classifier_hash, CounterfactualSet, L2cModel};
use l2c_core::metrics::DesiderataReport;
use l2c_core::privacy::{load_attack_csv, released_records, MapOutcome, PrivacyReport};
use l2c_core::tabular::{discretize, load_csv, Dataset, DatasetSchema, Discretizer, Strategy};
use serde::Serialize;

use crate::config::{ExperimentConfig, LabelSource};

const EXEC: Exec = Exec::Parallel;
/// Per-input generation seconds, kept apart from the reproducible outputs.
const TIMES: &str = "inference_seconds.csv";

pub struct Pipeline {
    pub cfg: ExperimentConfig,
    schema: DatasetSchema,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if !path.exists() {
        bail!("{} not found; {hint}", path.display());
    }
    Ok(())
}

/// Everything a seed needs downstream of the black box.
struct Stage {
    disc: Discretizer,
    schema: DatasetSchema,
    clf: Classifier,
}

#[derive(Serialize)]
struct BlackboxReport {
    seed: u64,
    train_accuracy: f64,
    val_accuracy: Option<f64>,
    test_accuracy: f64,
}

#[derive(Serialize)]
struct Summary<T, M> {
    per_seed: BTreeMap<u64, T>,
    mean: M,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct PrivacyMean {
    one_anonymity: f64,
    one_anonymity_records: f64,
    one_diversity: BTreeMap<String, f64>,
    /// Mean over seeds whose attack match was measurable.
    one_map: Option<f64>,
    k_validity_retention: Option<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        let schema = DatasetSchema::load(&cfg.schema)
            .with_context(|| format!("cannot load schema {}", cfg.schema.display()))?;
        fs::create_dir_all(&cfg.output_dir)
            .with_context(|| format!("cannot create {}", cfg.output_dir.display()))?;
        write_json(&cfg.output_dir.join("config.json"), &cfg)?;
        Ok(Pipeline { cfg, schema })
    }

    fn load(&self, path: &Path) -> Result<Dataset> {
        load_csv(path, &self.schema).with_context(|| format!("cannot load {}", path.display()))
    }

    fn seed_dir(&self, seed: u64) -> Result<PathBuf> {
        let d = self.cfg.seed_dir(seed);
        fs::create_dir_all(&d).with_context(|| format!("cannot create {}", d.display()))?;
        Ok(d)
    }

    fn log_time(&self, stage: &str, seed: u64, step: &str, seconds: f64) -> Result<()> {
        let path = self.cfg.output_dir.join("timing.csv");
        let fresh = !path.exists();
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .with_context(|| format!("cannot open {}", path.display()))?;
        if fresh {
            writeln!(f, "stage,seed,step,seconds")?;
        }
        writeln!(f, "{stage},{seed},{step},{seconds:.6}")?;
        Ok(())
    }

    fn classifier_path(&self, seed: u64) -> PathBuf {
        self.cfg.seed_dir(seed).join("classifier.json")
    }

    fn discretizer_path(&self, seed: u64) -> PathBuf {
        self.cfg.seed_dir(seed).join("discretizer.json")
    }

    fn load_discretizer(&self, seed: u64) -> Result<(Discretizer, DatasetSchema)> {
        let path = self.discretizer_path(seed);
        require(&path, "run `l2c discretize` first")?;
        let disc = Discretizer::load(&path)?;
        let schema = disc.apply_to_schema(&self.schema)?;
        Ok((disc, schema))
    }

    fn discretized(&self, data: &Dataset, disc: &Discretizer) -> Result<Dataset> {
        Ok(discretize(data, disc)?.data)
    }

    /// Classifier for `seed`, checked against the schema it claims to have
    /// been fitted on.
    fn load_classifier(
        &self,
        seed: u64,
        discretized: Option<&DatasetSchema>,
    ) -> Result<Classifier> {
        let path = self.classifier_path(seed);
        require(&path, "run `l2c train-blackbox` first")?;
        let clf = Classifier::load(&path)?;
        let expected = match clf.layout.mode {
            InputMode::Mixed => self.schema.hash(),
            InputMode::Discretized => match discretized {
                Some(s) => s.hash(),
                None => bail!(
                    "{} takes discretized inputs; no discretizer given",
                    path.display()
                ),
            },
        };
        if clf.schema_hash != expected {
            bail!(
                "schema hash mismatch: {} was trained on schema {}, current schema is {}",
                path.display(),
                clf.schema_hash,
                expected
            );
        }
        Ok(clf)
    }

    fn stage(&self, seed: u64) -> Result<Stage> {
        let (disc, schema) = self.load_discretizer(seed)?;
        let clf = self.load_classifier(seed, Some(&schema))?;
        Ok(Stage { disc, schema, clf })
    }

    fn load_model(&self, seed: u64, stage: &Stage) -> Result<L2cModel> {
        let path = self.cfg.seed_dir(seed).join("l2c.json");
        require(&path, "run `l2c train-l2c` first")?;
        let (model, clf_hash) = L2cModel::load(&path)?;
        if model.schema.hash() != stage.schema.hash() {
            bail!(
                "schema hash mismatch: {} was trained on schema {}, current discretized schema is {}",
                path.display(),
                model.schema.hash(),
                stage.schema.hash()
            );
        }
        if clf_hash != classifier_hash(&stage.clf)? {
            bail!(
                "{} was trained against a different classifier",
                path.display()
            );
        }
        Ok(model)
    }

    pub fn train_blackbox(&self) -> Result<()> {
        let train = self.load(&self.cfg.train)?;
        let val = self.cfg.val.as_ref().map(|p| self.load(p)).transpose()?;
        let test = self.load(&self.cfg.test)?;
        for &seed in &self.cfg.seeds {
            let dir = self.seed_dir(seed)?;
            let mut cc = self.cfg.classifier.clone();
            cc.seed = seed;
            let (train, val, test) = match cc.mode {
                InputMode::Mixed => (train.clone(), val.clone(), test.clone()),
                InputMode::Discretized => {
                    let (disc, _) = self.load_discretizer(seed)?;
                    (
                        self.discretized(&train, &disc)?,
                        val.as_ref()
                            .map(|v| self.discretized(v, &disc))
                            .transpose()?,
                        self.discretized(&test, &disc)?,
                    )
                }
            };
            let start = Instant::now();
            let clf = Classifier::train(&train, val.as_ref(), &cc, EXEC)?;
            self.log_time(
                "train_blackbox",
                seed,
                "total",
                start.elapsed().as_secs_f64(),
            )?;
            clf.save(dir.join("classifier.json"))?;
            let report = BlackboxReport {
                seed,
                train_accuracy: 100.0 * clf.train_accuracy,
                val_accuracy: clf.val_accuracy.map(|a| 100.0 * a),
                test_accuracy: 100.0 * clf.evaluate(&test)?,
            };
            write_json(&dir.join("blackbox.json"), &report)?;
            println!(
                "seed {seed}: black-box accuracy train {:.2}%, test {:.2}%",
                report.train_accuracy, report.test_accuracy
            );
        }
        Ok(())
    }

    pub fn discretize(&self) -> Result<()> {
        let train = self.load(&self.cfg.train)?;
        let supervised = !matches!(
            self.cfg.discretizer.strategy,
            Strategy::EqualFrequency | Strategy::Manual
        );
        for &seed in &self.cfg.seeds {
            let dir = self.seed_dir(seed)?;
            let labels = if supervised && self.cfg.discretizer_labels == LabelSource::Predicted {
                let clf = self.load_classifier(seed, None).context(
                    "supervised discretizers fit on black-box predictions; train a mixed-input black box first \
                     or set discretizer_labels to \"observed\"",
                )?;
                clf.predict_dataset(&train)?
            } else {
                train.labels.clone()
            };
            let disc = Discretizer::fit(&train, &labels, &self.cfg.discretizer)?;
            disc.save(dir.join("discretizer.json"))?;
            for (name, edges) in &disc.edges {
                println!("seed {seed}: {name} edges {edges:?}");
            }
        }
        Ok(())
    }

    pub fn train_l2c(&self) -> Result<()> {
        let train = self.load(&self.cfg.train)?;
        for &seed in &self.cfg.seeds {
            let dir = self.seed_dir(seed)?;
            let stage = self.stage(seed)?;
            let data = self.discretized(&train, &stage.disc)?;
            let mut lc = self.cfg.l2c.clone();
            lc.seed = seed;
            let mut model = L2cModel::new(&stage.schema, &lc)?;
            let report = model.train(&data, &stage.clf, EXEC)?;
            model.save(dir.join("l2c.json"), &classifier_hash(&stage.clf)?)?;
            let mut loss = String::from("epoch,loss,cross_entropy,l1\n");
            for e in &report.history {
                loss.push_str(&format!(
                    "{},{},{},{}\n",
                    e.epoch, e.loss, e.cross_entropy, e.l1
                ));
            }
            fs::write(dir.join("loss.csv"), loss)?;
            for (e, s) in report.epoch_seconds.iter().enumerate() {
                self.log_time("train_l2c", seed, &format!("epoch_{}", e + 1), *s)?;
            }
            if let Some(last) = report.history.last() {
                println!(
                    "seed {seed}: final loss {:.5} (cross-entropy {:.5})",
                    last.loss, last.cross_entropy
                );
            }
        }
        Ok(())
    }

    pub fn generate(&self, input: Option<&Path>) -> Result<()> {
        let raw = self.load(input.unwrap_or(&self.cfg.test))?;
        let raw = match self.cfg.num_inputs {
            Some(n) if n < raw.len() => raw.subset(&(0..n).collect::<Vec<_>>()),
            _ => raw,
        };
        let ids: Vec<usize> = (0..raw.len()).collect();
        for &seed in &self.cfg.seeds {
            let dir = self.seed_dir(seed)?.join("counterfactuals");
            let stage = self.stage(seed)?;
            let model = self.load_model(seed, &stage)?;
            let data = self.discretized(&raw, &stage.disc)?;
            let mut gc = self.cfg.generation.clone();
            gc.seed = seed;
            let start = Instant::now();
            let sets = model.generate_all(&stage.clf, &data, &ids, &gc, EXEC)?;
            self.log_time("generate", seed, "total", start.elapsed().as_secs_f64())?;
            if dir.exists() {
                fs::remove_dir_all(&dir)?;
            }
            fs::create_dir_all(&dir)?;
            let mut times = String::from("input_id,seconds\n");
            for s in &sets {
                s.save(&model.schema, &dir)?;
                times.push_str(&format!("{},{:.6}\n", s.input_id, s.elapsed_seconds));
            }
            fs::write(self.cfg.seed_dir(seed).join(TIMES), times)?;
            let covered = sets.iter().filter(|s| s.covered()).count();
            println!(
                "seed {seed}: {} inputs, {covered} covered -> {}",
                sets.len(),
                dir.display()
            );
        }
        Ok(())
    }

    pub fn evaluate(&self, dir: Option<&Path>) -> Result<()> {
        if let Some(dir) = dir {
            let sets = load_nonempty(dir)?;
            let seed = self.cfg.seeds[0];
            let stage = self.stage(seed)?;
            let model = self.load_model(seed, &stage)?;
            let report = DesiderataReport::evaluate(
                &sets,
                &model.schema,
                &model.active_rule_features(&stage.clf)?,
                EXEC,
            )?;
            println!("{report}");
            println!("{}", report.to_json()?);
            return Ok(());
        }
        let mut per_seed = BTreeMap::new();
        for &seed in &self.cfg.seeds {
            let sdir = self.cfg.seed_dir(seed);
            let mut sets = load_nonempty(&sdir.join("counterfactuals"))?;
            attach_times(&mut sets, &sdir.join(TIMES));
            let stage = self.stage(seed)?;
            let model = self.load_model(seed, &stage)?;
            let report = DesiderataReport::evaluate(
                &sets,
                &model.schema,
                &model.active_rule_features(&stage.clf)?,
                EXEC,
            )?;
            write_json(&sdir.join("report.json"), &report)?;
            self.log_time("inference", seed, "total", report.inference_time_seconds)?;
            println!("seed {seed}\n{report}\n");
            per_seed.insert(seed, report);
        }
        let reports: Vec<DesiderataReport> = per_seed.values().cloned().collect();
        let mean = DesiderataReport::mean_of(&reports).expect("at least one seed");
        println!("mean over {} seed(s)\n{mean}", reports.len());
        write_json(
            &self.cfg.output_dir.join("report.json"),
            &Summary { per_seed, mean },
        )
    }

    pub fn privacy_audit(&self, attack: Option<&Path>, k: Option<usize>) -> Result<()> {
        let attack = attack
            .map(Path::to_path_buf)
            .or_else(|| self.cfg.attack.clone());
        let k = k.or(self.cfg.k);
        let mut per_seed = BTreeMap::new();
        for &seed in &self.cfg.seeds {
            let sdir = self.cfg.seed_dir(seed);
            let sets = load_nonempty(&sdir.join("counterfactuals"))?;
            let (_, schema) = self.load_discretizer(seed)?;
            let tuples = attack
                .as_ref()
                .map(|p| {
                    load_attack_csv(p, &schema)
                        .with_context(|| format!("attack set {}", p.display()))
                })
                .transpose()?;
            let records = released_records(&sets);
            let report = PrivacyReport::audit(&records, &schema, tuples.as_deref(), k)?;
            write_json(&sdir.join("privacy.json"), &report)?;
            println!(
                "seed {seed}: {} records in {} classes, 1-anonymity {:.2}%",
                report.num_records, report.num_classes, report.one_anonymity
            );
            per_seed.insert(seed, report);
        }
        let reports: Vec<&PrivacyReport> = per_seed.values().collect();
        let collect = |f: &dyn Fn(&PrivacyReport) -> Option<f64>| {
            reports.iter().filter_map(|r| f(r)).collect::<Vec<_>>()
        };
        let mut one_diversity = BTreeMap::new();
        for name in reports[0].one_diversity.keys() {
            let v = collect(&|r| r.one_diversity.get(name).copied());
            one_diversity.insert(name.clone(), mean(&v).unwrap_or(0.0));
        }
        let mean_report = PrivacyMean {
            one_anonymity: mean(&collect(&|r| Some(r.one_anonymity))).unwrap_or(0.0),
            one_anonymity_records: mean(&collect(&|r| Some(r.one_anonymity_records)))
                .unwrap_or(0.0),
            one_diversity,
            one_map: mean(&collect(&|r| match r.one_map {
                Some(MapOutcome::Measured { percent }) => Some(percent),
                _ => None,
            })),
            k_validity_retention: mean(&collect(&|r| {
                r.k_anonymity.as_ref().map(|k| k.validity_retention)
            })),
        };
        write_json(
            &self.cfg.output_dir.join("privacy.json"),
            &Summary {
                per_seed,
                mean: mean_report,
            },
        )
    }

    /// Every stage in dependency order.
    pub fn run(&self) -> Result<()> {
        if self.cfg.classifier.mode == InputMode::Discretized {
            self.discretize()?;
            self.train_blackbox()?;
        } else {
            self.train_blackbox()?;
            self.discretize()?;
        }
        self.train_l2c()?;
        self.generate(None)?;
        self.evaluate(None)?;
        if self.cfg.attack.is_some() || self.cfg.k.is_some() {
            self.privacy_audit(None, None)?;
        }
        Ok(())
    }
}

/// Counterfactual sets saved in `dir`, in input order.
pub fn load_sets(dir: &Path) -> Result<Vec<CounterfactualSet>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot read counterfactual directory {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| {
        p.extension().is_some_and(|e| e == "json")
            && p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("input_"))
    });
    paths.sort();
    paths
        .iter()
        .map(|p| CounterfactualSet::load(p).with_context(|| format!("cannot load {}", p.display())))
        .collect()
}

/// Fill in wall-clock times recorded at generation, when available.
fn attach_times(sets: &mut [CounterfactualSet], path: &Path) {
    let Ok(text) = fs::read_to_string(path) else {
        return;
    };
    let times: BTreeMap<usize, f64> = text
        .lines()
        .skip(1)
        .filter_map(|l| {
            let (id, secs) = l.split_once(',')?;
            Some((id.parse().ok()?, secs.parse().ok()?))
        })
        .collect();
    for s in sets {
        if let Some(&t) = times.get(&s.input_id) {
            s.elapsed_seconds = t;
        }
    }
}

fn load_nonempty(dir: &Path) -> Result<Vec<CounterfactualSet>> {
    let sets = load_sets(dir)?;
    if sets.is_empty() {
        bail!("no counterfactual sets found in {}", dir.display());
    }
    Ok(sets)
}
