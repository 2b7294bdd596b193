use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use l2c_core::blackbox::ClassifierConfig;
use l2c_core::l2c::{GenerateConfig, L2cConfig};
use l2c_core::tabular::DiscretizerConfig;
use serde::{Deserialize, Serialize};

/// Labels used to fit the supervised discretizers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// Predictions of the (mixed-input) black box for the same seed.
    #[default]
    Predicted,
    /// The dataset's own labels.
    Observed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: PathBuf,
    pub train: PathBuf,
    pub val: Option<PathBuf>,
    pub test: PathBuf,
    pub discretizer: DiscretizerConfig,
    pub discretizer_labels: LabelSource,
    /// Its `seed` is replaced by each experiment seed.
    pub classifier: ClassifierConfig,
    /// Its `seed` is replaced by each experiment seed.
    pub l2c: L2cConfig,
    /// Its `seed` is replaced by each experiment seed.
    pub generation: GenerateConfig,
    /// Explain only the first rows of the input set.
    pub num_inputs: Option<usize>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub attack: Option<PathBuf>,
    pub k: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema: PathBuf::new(),
            train: PathBuf::new(),
            val: None,
            test: PathBuf::new(),
            discretizer: DiscretizerConfig::default(),
            discretizer_labels: LabelSource::default(),
            classifier: ClassifierConfig::default(),
            l2c: L2cConfig::default(),
            generation: GenerateConfig::default(),
            num_inputs: None,
            seeds: vec![0],
            output_dir: PathBuf::from("out"),
            attack: None,
            k: None,
        }
    }
}

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Experiment config (JSON)
    #[arg(long)]
    pub config: PathBuf,
    /// Run a single seed instead of the configured list
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub num_samples: Option<usize>,
    /// Per-input generation budget in seconds
    #[arg(long)]
    pub budget: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// `on` or `off`
    #[arg(long, value_parser = parse_switch)]
    pub selector: Option<bool>,
    /// Minimum per-sample sparsity (percent) to return a draw
    #[arg(long)]
    pub sparsity_filter: Option<f64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

fn parse_switch(s: &str) -> Result<bool, String> {
    match s {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        _ => Err(format!("expected on or off, got {s:?}")),
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() || p.as_os_str().is_empty() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    /// Read a config, resolving relative paths against its directory and
    /// applying overrides.
    pub fn load(o: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(&o.config)
            .with_context(|| format!("cannot read config {}", o.config.display()))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .with_context(|| format!("malformed config {}", o.config.display()))?;
        let base = o.config.parent().unwrap_or(Path::new("."));
        cfg.schema = resolve(base, &cfg.schema);
        cfg.train = resolve(base, &cfg.train);
        cfg.test = resolve(base, &cfg.test);
        cfg.val = cfg.val.map(|p| resolve(base, &p));
        cfg.attack = cfg.attack.map(|p| resolve(base, &p));
        cfg.output_dir = resolve(base, &cfg.output_dir);

        if let Some(s) = o.seed {
            cfg.seeds = vec![s];
        }
        if let Some(n) = o.num_samples {
            cfg.generation.num_samples = n;
        }
        if let Some(b) = o.budget {
            cfg.generation.budget_seconds = b;
        }
        if let Some(a) = o.alpha {
            cfg.l2c.alpha = a;
        }
        if let Some(t) = o.tau {
            cfg.l2c.tau = t;
        }
        if let Some(s) = o.selector {
            cfg.l2c.selector = s;
        }
        if let Some(f) = o.sparsity_filter {
            cfg.generation.sparsity_filter = Some(f);
        }
        if let Some(d) = &o.output_dir {
            cfg.output_dir = d.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("config lists no seeds");
        }
        self.l2c.validate()?;
        let required = [
            ("schema", &self.schema),
            ("train", &self.train),
            ("test", &self.test),
        ];
        for (name, p) in required {
            if p.as_os_str().is_empty() {
                bail!("config is missing the {name} path");
            }
        }
        let optional = [self.val.as_ref(), self.attack.as_ref()];
        for p in required
            .iter()
            .map(|(_, p)| *p)
            .chain(optional.into_iter().flatten())
        {
            if !p.exists() {
                bail!("file not found: {}", p.display());
            }
        }
        Ok(())
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.output_dir.join(format!("seed_{seed}"))
    }
}
