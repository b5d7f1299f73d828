//! Pipeline configuration: one TOML file drives every subcommand.
//!
//! All sections and fields have defaults, so a config file only needs the
//! values it wants to change. `--override key.path=value` edits the parsed
//! TOML before deserialization and `--seed N` rewrites both `synth.seed`
//! and `train.seed`, so a whole pipeline can be re-keyed from the command
//! line without touching the file.

use std::path::{Path, PathBuf};

use acq_core::datagen::SynthConfig;
use acq_core::learning::{LossSpec, TrainConfig};
use acq_core::predictor::Variant;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Current config schema version; bump on incompatible layout changes.
pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub paths: PathsSection,
    pub synth: SynthSection,
    pub tree: TreeSection,
    pub binning: BinningSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub loss: LossSection,
    pub reward: RewardSection,
    pub allocator: AllocatorSection,
    pub evaluate: EvaluateSection,
    pub bench: BenchSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            version: CONFIG_VERSION,
            paths: PathsSection::default(),
            synth: SynthSection::default(),
            tree: TreeSection::default(),
            binning: BinningSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            loss: LossSection::default(),
            reward: RewardSection::default(),
            allocator: AllocatorSection::default(),
            evaluate: EvaluateSection::default(),
            bench: BenchSection::default(),
        }
    }
}

/// Where each artifact is read from and written to. Relative paths are
/// resolved against the process working directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub dataset: PathBuf,
    pub curves: PathBuf,
    pub tree: PathBuf,
    pub model: PathBuf,
    pub train_report: PathBuf,
    pub pvalues: PathBuf,
    pub instance: PathBuf,
    pub plan: PathBuf,
    pub report: PathBuf,
    pub bench_report: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        let out = Path::new("out");
        PathsSection {
            dataset: out.join("dataset.txt"),
            curves: out.join("curves.txt"),
            tree: out.join("tree.txt"),
            model: out.join("model.txt"),
            train_report: out.join("train_report.json"),
            pvalues: out.join("pvalues.txt"),
            instance: out.join("instance.txt"),
            plan: out.join("plan.txt"),
            report: out.join("report.json"),
            bench_report: out.join("bench_report.json"),
        }
    }
}

/// Mirrors [`SynthConfig`]; kept separate so the file format stays stable
/// even if the library struct grows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_accounts: usize,
    pub photos_per_account: usize,
    pub zero_rate: f64,
    pub tail_mu: f64,
    pub tail_sigma: f64,
    pub curve_scale: f64,
    pub curve_tau: f64,
    pub noise_std: f64,
    pub seed: u64,
    pub feature_dim: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        let c = SynthConfig::default();
        SynthSection {
            n_accounts: c.n_accounts,
            photos_per_account: c.photos_per_account,
            zero_rate: c.zero_rate,
            tail_mu: c.tail_mu,
            tail_sigma: c.tail_sigma,
            curve_scale: c.curve_scale,
            curve_tau: c.curve_tau,
            noise_std: c.noise_std,
            seed: c.seed,
            feature_dim: c.feature_dim,
        }
    }
}

impl SynthSection {
    pub fn to_synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_accounts: self.n_accounts,
            photos_per_account: self.photos_per_account,
            zero_rate: self.zero_rate,
            tail_mu: self.tail_mu,
            tail_sigma: self.tail_sigma,
            curve_scale: self.curve_scale,
            curve_tau: self.curve_tau,
            noise_std: self.noise_std,
            seed: self.seed,
            feature_dim: self.feature_dim,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeSection {
    /// Number of leaves carved out of the positive cost range; the zero
    /// spike always gets its own leaf on top of these.
    pub positive_leaves: usize,
}

impl Default for TreeSection {
    fn default() -> Self {
        TreeSection { positive_leaves: 6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinningSection {
    /// Ascending creative-count bin edges; bin i covers (b[i], b[i+1]]
    /// with the first bin closed on the left.
    pub boundaries: Vec<u32>,
}

impl Default for BinningSection {
    fn default() -> Self {
        BinningSection {
            boundaries: vec![1, 2, 3, 5, 8, 15, 30, 60, 120, 200],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Output-head composition: "control", "monotonic", or "submodular".
    pub variant: String,
    pub embedding_dim: usize,
    pub hash_buckets: usize,
    pub hidden: Vec<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            variant: Variant::Monotonic.as_str().to_string(),
            embedding_dim: 8,
            hash_buckets: 10_009,
            hidden: vec![64, 64],
        }
    }
}

impl ModelSection {
    pub fn parse_variant(&self) -> Result<Variant, CliError> {
        Variant::parse(&self.variant).ok_or_else(|| {
            CliError::Config(format!(
                "model.variant must be control, monotonic, or submodular (got {:?})",
                self.variant
            ))
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub dropout_rate: f64,
    pub eval_batch_size: usize,
    pub clip_norm: f64,
    /// Fraction of rows held out for the validation metrics.
    pub holdout_fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let c = TrainConfig::default();
        TrainSection {
            epochs: 16,
            batch_size: c.batch_size,
            learning_rate: 1e-2,
            seed: c.seed,
            dropout_rate: c.dropout_rate,
            eval_batch_size: c.eval_batch_size,
            clip_norm: c.clip_norm,
            holdout_fraction: 0.2,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.seed,
            dropout_rate: self.dropout_rate,
            eval_batch_size: self.eval_batch_size,
            clip_norm: self.clip_norm,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub lipschitz_weight: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        let s = LossSpec::default();
        LossSection {
            alpha1: s.alpha1,
            alpha2: s.alpha2,
            alpha3: s.alpha3,
            lipschitz_weight: s.lipschitz_weight,
        }
    }
}

impl LossSection {
    pub fn to_loss_spec(&self) -> LossSpec {
        LossSpec {
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            alpha3: self.alpha3,
            lipschitz_weight: self.lipschitz_weight,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    /// Weight of the exploration bonus added to predicted values when
    /// assembling allocation rewards. With no play history the bonus is
    /// uniform across items, so the default 0 and any constant weight
    /// produce the same plan.
    pub explore_weight: f64,
}

impl Default for RewardSection {
    fn default() -> Self {
        RewardSection {
            explore_weight: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllocatorSection {
    /// Bisection stopping width on the dual price.
    pub tolerance: f64,
    /// Capacity as a fraction of the instance's maximum possible usage.
    pub capacity_fraction: f64,
    /// Item fraction used to estimate the dual price; 1 solves on the
    /// full instance.
    pub sample_fraction: f64,
    /// Seed for the item sample when `sample_fraction < 1`.
    pub sample_seed: u64,
}

impl Default for AllocatorSection {
    fn default() -> Self {
        AllocatorSection {
            tolerance: 1e-9,
            capacity_fraction: 0.15,
            sample_fraction: 1.0,
            sample_seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    /// Number of synthetic evaluation days; day d draws fresh data with
    /// seed `synth.seed + day_seed_stride * d`.
    pub days: usize,
    pub day_seed_stride: u64,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            days: 3,
            day_seed_stride: 1000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    /// Instance sizes (item counts) to time.
    pub sizes: Vec<usize>,
    /// Target absolute sample size: each solve samples
    /// `min(1, sample_target / n)` of the items for the dual price.
    pub sample_target: usize,
    pub max_candidates: usize,
    pub capacity_fraction: f64,
    pub seed: u64,
    /// Sample fraction used by the accuracy check against the full solve.
    pub check_fraction: f64,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            sizes: vec![100_000, 200_000, 500_000],
            sample_target: 100_000,
            max_candidates: 6,
            capacity_fraction: 0.3,
            seed: 99,
            check_fraction: 0.2,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "unsupported config version {} (expected {})",
                self.version, CONFIG_VERSION
            )));
        }
        if !(self.train.holdout_fraction >= 0.0 && self.train.holdout_fraction < 1.0) {
            return Err(CliError::Config(
                "train.holdout_fraction must lie in [0, 1)".into(),
            ));
        }
        if !(self.allocator.capacity_fraction > 0.0 && self.allocator.capacity_fraction <= 1.0) {
            return Err(CliError::Config(
                "allocator.capacity_fraction must lie in (0, 1]".into(),
            ));
        }
        if !(self.allocator.sample_fraction > 0.0 && self.allocator.sample_fraction <= 1.0) {
            return Err(CliError::Config(
                "allocator.sample_fraction must lie in (0, 1]".into(),
            ));
        }
        if self.evaluate.days == 0 {
            return Err(CliError::Config("evaluate.days must be positive".into()));
        }
        if self.bench.sizes.is_empty() || self.bench.sizes.contains(&0) {
            return Err(CliError::Config(
                "bench.sizes must be non-empty and positive".into(),
            ));
        }
        if self.bench.sample_target == 0 {
            return Err(CliError::Config(
                "bench.sample_target must be positive".into(),
            ));
        }
        if !(self.bench.check_fraction > 0.0 && self.bench.check_fraction <= 1.0) {
            return Err(CliError::Config(
                "bench.check_fraction must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Parse one `key.path=value` override. The value is parsed as a TOML
/// literal (numbers, booleans, arrays, quoted strings); anything that does
/// not parse is taken as a bare string.
fn parse_override(raw: &str) -> Result<(Vec<String>, toml::Value), CliError> {
    let (key, val) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {raw:?} is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::Config(format!("override {raw:?} has empty key")));
    }
    let path: Vec<String> = key.split('.').map(str::to_string).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!(
            "override key {key:?} has an empty path segment"
        )));
    }
    let value = match toml::from_str::<toml::Table>(&format!("v = {val}")) {
        Ok(table) => table["v"].clone(),
        Err(_) => toml::Value::String(val.to_string()),
    };
    Ok((path, value))
}

/// Set `path` inside a TOML tree, creating intermediate tables as needed.
fn set_path(root: &mut toml::Value, path: &[String], value: toml::Value) -> Result<(), CliError> {
    let mut node = root;
    for seg in &path[..path.len() - 1] {
        if !node.is_table() {
            return Err(CliError::Config(format!(
                "override path segment {seg:?} traverses a non-table value"
            )));
        }
        node = node
            .as_table_mut()
            .unwrap()
            .entry(seg.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = node.as_table_mut().ok_or_else(|| {
        CliError::Config(format!(
            "override path {} traverses a non-table value",
            path.join(".")
        ))
    })?;
    table.insert(path.last().unwrap().clone(), value);
    Ok(())
}

/// Load a config file, apply `--override` entries in order, then apply
/// `--seed` (which rewrites `synth.seed` and `train.seed`), and validate.
pub fn load_config(
    path: &Path,
    seed: Option<u64>,
    overrides: &[String],
) -> Result<PipelineConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut value = toml::Value::Table(table);
    for raw in overrides {
        let (key_path, v) = parse_override(raw)?;
        set_path(&mut value, &key_path, v)?;
    }
    if let Some(s) = seed {
        set_path(
            &mut value,
            &["synth".into(), "seed".into()],
            toml::Value::Integer(s as i64),
        )?;
        set_path(
            &mut value,
            &["train".into(), "seed".into()],
            toml::Value::Integer(s as i64),
        )?;
    }
    let cfg: PipelineConfig = value
        .try_into()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}
