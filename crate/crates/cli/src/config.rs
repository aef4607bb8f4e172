//! Run configuration: one JSON file drives every subcommand, with CLI
//! flags overriding file values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use semloop_core::grpo::TrainConfig;
use semloop_core::ingest::{feature_range, load_dataset, Dataset, LoadOptions, SynthConfig};
use semloop_core::policy::{ProviderConfig, ToyConfig};
use semloop_core::reward::RewardSpec;
use semloop_core::schema::{FeatureSchema, TaskKind};

/// A schema by built-in name or by file path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemaRef {
    Builtin(String),
    File { file: PathBuf },
}

impl SchemaRef {
    pub fn resolve(&self) -> Result<FeatureSchema> {
        match self {
            SchemaRef::Builtin(name) => {
                FeatureSchema::builtin(name).with_context(|| format!("schema {name:?}"))
            }
            SchemaRef::File { file } => FeatureSchema::from_json_file(file)
                .with_context(|| format!("schema file {}", file.display())),
        }
    }
}

/// Synthetic data source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub schema: SchemaRef,
    pub subjects_per_subset: usize,
    pub weeks_per_subject: usize,
    pub subset_tags: Vec<String>,
    pub signal_feature: String,
    #[serde(default)]
    pub noise_scale: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_signal_slope")]
    pub signal_slope: f64,
    #[serde(default = "default_shift_scale")]
    pub shift_scale: f64,
}

fn default_signal_slope() -> f64 {
    12.0
}

fn default_shift_scale() -> f64 {
    0.05
}

impl SynthSection {
    pub fn to_synth_config(&self, fallback_seed: u64) -> Result<SynthConfig> {
        Ok(SynthConfig {
            schema: self.schema.resolve()?,
            subjects_per_subset: self.subjects_per_subset,
            weeks_per_subject: self.weeks_per_subject,
            subset_tags: self.subset_tags.clone(),
            signal_feature: self.signal_feature.clone(),
            noise_scale: self.noise_scale,
            seed: self.seed.unwrap_or(fallback_seed),
            signal_slope: self.signal_slope,
            shift_scale: self.shift_scale,
        })
    }
}

/// CSV file data source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilesSection {
    pub features: PathBuf,
    pub labels: PathBuf,
    pub schema: SchemaRef,
    #[serde(default = "default_window_len")]
    pub window_len: usize,
    #[serde(default = "default_min_coverage")]
    pub min_coverage: usize,
    #[serde(default)]
    pub include_label_day: bool,
}

fn default_window_len() -> usize {
    14
}

fn default_min_coverage() -> usize {
    10
}

/// Exactly one data source: synthetic or files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum DataConfig {
    #[serde(rename = "synth")]
    Synth(SynthSection),
    #[serde(rename = "files")]
    Files(FilesSection),
}

/// Toy policy settings; range and signal default from the data source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySection {
    #[serde(default = "default_buckets")]
    pub buckets: usize,
    #[serde(default)]
    pub bucket_range: Option<(f64, f64)>,
    #[serde(default)]
    pub signal_feature: Option<String>,
}

fn default_buckets() -> usize {
    8
}

impl Default for ToySection {
    fn default() -> Self {
        ToySection { buckets: default_buckets(), bucket_range: None, signal_feature: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_resamples() -> usize {
    5000
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { resamples: default_resamples(), seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default = "default_task")]
    pub task: TaskKind,
    #[serde(default)]
    pub reward: RewardSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub toy: ToySection,
    #[serde(default)]
    pub provider: Option<ProviderConfig>,
    #[serde(default)]
    pub eval: EvalSection,
}

fn default_task() -> TaskKind {
    TaskKind::Anxiety
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        Ok(cfg)
    }

    /// Applies CLI flag overrides; flags win over file values.
    pub fn apply_overrides(&mut self, seed: Option<u64>, task: Option<TaskKind>) {
        if let Some(seed) = seed {
            self.train.seed = seed;
            self.eval.seed = Some(seed);
            if let DataConfig::Synth(s) = &mut self.data {
                s.seed = Some(seed);
            }
        }
        if let Some(task) = task {
            self.task = task;
        }
    }

    /// Hash of the effective config (after overrides), embedded in output
    /// artifacts for provenance.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    /// The effective synthetic config, if the data source is synthetic.
    pub fn synth_config(&self) -> Result<SynthConfig> {
        match &self.data {
            DataConfig::Synth(s) => s.to_synth_config(self.train.seed),
            DataConfig::Files(_) => bail!("config data source is files, not synth"),
        }
    }

    /// Loads or generates the dataset named by the data source.
    pub fn resolve_dataset(&self) -> Result<Dataset> {
        match &self.data {
            DataConfig::Synth(s) => {
                let synth = s.to_synth_config(self.train.seed)?;
                Ok(semloop_core::ingest::gen_synthetic(&synth)?)
            }
            DataConfig::Files(f) => {
                let schema = f.schema.resolve()?;
                let opts = LoadOptions {
                    window_len: f.window_len,
                    min_coverage: f.min_coverage,
                    include_label_day: f.include_label_day,
                };
                Ok(load_dataset(&f.features, &f.labels, &schema, &opts)?)
            }
        }
    }

    /// Builds the toy policy config against a schema, defaulting the signal
    /// feature and bucket range from the data source.
    pub fn toy_config(&self, schema: &FeatureSchema) -> Result<ToyConfig> {
        let signal_key = match (&self.toy.signal_feature, &self.data) {
            (Some(key), _) => key.clone(),
            (None, DataConfig::Synth(s)) => s.signal_feature.clone(),
            (None, DataConfig::Files(_)) => {
                bail!("toy.signal_feature is required with a files data source")
            }
        };
        let feature = schema
            .feature(&signal_key)
            .with_context(|| format!("signal feature {signal_key:?} not in schema"))?;
        let range = self.toy.bucket_range.unwrap_or_else(|| feature_range(&feature.unit));
        Ok(ToyConfig::new(self.toy.buckets, range, feature.label.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> serde_json::Value {
        serde_json::json!({
            "data": { "synth": {
                "schema": "CollegeExperience",
                "subjects_per_subset": 2,
                "weeks_per_subject": 2,
                "subset_tags": ["DS2", "DS3"],
                "signal_feature": "sleep_duration",
                "noise_scale": 0.0
            }}
        })
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg: RunConfig = serde_json::from_value(minimal_json()).unwrap();
        assert_eq!(cfg.task, TaskKind::Anxiety);
        assert_eq!(cfg.reward.sigma, 1.2);
        assert_eq!(cfg.train.group_size, 8);
        assert_eq!(cfg.train.batch_samples, 32);
        assert_eq!(cfg.train.lr_initial, 5e-5);
        assert_eq!(cfg.eval.resamples, 5000);
        assert_eq!(cfg.toy.buckets, 8);
    }

    #[test]
    fn missing_field_names_the_key() {
        let mut v = minimal_json();
        v["data"]["synth"].as_object_mut().unwrap().remove("signal_feature");
        let err = serde_json::from_value::<RunConfig>(v).unwrap_err();
        assert!(err.to_string().contains("signal_feature"), "{err}");
    }

    #[test]
    fn unknown_field_is_rejected() {
        let mut v = minimal_json();
        v["data"]["synth"]["bogus_key"] = serde_json::json!(1);
        assert!(serde_json::from_value::<RunConfig>(v).is_err());
    }

    #[test]
    fn overrides_win_over_file_values() {
        let mut cfg: RunConfig = serde_json::from_value(minimal_json()).unwrap();
        cfg.apply_overrides(Some(99), Some(TaskKind::Depression));
        assert_eq!(cfg.train.seed, 99);
        assert_eq!(cfg.eval.seed, Some(99));
        assert_eq!(cfg.task, TaskKind::Depression);
        assert_eq!(cfg.synth_config().unwrap().seed, 99);
    }

    #[test]
    fn hash_tracks_effective_config() {
        let cfg: RunConfig = serde_json::from_value(minimal_json()).unwrap();
        let mut overridden = cfg.clone();
        overridden.apply_overrides(Some(5), None);
        assert_ne!(cfg.hash(), overridden.hash());
        assert_eq!(cfg.hash(), cfg.clone().hash());
    }

    #[test]
    fn toy_config_defaults_from_synth_source() {
        let cfg: RunConfig = serde_json::from_value(minimal_json()).unwrap();
        let schema = FeatureSchema::builtin("CollegeExperience").unwrap();
        let toy = cfg.toy_config(&schema).unwrap();
        assert_eq!(toy.buckets, 8);
        assert_eq!(toy.signal_label, "Sleep duration");
        assert_eq!(toy.bucket_range, (0.0, 12.0)); // hours
    }
}
