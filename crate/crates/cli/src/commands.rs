//! Subcommand implementations, shared by the binary and the test suites.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use semloop_core::eval::{
    render_table, run_loso, write_predictions_csv, LinearBaseline, LosoReport, MeanBaseline,
    Method, ProviderPredictor, ToyCheckpointPredictor, ToyTrainPredictor,
};
use semloop_core::grpo::{train, write_curve_csv};
use semloop_core::ingest::{gen_synthetic, split_loso, write_dataset_csvs};
use semloop_core::policy::{HttpProvider, ToyConfig, ToyPolicy, ToyPolicyParams};

use crate::config::RunConfig;

/// Trained policy artifact with provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub seed: u64,
    pub toy: ToyConfig,
    pub params: ToyPolicyParams,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading checkpoint {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing checkpoint {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)
            .with_context(|| format!("writing checkpoint {}", path.display()))
    }
}

/// Writes `features.csv` and `labels.csv` for the configured synthetic
/// dataset; reruns with the same config are byte-identical.
pub fn cmd_gen_synth(cfg: &RunConfig, out_dir: &Path) -> Result<usize> {
    let synth = cfg.synth_config()?;
    let dataset = gen_synthetic(&synth)?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output dir {}", out_dir.display()))?;
    write_dataset_csvs(&dataset, &out_dir.join("features.csv"), &out_dir.join("labels.csv"))?;
    let meta = serde_json::json!({
        "config_hash": cfg.hash(),
        "samples": dataset.len(),
        "subsets": dataset.subset_tags(),
    });
    std::fs::write(out_dir.join("gen_meta.json"), serde_json::to_string_pretty(&meta)?)?;
    println!("wrote {} samples to {}", dataset.len(), out_dir.display());
    Ok(dataset.len())
}

/// Trains the toy policy on the configured dataset; writes
/// `checkpoint.json` and `curve.csv`.
pub fn cmd_train_toy(cfg: &RunConfig, out_dir: &Path) -> Result<f64> {
    let dataset = cfg.resolve_dataset()?;
    let toy_cfg = cfg.toy_config(&dataset.schema)?;
    let init = ToyPolicyParams::uniform(&toy_cfg);
    let outcome = train(&dataset, cfg.task, &toy_cfg, init, &cfg.train, &cfg.reward)?;

    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output dir {}", out_dir.display()))?;
    let checkpoint = Checkpoint {
        config_hash: cfg.hash(),
        seed: cfg.train.seed,
        toy: toy_cfg,
        params: outcome.params,
    };
    checkpoint.save(&out_dir.join("checkpoint.json"))?;
    write_curve_csv(&outcome.curve, &out_dir.join("curve.csv"))?;

    let final_reward = outcome.curve.last().map(|p| p.mean_reward).unwrap_or(0.0);
    println!(
        "trained {} steps; final mean reward {:.4}",
        outcome.curve.len(),
        final_reward
    );
    Ok(final_reward)
}

fn build_methods(
    cfg: &RunConfig,
    names: &[String],
    checkpoint: Option<&Path>,
    schema: &semloop_core::schema::FeatureSchema,
) -> Result<Vec<Method>> {
    let mut methods = Vec::with_capacity(names.len());
    for name in names {
        let method = match name.as_str() {
            "mean-baseline" => Method::new("mean-baseline", || Box::new(MeanBaseline::new())),
            "linear-baseline" => Method::new("linear-baseline", || Box::new(LinearBaseline::new())),
            "toy-checkpoint" => {
                let path = checkpoint
                    .context("--checkpoint is required for the toy-checkpoint predictor")?;
                let ck = Checkpoint::load(path)?;
                let policy = ToyPolicy::new(ck.toy, ck.params)
                    .context("checkpoint params do not match its toy config")?;
                Method::new("toy-checkpoint", move || {
                    Box::new(ToyCheckpointPredictor::new(policy.clone()))
                })
            }
            "toy-train" => {
                let toy_cfg: ToyConfig = cfg.toy_config(schema)?;
                let train_cfg = cfg.train.clone();
                let reward = cfg.reward.clone();
                Method::new("toy-train", move || {
                    Box::new(ToyTrainPredictor::new(
                        toy_cfg.clone(),
                        train_cfg.clone(),
                        reward.clone(),
                    ))
                })
            }
            "provider" => {
                let pc = cfg
                    .provider
                    .clone()
                    .context("config has no provider section for the provider predictor")?;
                let temperature = pc.temperature;
                let max_tokens = pc.max_tokens;
                let provider = Arc::new(HttpProvider::new(pc)?);
                Method::new("provider", move || {
                    Box::new(ProviderPredictor::new(provider.clone(), temperature, max_tokens))
                })
            }
            other => bail!(
                "unknown predictor {other:?}; expected one of mean-baseline, linear-baseline, \
                 toy-checkpoint, toy-train, provider"
            ),
        };
        methods.push(method);
    }
    Ok(methods)
}

/// Runs the LOSO protocol for the selected predictors; writes
/// `report.json` and one predictions CSV per method, and prints the
/// summary table.
pub fn cmd_run_loso(
    cfg: &RunConfig,
    predictors: &[String],
    checkpoint: Option<&Path>,
    fold_filter: Option<&str>,
    out_dir: &Path,
    jobs: usize,
) -> Result<LosoReport> {
    if predictors.is_empty() {
        bail!("run-loso needs at least one --predictor");
    }
    let dataset = cfg.resolve_dataset()?;
    let mut folds = split_loso(&dataset)?;
    if let Some(name) = fold_filter {
        let before = folds.len();
        folds.retain(|f| f.name == name);
        if folds.is_empty() {
            bail!("fold {name:?} not found among {before} folds");
        }
    }
    let methods = build_methods(cfg, predictors, checkpoint, &dataset.schema)?;
    let eval_seed = cfg.eval.seed.unwrap_or(cfg.train.seed);
    let mut run = run_loso(
        &dataset,
        &folds,
        cfg.task,
        &methods,
        cfg.eval.resamples,
        eval_seed,
        jobs,
    )?;
    run.report.config_hash = Some(cfg.hash());

    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output dir {}", out_dir.display()))?;
    std::fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&run.report)?,
    )?;
    for (name, records) in &run.predictions {
        write_predictions_csv(records, &out_dir.join(format!("predictions-{name}.csv")))?;
    }
    print!("{}", render_table(&run.report));
    Ok(run.report)
}

/// Evaluates the configured remote provider through the two-stage pipeline
/// under the LOSO protocol.
pub fn cmd_eval_provider(cfg: &RunConfig, out_dir: &Path, jobs: usize) -> Result<LosoReport> {
    cmd_run_loso(cfg, &["provider".to_string()], None, None, out_dir, jobs)
}

/// Renders a saved report as the human-readable table.
pub fn cmd_report(input: &Path) -> Result<String> {
    let text = std::fs::read_to_string(input)
        .with_context(|| format!("reading report {}", input.display()))?;
    let report: LosoReport = serde_json::from_str(&text)
        .with_context(|| format!("parsing report {}", input.display()))?;
    let table = render_table(&report);
    print!("{table}");
    Ok(table)
}
