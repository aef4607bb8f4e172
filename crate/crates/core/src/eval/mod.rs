//! Leave-one-subset-out evaluation with bootstrap statistics.

mod baselines;
pub mod stats;
mod predictors;

pub use baselines::{LinearBaseline, MeanBaseline};
pub use predictors::{
    two_stage_predict, ProviderPredictor, ToyCheckpointPredictor, ToyTrainPredictor,
};
pub use stats::{bootstrap_se, fold_avg_mae, mae, paired_bootstrap, significance_stars};

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grpo::GrpoError;
use crate::ingest::{Dataset, Fold};
use crate::policy::ProviderError;
use crate::prompt::PromptError;
use crate::schema::{BehavioralWindow, Score, TaskKind};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty prediction or error set")]
    EmptySet,
    #[error("paired error lists have different lengths: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("predictor used before fitting")]
    NotFitted,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Grpo(#[from] Box<GrpoError>),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

/// A method under evaluation. `fit` sees only train indices; `predict`
/// returns `None` to record a missing prediction rather than dropping the
/// sample.
pub trait Predictor: Send {
    fn fit(&mut self, dataset: &Dataset, train: &[usize], task: TaskKind) -> Result<(), EvalError>;
    fn predict(&mut self, window: &BehavioralWindow) -> Result<Option<Score>, EvalError>;
}

/// Named predictor factory; each fold gets a fresh instance so nothing
/// leaks across folds.
pub struct Method {
    pub name: String,
    factory: Box<dyn Fn() -> Box<dyn Predictor> + Send + Sync>,
}

impl Method {
    pub fn new<F>(name: impl Into<String>, factory: F) -> Method
    where
        F: Fn() -> Box<dyn Predictor> + Send + Sync + 'static,
    {
        Method { name: name.into(), factory: Box::new(factory) }
    }

    pub fn make(&self) -> Box<dyn Predictor> {
        (self.factory)()
    }
}

/// One prediction on a held-out sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub fold: String,
    pub sample_index: usize,
    pub subject_id: String,
    pub label_date: NaiveDate,
    pub true_score: Score,
    pub pred: Option<Score>,
}

impl PredictionRecord {
    fn error(&self) -> Option<f64> {
        self.pred.map(|p| (p.value() as f64 - self.true_score.value() as f64).abs())
    }
}

/// Per-fold (or pooled) statistics for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: String,
    pub n: usize,
    pub missing: usize,
    pub mae: f64,
    pub se: f64,
    /// One-sided p-values: probability this method is at least as bad as
    /// the named one under the paired bootstrap.
    pub comparisons: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub folds: Vec<FoldReport>,
    pub pooled: FoldReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosoReport {
    pub task: TaskKind,
    pub resamples: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub methods: Vec<MethodReport>,
}

/// Report plus the raw per-method predictions behind it.
#[derive(Debug, Clone)]
pub struct LosoRun {
    pub report: LosoReport,
    pub predictions: Vec<(String, Vec<PredictionRecord>)>,
}

fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut x = seed ^ 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        x ^= p.wrapping_mul(0xBF58_476D_1CE4_E5B9).wrapping_add(0x94D0_49BB_1331_11EB);
        x = x.rotate_left(27).wrapping_mul(0x2545_F491_4F6C_DD1D);
    }
    x
}

fn fold_predictions(
    dataset: &Dataset,
    fold: &Fold,
    task: TaskKind,
    methods: &[Method],
) -> Result<Vec<Vec<PredictionRecord>>, EvalError> {
    let mut per_method = Vec::with_capacity(methods.len());
    for method in methods {
        let mut predictor = method.make();
        predictor.fit(dataset, &fold.train, task)?;
        let mut records = Vec::with_capacity(fold.test.len());
        for &i in &fold.test {
            let sample = &dataset.samples[i];
            let pred = predictor.predict(&sample.window)?;
            records.push(PredictionRecord {
                fold: fold.name.clone(),
                sample_index: i,
                subject_id: sample.window.subject_id.clone(),
                label_date: sample.label_date,
                true_score: sample.target(task),
                pred,
            });
        }
        per_method.push(records);
    }
    Ok(per_method)
}

fn aligned_errors(a: &[PredictionRecord], b: &[PredictionRecord]) -> (Vec<f64>, Vec<f64>) {
    debug_assert_eq!(a.len(), b.len());
    let mut ea = Vec::new();
    let mut eb = Vec::new();
    for (ra, rb) in a.iter().zip(b) {
        debug_assert_eq!(ra.sample_index, rb.sample_index);
        if let (Some(x), Some(y)) = (ra.error(), rb.error()) {
            ea.push(x);
            eb.push(y);
        }
    }
    (ea, eb)
}

fn build_fold_report(
    name: &str,
    method_idx: usize,
    methods: &[Method],
    records_by_method: &[Vec<PredictionRecord>],
    resamples: usize,
    seed: u64,
    fold_tag: u64,
) -> Result<FoldReport, EvalError> {
    let records = &records_by_method[method_idx];
    let errors: Vec<f64> = records.iter().filter_map(|r| r.error()).collect();
    let missing = records.len() - errors.len();
    let mae = stats::mae(&errors)?;
    let se = stats::bootstrap_se(&errors, resamples, derive_seed(seed, &[fold_tag, method_idx as u64]))?;
    let mut comparisons = BTreeMap::new();
    for (other_idx, other) in methods.iter().enumerate() {
        if other_idx == method_idx {
            continue;
        }
        let (ea, eb) = aligned_errors(records, &records_by_method[other_idx]);
        if ea.is_empty() {
            continue;
        }
        let lo = method_idx.min(other_idx) as u64;
        let hi = method_idx.max(other_idx) as u64;
        let p = stats::paired_bootstrap(&ea, &eb, resamples, derive_seed(seed, &[fold_tag, 7, lo, hi]))?;
        comparisons.insert(other.name.clone(), p);
    }
    Ok(FoldReport { fold: name.to_string(), n: records.len(), missing, mae, se, comparisons })
}

/// Runs the LOSO protocol: every method is fitted per fold on that fold's
/// train split only, evaluated on the held-out subset, and compared
/// pairwise with the paired bootstrap on fold and pooled predictions.
///
/// `jobs` bounds fold-level parallelism; results are identical for any
/// value because every bootstrap call derives its own seed.
pub fn run_loso(
    dataset: &Dataset,
    folds: &[Fold],
    task: TaskKind,
    methods: &[Method],
    resamples: usize,
    seed: u64,
    jobs: usize,
) -> Result<LosoRun, EvalError> {
    if folds.is_empty() || methods.is_empty() {
        return Err(EvalError::EmptySet);
    }

    let fold_data: Vec<Vec<Vec<PredictionRecord>>> = if jobs <= 1 || folds.len() == 1 {
        let mut out = Vec::with_capacity(folds.len());
        for fold in folds {
            out.push(fold_predictions(dataset, fold, task, methods)?);
        }
        out
    } else {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<Vec<Vec<PredictionRecord>>, EvalError>>>> =
            Mutex::new((0..folds.len()).map(|_| None).collect());
        std::thread::scope(|scope| {
            for _ in 0..jobs.min(folds.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= folds.len() {
                        break;
                    }
                    let result = fold_predictions(dataset, &folds[i], task, methods);
                    slots.lock().unwrap()[i] = Some(result);
                });
            }
        });
        let mut out = Vec::with_capacity(folds.len());
        for slot in slots.into_inner().unwrap() {
            out.push(slot.expect("fold left unprocessed")?);
        }
        out
    };

    let mut method_reports = Vec::with_capacity(methods.len());
    let mut predictions = Vec::with_capacity(methods.len());
    for (m, method) in methods.iter().enumerate() {
        let mut fold_reports = Vec::with_capacity(folds.len());
        for (f, fold) in folds.iter().enumerate() {
            fold_reports.push(build_fold_report(
                &fold.name, m, methods, &fold_data[f], resamples, seed, f as u64,
            )?);
        }

        let pooled_records: Vec<Vec<PredictionRecord>> = (0..methods.len())
            .map(|mi| fold_data.iter().flat_map(|fd| fd[mi].iter().cloned()).collect())
            .collect();
        let pooled = build_fold_report(
            "pooled", m, methods, &pooled_records, resamples, seed, u64::MAX,
        )?;

        // pooled MAE must equal the sample-weighted mean of fold MAEs
        let weighted: f64 = fold_reports.iter().map(|r| r.mae * (r.n - r.missing) as f64).sum::<f64>()
            / fold_reports.iter().map(|r| (r.n - r.missing) as f64).sum::<f64>();
        assert!(
            (pooled.mae - weighted).abs() < 1e-12,
            "pooled MAE {} diverged from weighted fold mean {}",
            pooled.mae,
            weighted
        );

        predictions.push((method.name.clone(), pooled_records[m].clone()));
        method_reports.push(MethodReport { method: method.name.clone(), folds: fold_reports, pooled });
    }

    Ok(LosoRun {
        report: LosoReport { task, resamples, seed, config_hash: None, methods: method_reports },
        predictions,
    })
}

/// Writes predictions as `fold,subject_id,label_date,true,pred` (empty
/// `pred` for missing).
pub fn write_predictions_csv(
    records: &[PredictionRecord],
    path: &std::path::Path,
) -> Result<(), EvalError> {
    let mut out = String::from("fold,subject_id,label_date,true,pred\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.fold,
            r.subject_id,
            r.label_date,
            r.true_score,
            r.pred.map(|p| p.to_string()).unwrap_or_default()
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Renders a human-readable summary table with significance stars.
pub fn render_table(report: &LosoReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "Task: {}  ({} bootstrap resamples, seed {})\n",
        report.task.name(),
        report.resamples,
        report.seed
    ));
    out.push_str(&format!(
        "{:<18} {:<8} {:>5} {:>8} {:>8} {:>8}\n",
        "method", "fold", "n", "miss", "MAE", "SE"
    ));
    for m in &report.methods {
        for fr in m.folds.iter().chain(std::iter::once(&m.pooled)) {
            out.push_str(&format!(
                "{:<18} {:<8} {:>5} {:>8} {:>8.3} {:>8.3}\n",
                m.method, fr.fold, fr.n, fr.missing, fr.mae, fr.se
            ));
        }
    }
    let any_comparisons = report.methods.iter().any(|m| !m.pooled.comparisons.is_empty());
    if any_comparisons {
        out.push_str("\npooled paired bootstrap (p that row method is at least as bad as column):\n");
        for m in &report.methods {
            for (other, p) in &m.pooled.comparisons {
                out.push_str(&format!(
                    "  {} vs {}: p = {:.4}{}\n",
                    m.method,
                    other,
                    p,
                    significance_stars(*p)
                ));
            }
        }
    }
    out
}
