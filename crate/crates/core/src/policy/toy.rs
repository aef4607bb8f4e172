//! Trainable two-decision categorical toy policy.
//!
//! Stage 1 reads a rendered window prompt, reduces it to a coarse context
//! (the bucketed mean of one signal feature), and picks one of a few fixed
//! summary templates. Exactly one template verbalizes the bucket; the rest
//! lose it. Stage 2 sees only the summary text, recovers whatever context
//! the text carries, and picks a score. Credit for Stage-1 choices can
//! therefore arrive only through what the summary preserves for Stage 2,
//! which is the mechanism the trainer has to exercise.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Completion, Decision, Provider, ProviderError, SampleRequest};
use crate::math::{log_softmax, sample_categorical, softmax};
use crate::schema::Score;

const STAGE1_PREFIX: &str = "You are analyzing ";
const STAGE2_PREFIX: &str = "You are given a behavioral summary";
const SCORE_CHOICES: usize = Score::MAX as usize + 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ToyError {
    #[error("gradient shape does not match parameter shape")]
    ShapeMismatch,
    #[error("invalid toy policy setup: {0}")]
    InvalidConfig(String),
}

/// Fixed summary surface forms: index 0 verbalizes the bucket, the rest
/// drop it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSet {
    lossy: Vec<String>,
}

const SUFFICIENT_PREFIX: &str =
    "Over the two weeks, the typical daily level of the key behavior sits in band ";

impl TemplateSet {
    pub fn standard() -> TemplateSet {
        TemplateSet {
            lossy: vec![
                "The person's daily routine looks broadly stable across the two weeks, with \
                 only minor day-to-day variation."
                    .to_string(),
                "Behavior fluctuates from day to day without a single clear trend over the \
                 period."
                    .to_string(),
                "The records cover two weeks of ordinary daily activity with nothing that \
                 stands out."
                    .to_string(),
            ],
        }
    }

    /// Number of templates `M` (sufficient plus lossy).
    pub fn len(&self) -> usize {
        1 + self.lossy.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn check(&self) -> Result<(), ToyError> {
        if self.lossy.is_empty() {
            return Err(ToyError::InvalidConfig("need at least one lossy template".into()));
        }
        let distinct: BTreeSet<&str> = self.lossy.iter().map(String::as_str).collect();
        if distinct.len() != self.lossy.len() {
            return Err(ToyError::InvalidConfig("lossy templates must be distinct".into()));
        }
        if self.lossy.iter().any(|t| t.starts_with(SUFFICIENT_PREFIX)) {
            return Err(ToyError::InvalidConfig(
                "a lossy template collides with the sufficient surface form".into(),
            ));
        }
        Ok(())
    }

    /// Summary text for template `m` in bucket context `bucket` of `n_buckets`.
    pub fn text_for(&self, m: usize, bucket: usize, n_buckets: usize) -> String {
        if m == 0 {
            format!(
                "{SUFFICIENT_PREFIX}{} of {}, where band 1 is lowest and band {} is highest.",
                bucket + 1,
                n_buckets,
                n_buckets
            )
        } else {
            self.lossy[m - 1].clone()
        }
    }

    /// Recovers (template index, verbalized bucket) from a summary's text.
    /// Unknown text maps to `None`.
    pub fn recognize(&self, text: &str, n_buckets: usize) -> Option<(usize, Option<usize>)> {
        let text = text.trim();
        if let Some(rest) = text.strip_prefix(SUFFICIENT_PREFIX) {
            let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
            let band: usize = digits.parse().ok()?;
            if (1..=n_buckets).contains(&band) {
                return Some((0, Some(band - 1)));
            }
            return None;
        }
        self.lossy.iter().position(|t| t == text).map(|i| (i + 1, None))
    }
}

/// Static configuration of the toy policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    /// Number of equal-width buckets `B` over `bucket_range`.
    pub buckets: usize,
    /// Half-open value range [lo, hi) the signal mean is bucketed over.
    pub bucket_range: (f64, f64),
    /// Descriptive label of the signal feature as it appears in Stage-1
    /// prompts.
    pub signal_label: String,
    pub templates: TemplateSet,
}

impl ToyConfig {
    pub fn new(
        buckets: usize,
        bucket_range: (f64, f64),
        signal_label: impl Into<String>,
    ) -> ToyConfig {
        ToyConfig {
            buckets,
            bucket_range,
            signal_label: signal_label.into(),
            templates: TemplateSet::standard(),
        }
    }

    fn check(&self) -> Result<(), ToyError> {
        if self.buckets < 2 {
            return Err(ToyError::InvalidConfig("need at least 2 buckets".into()));
        }
        if !(self.bucket_range.0 < self.bucket_range.1) {
            return Err(ToyError::InvalidConfig("bucket_range must be a nonempty interval".into()));
        }
        if self.signal_label.is_empty() {
            return Err(ToyError::InvalidConfig("signal_label must be non-empty".into()));
        }
        self.templates.check()
    }

    /// Number of templates `M`.
    pub fn n_templates(&self) -> usize {
        self.templates.len()
    }

    /// Number of Stage-2 contexts: one per (template, bucket) pair plus the
    /// shared uninformative context.
    pub fn n_stage2_contexts(&self) -> usize {
        self.n_templates() * self.buckets + 1
    }

    /// The context summaries fall into when they verbalize no bucket.
    pub fn uninformative_context(&self) -> usize {
        self.n_templates() * self.buckets
    }

    /// Derives the Stage-2 context from summary text alone.
    pub fn stage2_context(&self, summary: &str) -> usize {
        match self.templates.recognize(summary, self.buckets) {
            Some((m, Some(bucket))) => m * self.buckets + bucket,
            _ => self.uninformative_context(),
        }
    }

    /// Maps a signal mean into a bucket: equal-width half-open intervals
    /// [lo, hi), values outside the range clamped to the end buckets.
    pub fn bucket_of(&self, mean: f64) -> usize {
        let (lo, hi) = self.bucket_range;
        let frac = (mean - lo) / (hi - lo);
        let idx = (frac * self.buckets as f64).floor();
        (idx.max(0.0) as usize).min(self.buckets - 1)
    }
}

/// Logit tables for both decisions: `stage1[bucket][template]` and
/// `stage2[context][score]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicyParams {
    pub stage1: Vec<Vec<f64>>,
    pub stage2: Vec<Vec<f64>>,
}

impl ToyPolicyParams {
    /// Uniform initialization: all logits zero.
    pub fn uniform(cfg: &ToyConfig) -> ToyPolicyParams {
        ToyPolicyParams {
            stage1: vec![vec![0.0; cfg.n_templates()]; cfg.buckets],
            stage2: vec![vec![0.0; SCORE_CHOICES]; cfg.n_stage2_contexts()],
        }
    }

    pub fn zeros_like(&self) -> ToyPolicyParams {
        ToyPolicyParams {
            stage1: self.stage1.iter().map(|r| vec![0.0; r.len()]).collect(),
            stage2: self.stage2.iter().map(|r| vec![0.0; r.len()]).collect(),
        }
    }

    fn same_shape(&self, other: &ToyPolicyParams) -> bool {
        self.stage1.len() == other.stage1.len()
            && self.stage2.len() == other.stage2.len()
            && self.stage1.iter().zip(&other.stage1).all(|(a, b)| a.len() == b.len())
            && self.stage2.iter().zip(&other.stage2).all(|(a, b)| a.len() == b.len())
    }
}

/// Frozen copy of the parameters taken at training start.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferencePolicy(ToyPolicyParams);

impl ReferencePolicy {
    pub fn capture(params: &ToyPolicyParams) -> ReferencePolicy {
        ReferencePolicy(params.clone())
    }

    pub fn params(&self) -> &ToyPolicyParams {
        &self.0
    }
}

/// Context ids visited by a batch, per stage.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VisitedContexts {
    pub stage1: BTreeSet<usize>,
    pub stage2: BTreeSet<usize>,
}

impl VisitedContexts {
    pub fn is_empty(&self) -> bool {
        self.stage1.is_empty() && self.stage2.is_empty()
    }
}

/// Mean exact categorical KL(params || reference) over the visited
/// contexts of both stages.
pub fn toy_kl(
    params: &ToyPolicyParams,
    reference: &ReferencePolicy,
    visited: &VisitedContexts,
) -> f64 {
    let total = visited.stage1.len() + visited.stage2.len();
    if total == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for &c in &visited.stage1 {
        sum += crate::math::kl_categorical(&params.stage1[c], &reference.params().stage1[c]);
    }
    for &c in &visited.stage2 {
        sum += crate::math::kl_categorical(&params.stage2[c], &reference.params().stage2[c]);
    }
    sum / total as f64
}

/// Gradient-ascent step: `params + lr * gradient`, returned as new params.
pub fn toy_apply_update(
    params: &ToyPolicyParams,
    gradient: &ToyPolicyParams,
    lr: f64,
) -> Result<ToyPolicyParams, ToyError> {
    if !params.same_shape(gradient) {
        return Err(ToyError::ShapeMismatch);
    }
    let add = |p: &Vec<Vec<f64>>, g: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        p.iter()
            .zip(g)
            .map(|(pr, gr)| pr.iter().zip(gr).map(|(a, b)| a + lr * b).collect())
            .collect()
    };
    Ok(ToyPolicyParams {
        stage1: add(&params.stage1, &gradient.stage1),
        stage2: add(&params.stage2, &gradient.stage2),
    })
}

/// Gradient of `log softmax(logits / temperature)[choice]` with respect to
/// the logits.
pub fn grad_log_softmax(logits: &[f64], temperature: f64, choice: usize) -> Vec<f64> {
    let p = softmax(logits, temperature);
    p.iter()
        .enumerate()
        .map(|(j, pj)| {
            let indicator = if j == choice { 1.0 } else { 0.0 };
            (indicator - pj) / temperature
        })
        .collect()
}

/// The toy policy: a config plus current logit tables. Implements the
/// provider contract; sampling is deterministic under a request seed.
#[derive(Debug, Clone)]
pub struct ToyPolicy {
    pub cfg: ToyConfig,
    pub params: ToyPolicyParams,
}

impl ToyPolicy {
    pub fn new(cfg: ToyConfig, params: ToyPolicyParams) -> Result<ToyPolicy, ToyError> {
        cfg.check()?;
        let expected = ToyPolicyParams::uniform(&cfg);
        if !expected.same_shape(&params) {
            return Err(ToyError::ShapeMismatch);
        }
        Ok(ToyPolicy { cfg, params })
    }

    pub fn uniform(cfg: ToyConfig) -> Result<ToyPolicy, ToyError> {
        let params = ToyPolicyParams::uniform(&cfg);
        ToyPolicy::new(cfg, params)
    }

    /// Parses the signal feature's values back out of a Stage-1 prompt and
    /// buckets their mean. Days rendered as "not recorded" are skipped; a
    /// prompt that never mentions the signal label is unparseable.
    pub fn bucketize_stage1(&self, prompt: &str) -> Result<usize, ProviderError> {
        let marker = format!("- {}: ", self.cfg.signal_label);
        let mut values = Vec::new();
        let mut seen = false;
        for line in prompt.lines() {
            if let Some(rest) = line.strip_prefix(&marker) {
                seen = true;
                if rest == "not recorded" {
                    continue;
                }
                let token = rest.split_whitespace().next().unwrap_or("");
                let v: f64 = token.parse().map_err(|_| {
                    ProviderError::UnparseablePrompt(format!("bad value line: {line:?}"))
                })?;
                values.push(v);
            }
        }
        if !seen {
            return Err(ProviderError::UnparseablePrompt(format!(
                "no lines for signal label {:?}",
                self.cfg.signal_label
            )));
        }
        if values.is_empty() {
            // all days unrecorded: neutral middle bucket
            return Ok(self.cfg.buckets / 2);
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Ok(self.cfg.bucket_of(mean))
    }

    fn generate_stage1(&self, ctx: usize, temperature: f64, rng: &mut ChaCha12Rng) -> Completion {
        let logits = &self.params.stage1[ctx];
        let probs = softmax(logits, temperature);
        let m = sample_categorical(&probs, rng);
        let logprob =
            if temperature > 0.0 { log_softmax(logits, temperature)[m] } else { 0.0 };
        Completion {
            text: self.cfg.templates.text_for(m, ctx, self.cfg.buckets),
            logprob: Some(logprob),
            decisions: Some(vec![Decision { context: ctx, choice: m }]),
        }
    }

    fn generate_stage2(&self, summary: &str, temperature: f64, rng: &mut ChaCha12Rng) -> Completion {
        let ctx = self.cfg.stage2_context(summary);
        let logits = &self.params.stage2[ctx];
        let probs = softmax(logits, temperature);
        let s = sample_categorical(&probs, rng);
        let logprob =
            if temperature > 0.0 { log_softmax(logits, temperature)[s] } else { 0.0 };
        Completion {
            text: format!("score: {s}"),
            logprob: Some(logprob),
            decisions: Some(vec![Decision { context: ctx, choice: s }]),
        }
    }

    /// Score distribution Stage 2 assigns given a summary, at a temperature.
    pub fn stage2_distribution(&self, summary: &str, temperature: f64) -> Vec<f64> {
        let ctx = self.cfg.stage2_context(summary);
        softmax(&self.params.stage2[ctx], temperature)
    }

    /// Probability Stage 1 picks the bucket-preserving template in a bucket.
    pub fn sufficient_probability(&self, bucket: usize, temperature: f64) -> f64 {
        softmax(&self.params.stage1[bucket], temperature)[0]
    }
}

impl Provider for ToyPolicy {
    fn name(&self) -> &str {
        "toy"
    }

    fn sample(&self, req: &SampleRequest) -> Result<Vec<Completion>, ProviderError> {
        let mut rng = match req.seed {
            Some(seed) => ChaCha12Rng::seed_from_u64(seed),
            None => ChaCha12Rng::from_entropy(),
        };
        if req.prompt.starts_with(STAGE1_PREFIX) {
            let ctx = self.bucketize_stage1(&req.prompt)?;
            Ok((0..req.n).map(|_| self.generate_stage1(ctx, req.temperature, &mut rng)).collect())
        } else if req.prompt.starts_with(STAGE2_PREFIX) {
            let summary = crate::prompt::extract_stage2_summary(&req.prompt)
                .ok_or_else(|| ProviderError::UnparseablePrompt("no summary section".into()))?;
            Ok((0..req.n)
                .map(|_| self.generate_stage2(summary, req.temperature, &mut rng))
                .collect())
        } else {
            Err(ProviderError::UnparseablePrompt("unknown prompt shape".into()))
        }
    }
}
