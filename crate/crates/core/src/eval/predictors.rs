//! Predictors that route through the real two-stage prompting path.

use std::sync::Arc;

use super::{EvalError, Predictor};
use crate::grpo::TrainConfig;
use crate::ingest::Dataset;
use crate::parse::{extract_score, extract_summary, ParseOutcome};
use crate::policy::{Provider, SampleRequest, ToyConfig, ToyPolicy, ToyPolicyParams};
use crate::prompt::{render_stage1, render_stage2};
use crate::reward::RewardSpec;
use crate::schema::{BehavioralWindow, FeatureSchema, Score, TaskKind};

/// Greedy two-stage rollout through any provider: one summary, one
/// prediction, both at the given temperature.
pub fn two_stage_predict(
    provider: &dyn Provider,
    schema: &FeatureSchema,
    window: &BehavioralWindow,
    task: TaskKind,
    temperature: f64,
    max_tokens: usize,
) -> Result<Option<Score>, EvalError> {
    let stage1_prompt = render_stage1(window, schema)?;
    let mut req = SampleRequest::new(stage1_prompt, 1).with_temperature(temperature).with_seed(0);
    req.max_tokens = max_tokens;
    let completion = match provider.sample(&req) {
        Ok(mut c) => c.remove(0),
        Err(_) => return Ok(None),
    };
    let summary = match extract_summary(&completion.text, provider.require_think_tags()) {
        ParseOutcome::Valid(s) => s,
        ParseOutcome::Invalid(_) => return Ok(None),
    };
    let stage2_prompt = render_stage2(&summary, task)?;
    let mut req = SampleRequest::new(stage2_prompt, 1).with_temperature(temperature).with_seed(1);
    req.max_tokens = max_tokens;
    let response = match provider.sample(&req) {
        Ok(mut c) => c.remove(0),
        Err(_) => return Ok(None),
    };
    match extract_score(&response.text, provider.require_think_tags()) {
        ParseOutcome::Valid(score) => Ok(Some(score)),
        ParseOutcome::Invalid(_) => Ok(None),
    }
}

/// A frozen toy checkpoint evaluated greedily; fitting is a no-op.
pub struct ToyCheckpointPredictor {
    policy: ToyPolicy,
    schema: Option<FeatureSchema>,
    task: Option<TaskKind>,
}

impl ToyCheckpointPredictor {
    pub fn new(policy: ToyPolicy) -> ToyCheckpointPredictor {
        ToyCheckpointPredictor { policy, schema: None, task: None }
    }
}

impl Predictor for ToyCheckpointPredictor {
    fn fit(&mut self, dataset: &Dataset, _train: &[usize], task: TaskKind) -> Result<(), EvalError> {
        self.schema = Some(dataset.schema.clone());
        self.task = Some(task);
        Ok(())
    }

    fn predict(&mut self, window: &BehavioralWindow) -> Result<Option<Score>, EvalError> {
        let schema = self.schema.as_ref().ok_or(EvalError::NotFitted)?;
        let task = self.task.ok_or(EvalError::NotFitted)?;
        two_stage_predict(&self.policy, schema, window, task, 0.0, 256)
    }
}

/// Trains a fresh toy policy with GRPO on each fold's train split, then
/// predicts greedily.
pub struct ToyTrainPredictor {
    toy_cfg: ToyConfig,
    train_cfg: TrainConfig,
    reward: RewardSpec,
    fitted: Option<(ToyPolicy, FeatureSchema, TaskKind)>,
}

impl ToyTrainPredictor {
    pub fn new(toy_cfg: ToyConfig, train_cfg: TrainConfig, reward: RewardSpec) -> ToyTrainPredictor {
        ToyTrainPredictor { toy_cfg, train_cfg, reward, fitted: None }
    }
}

impl Predictor for ToyTrainPredictor {
    fn fit(&mut self, dataset: &Dataset, train: &[usize], task: TaskKind) -> Result<(), EvalError> {
        if train.is_empty() {
            return Err(EvalError::EmptySet);
        }
        let train_view = Dataset {
            schema: dataset.schema.clone(),
            samples: train.iter().map(|&i| dataset.samples[i].clone()).collect(),
        };
        let init = ToyPolicyParams::uniform(&self.toy_cfg);
        let outcome =
            crate::grpo::train(&train_view, task, &self.toy_cfg, init, &self.train_cfg, &self.reward)
                .map_err(Box::new)?;
        let policy = ToyPolicy::new(self.toy_cfg.clone(), outcome.params).map_err(|e| {
            EvalError::Grpo(Box::new(crate::grpo::GrpoError::Toy(e)))
        })?;
        self.fitted = Some((policy, dataset.schema.clone(), task));
        Ok(())
    }

    fn predict(&mut self, window: &BehavioralWindow) -> Result<Option<Score>, EvalError> {
        let (policy, schema, task) = self.fitted.as_ref().ok_or(EvalError::NotFitted)?;
        two_stage_predict(policy, schema, window, *task, 0.0, 256)
    }
}

/// Evaluation-only predictor over a remote (or any) provider; fitting only
/// captures the schema and task.
pub struct ProviderPredictor {
    provider: Arc<dyn Provider>,
    temperature: f64,
    max_tokens: usize,
    schema: Option<FeatureSchema>,
    task: Option<TaskKind>,
}

impl ProviderPredictor {
    pub fn new(provider: Arc<dyn Provider>, temperature: f64, max_tokens: usize) -> ProviderPredictor {
        ProviderPredictor { provider, temperature, max_tokens, schema: None, task: None }
    }
}

impl Predictor for ProviderPredictor {
    fn fit(&mut self, dataset: &Dataset, _train: &[usize], task: TaskKind) -> Result<(), EvalError> {
        self.schema = Some(dataset.schema.clone());
        self.task = Some(task);
        Ok(())
    }

    fn predict(&mut self, window: &BehavioralWindow) -> Result<Option<Score>, EvalError> {
        let schema = self.schema.as_ref().ok_or(EvalError::NotFitted)?;
        let task = self.task.ok_or(EvalError::NotFitted)?;
        two_stage_predict(
            self.provider.as_ref(),
            schema,
            window,
            task,
            self.temperature,
            self.max_tokens,
        )
    }
}
