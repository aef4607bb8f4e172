//! Text-generating policies behind a uniform sampling contract.
//!
//! Three implementations: a scripted mock for tests, a remote
//! chat-completions provider for evaluation-only runs, and a trainable
//! two-decision categorical toy policy with analytic gradients.

mod http;
mod mock;
mod toy;

pub use http::{HttpProvider, ProviderConfig, API_KEY_ENV};
pub use mock::MockProvider;
pub use toy::{
    grad_log_softmax, toy_apply_update, toy_kl, ReferencePolicy, TemplateSet, ToyConfig,
    ToyError, ToyPolicy, ToyPolicyParams, VisitedContexts,
};

use thiserror::Error;

/// A request for `n` completions of one prompt.
#[derive(Debug, Clone)]
pub struct SampleRequest {
    pub prompt: String,
    pub n: usize,
    pub temperature: f64,
    pub max_tokens: usize,
    pub seed: Option<u64>,
}

impl SampleRequest {
    pub fn new(prompt: impl Into<String>, n: usize) -> SampleRequest {
        SampleRequest { prompt: prompt.into(), n, temperature: 1.0, max_tokens: 1024, seed: None }
    }

    pub fn with_temperature(mut self, t: f64) -> SampleRequest {
        self.temperature = t;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> SampleRequest {
        self.seed = Some(seed);
        self
    }
}

/// One recorded sampling decision of a trainable policy: which categorical
/// context was active and which choice was drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub context: usize,
    pub choice: usize,
}

/// A sampled completion. Trainable policies attach their log-probability
/// and the decisions that produced the text; other providers leave both
/// unset.
#[derive(Debug, Clone)]
pub struct Completion {
    pub text: String,
    pub logprob: Option<f64>,
    pub decisions: Option<Vec<Decision>>,
}

impl Completion {
    pub fn plain(text: impl Into<String>) -> Completion {
        Completion { text: text.into(), logprob: None, decisions: None }
    }
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("scripted provider queue exhausted")]
    Exhausted,
    #[error("prompt not parseable by the toy policy: {0}")]
    UnparseablePrompt(String),
}

/// The sampling contract every policy implementation satisfies.
pub trait Provider: Send + Sync {
    fn name(&self) -> &str;

    /// Returns exactly `req.n` completions. Deterministic under a fixed
    /// `req.seed` for the local providers.
    fn sample(&self, req: &SampleRequest) -> Result<Vec<Completion>, ProviderError>;

    /// Whether completions from this provider must carry reasoning tags.
    fn require_think_tags(&self) -> bool {
        false
    }
}
