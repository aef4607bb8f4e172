//! Chat-completions HTTP provider (evaluation only — never trainable).

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Completion, Provider, ProviderError, SampleRequest};

/// Environment variable holding the API key.
pub const API_KEY_ENV: &str = "SEMLOOP_API_KEY";

/// Remote endpoint configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    /// Reasoning-capable providers must emit think tags; see parsing.
    #[serde(default = "default_true")]
    pub require_think_tags: bool,
    /// Whether the endpoint honors `n`-sampling in one request.
    #[serde(default = "default_true")]
    pub supports_n: bool,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: usize,
}

fn default_temperature() -> f64 {
    1.0
}

fn default_max_tokens() -> usize {
    1024
}

fn default_true() -> bool {
    true
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_max_retries() -> usize {
    3
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    n: usize,
    temperature: f64,
    max_tokens: usize,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

pub struct HttpProvider {
    cfg: ProviderConfig,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(cfg: ProviderConfig) -> Result<HttpProvider, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(HttpProvider { cfg, client })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.cfg
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'))
    }

    fn post_once(&self, prompt: &str, n: usize, temperature: f64, max_tokens: usize)
        -> Result<Vec<Completion>, ProviderError>
    {
        let body = ChatRequest {
            model: &self.cfg.model,
            messages: vec![ChatMessage { role: "user", content: prompt }],
            n,
            temperature,
            max_tokens,
        };
        let mut request = self.client.post(self.endpoint()).json(&body);
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            if !key.is_empty() {
                request = request.bearer_auth(key);
            }
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout
            } else {
                ProviderError::Transport(e.to_string())
            }
        })?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::Transport(format!("http {status}: {text}")));
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| ProviderError::MalformedResponse(format!("{e}: {text}")))?;
        if parsed.choices.len() < n {
            return Err(ProviderError::MalformedResponse(format!(
                "asked for {n} choices, got {}",
                parsed.choices.len()
            )));
        }
        Ok(parsed
            .choices
            .into_iter()
            .take(n)
            .map(|c| Completion::plain(c.message.content))
            .collect())
    }

    fn post_with_retry(&self, prompt: &str, n: usize) -> Result<Vec<Completion>, ProviderError> {
        let mut attempt = 0;
        loop {
            match self.post_once(prompt, n, self.cfg.temperature, self.cfg.max_tokens) {
                Ok(out) => return Ok(out),
                Err(e @ (ProviderError::Transport(_) | ProviderError::Timeout))
                    if attempt < self.cfg.max_retries =>
                {
                    let backoff = Duration::from_millis(200 * (1 << attempt));
                    std::thread::sleep(backoff);
                    attempt += 1;
                    let _ = e;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

impl Provider for HttpProvider {
    fn name(&self) -> &str {
        "provider"
    }

    fn sample(&self, req: &SampleRequest) -> Result<Vec<Completion>, ProviderError> {
        if self.cfg.supports_n {
            self.post_with_retry(&req.prompt, req.n)
        } else {
            let mut out = Vec::with_capacity(req.n);
            for _ in 0..req.n {
                out.extend(self.post_with_retry(&req.prompt, 1)?);
            }
            Ok(out)
        }
    }

    fn require_think_tags(&self) -> bool {
        self.cfg.require_think_tags
    }
}
