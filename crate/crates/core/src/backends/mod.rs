//! Step generation over a small and a large model.

mod http;
mod mock;
mod prompt;

use std::ops::Range;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::router::ModelTag;
use crate::table_trie::Table;
use crate::uncertainty::TokenDistribution;

pub use http::{parse_completion_response, HttpBackend, RetryPolicy};
pub use mock::{load_mock_script, split_words, MockBackend, MockStep, Selector};
pub use prompt::build_prompt;

/// Separator between reasoning steps.
pub const STEP_DELIMITER: &str = "\n\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Finish {
    StepBoundary,
    Answer,
    LengthLimit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepToken {
    pub text: String,
    pub range: Range<usize>,
}

/// One reasoning step as produced by a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedStep {
    pub text: String,
    pub tokens: Vec<StepToken>,
    pub distributions: Vec<TokenDistribution>,
    pub finish: Finish,
    pub model_tag: ModelTag,
    pub token_count: usize,
}

impl GeneratedStep {
    /// Places `tokens` back to back to derive their ranges, then checks the
    /// step invariants.
    pub fn new(
        tokens: Vec<String>,
        distributions: Vec<TokenDistribution>,
        finish: Finish,
        model_tag: ModelTag,
    ) -> Result<Self> {
        if tokens.len() != distributions.len() {
            return Err(Error::input(format!(
                "{} tokens but {} distributions",
                tokens.len(),
                distributions.len()
            )));
        }
        let mut text = String::new();
        let tokens: Vec<StepToken> = tokens
            .into_iter()
            .map(|t| {
                let start = text.len();
                text.push_str(&t);
                StepToken {
                    range: start..text.len(),
                    text: t,
                }
            })
            .collect();
        check_delimiter(&text, finish)?;
        Ok(GeneratedStep {
            token_count: tokens.len(),
            text,
            tokens,
            distributions,
            finish,
            model_tag,
        })
    }

    pub fn token_ranges(&self) -> Vec<Range<usize>> {
        self.tokens.iter().map(|t| t.range.clone()).collect()
    }
}

/// The delimiter may only appear as the final two characters, and must when
/// the step ended on a boundary.
pub(crate) fn check_delimiter(text: &str, finish: Finish) -> Result<()> {
    match text.find(STEP_DELIMITER) {
        Some(at) if at + STEP_DELIMITER.len() != text.len() => {
            return Err(Error::input(format!(
                "step delimiter inside step text at byte {at}"
            )))
        }
        _ => {}
    }
    if finish == Finish::StepBoundary && !text.ends_with(STEP_DELIMITER) {
        return Err(Error::input(
            "step finished on a boundary but does not end with the delimiter",
        ));
    }
    Ok(())
}

/// Everything a backend sees when asked for the next step.
#[derive(Debug, Clone, Copy)]
pub struct StepRequest<'a> {
    pub query_id: &'a str,
    pub table: &'a Table,
    pub question: &'a str,
    /// Completed steps so far, each ending with [`STEP_DELIMITER`].
    pub prior_steps: &'a [String],
    /// Repetition index: seed offset in sweeps, run index in calibration.
    pub sample: u64,
    /// Tightens the backend's own `max_tokens` when a run budget is nearly spent.
    pub max_tokens: Option<usize>,
}

impl StepRequest<'_> {
    /// 1-based position of the step being requested.
    pub fn position(&self) -> usize {
        self.prior_steps.len() + 1
    }
}

pub trait StepBackend: Send + Sync {
    fn tag(&self) -> ModelTag;

    /// Parameter count N, used for FLOPs metering.
    fn param_count(&self) -> f64;

    fn generate_step(&self, req: &StepRequest<'_>) -> Result<GeneratedStep>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

fn default_top_logprobs() -> usize {
    5
}
fn default_temperature() -> f64 {
    0.7
}
fn default_top_p() -> f64 {
    0.95
}
fn default_max_tokens() -> usize {
    16_384
}
fn default_api_key_env() -> String {
    "OPENAI_API_KEY".into()
}
fn default_max_in_flight() -> usize {
    8
}
fn default_timeout_secs() -> u64 {
    600
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: String,
    pub param_count: f64,
    #[serde(default = "default_top_logprobs")]
    pub top_logprobs: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Mock fixture path (JSONL).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

impl BackendConfig {
    pub fn mock(param_count: f64, script: impl Into<PathBuf>) -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            endpoint: None,
            model: String::new(),
            param_count,
            top_logprobs: default_top_logprobs(),
            temperature: default_temperature(),
            top_p: default_top_p(),
            max_tokens: default_max_tokens(),
            seed: None,
            script: Some(script.into()),
            api_key_env: default_api_key_env(),
            max_in_flight: default_max_in_flight(),
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.param_count.is_finite() && self.param_count > 0.0) {
            return Err(Error::input(format!(
                "param_count must be positive, got {}",
                self.param_count
            )));
        }
        if self.top_logprobs == 0 {
            return Err(Error::input("top_logprobs must be at least 1"));
        }
        if self.max_tokens == 0 {
            return Err(Error::input("max_tokens must be positive"));
        }
        match self.kind {
            BackendKind::Http if self.endpoint.is_none() => {
                Err(Error::input("http backend needs an endpoint"))
            }
            BackendKind::Mock if self.script.is_none() => {
                Err(Error::input("mock backend needs a script path"))
            }
            _ => Ok(()),
        }
    }
}

/// Instantiates the backend described by `cfg`.
pub fn build_backend(tag: ModelTag, cfg: &BackendConfig) -> Result<Arc<dyn StepBackend>> {
    cfg.validate()?;
    Ok(match cfg.kind {
        BackendKind::Mock => {
            let path = cfg.script.as_ref().expect("validated");
            Arc::new(load_mock_script(path)?.with_tag(tag).with_param_count(cfg.param_count))
        }
        BackendKind::Http => Arc::new(HttpBackend::new(tag, cfg.clone())?),
    })
}
