//! Client for OpenAI-compatible `/v1/completions` endpoints.

use std::collections::BTreeMap;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{build_prompt, BackendConfig, Finish, GeneratedStep, StepBackend, StepRequest, STEP_DELIMITER};
use crate::error::{Error, Result};
use crate::pipeline::extract_answer;
use crate::router::ModelTag;
use crate::uncertainty::TokenDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_millis(250),
        }
    }
}

/// Counting semaphore bounding concurrent requests on one backend.
#[derive(Debug)]
struct InFlight {
    free: Mutex<usize>,
    cv: Condvar,
}

impl InFlight {
    fn new(n: usize) -> Self {
        InFlight {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> InFlightGuard<'_> {
        let mut free = self.free.lock().expect("semaphore poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("semaphore poisoned");
        }
        *free -= 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore poisoned") += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpBackend {
    tag: ModelTag,
    cfg: BackendConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    retry: RetryPolicy,
    in_flight: InFlight,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("tag", &self.tag)
            .field("endpoint", &self.cfg.endpoint)
            .field("model", &self.cfg.model)
            .finish_non_exhaustive()
    }
}

impl HttpBackend {
    pub fn new(tag: ModelTag, cfg: BackendConfig) -> Result<Self> {
        cfg.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| Error::Backend {
                attempts: 0,
                message: format!("building HTTP client: {e}"),
            })?;
        let api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        Ok(HttpBackend {
            tag,
            in_flight: InFlight::new(cfg.max_in_flight),
            cfg,
            client,
            api_key,
            retry: RetryPolicy::default(),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn request_body(&self, req: &StepRequest<'_>) -> Value {
        let max_tokens = req
            .max_tokens
            .map_or(self.cfg.max_tokens, |m| m.min(self.cfg.max_tokens));
        let mut body = json!({
            "model": self.cfg.model,
            "prompt": build_prompt(req.table, req.question, req.prior_steps),
            "temperature": self.cfg.temperature,
            "top_p": self.cfg.top_p,
            "max_tokens": max_tokens,
            "stop": [STEP_DELIMITER],
            "logprobs": self.cfg.top_logprobs,
        });
        if let Some(seed) = self.cfg.seed {
            body["seed"] = json!(seed.wrapping_add(req.sample));
        }
        body
    }

    fn post(&self, body: &Value) -> Result<String> {
        let endpoint = self.cfg.endpoint.as_deref().expect("validated");
        let _slot = self.in_flight.acquire();
        let mut backoff = self.retry.initial_backoff;
        let mut last_err = String::new();
        for attempt in 1..=self.retry.attempts.max(1) {
            let mut rb = self.client.post(endpoint).json(body);
            if let Some(key) = &self.api_key {
                rb = rb.bearer_auth(key);
            }
            let outcome = rb.send().and_then(|resp| {
                let status = resp.status();
                resp.text().map(|text| (status, text))
            });
            match outcome {
                Ok((status, text)) if status.is_success() => return Ok(text),
                Ok((status, text)) => {
                    return Err(Error::Backend {
                        attempts: attempt,
                        message: format!("HTTP {status}: {}", text.chars().take(500).collect::<String>()),
                    })
                }
                Err(e) => {
                    log::warn!("{} request attempt {attempt} failed: {e}", self.tag);
                    last_err = e.to_string();
                }
            }
            if attempt < self.retry.attempts {
                std::thread::sleep(backoff);
                backoff *= 2;
            }
        }
        Err(Error::Backend {
            attempts: self.retry.attempts.max(1),
            message: last_err,
        })
    }
}

impl StepBackend for HttpBackend {
    fn tag(&self) -> ModelTag {
        self.tag
    }

    fn param_count(&self) -> f64 {
        self.cfg.param_count
    }

    fn generate_step(&self, req: &StepRequest<'_>) -> Result<GeneratedStep> {
        let body = self.request_body(req);
        let text = self.post(&body)?;
        parse_completion_response(&text, self.cfg.top_logprobs, self.tag)
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    text: String,
    #[serde(default)]
    finish_reason: Option<String>,
    /// vLLM-style: the matched stop string, an EOS token id, or null.
    /// Absent and null mean different things, hence the wrapper.
    #[serde(default, deserialize_with = "present")]
    stop_reason: Option<Value>,
    #[serde(default)]
    logprobs: Option<Logprobs>,
}

fn present<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<Value>, D::Error> {
    Value::deserialize(d).map(Some)
}

#[derive(Deserialize)]
struct Logprobs {
    tokens: Vec<String>,
    #[serde(default)]
    token_logprobs: Vec<Option<f64>>,
    #[serde(default)]
    top_logprobs: Option<Vec<Option<BTreeMap<String, f64>>>>,
}

fn position_distribution(lp: &Logprobs, i: usize, top_k: usize) -> Result<TokenDistribution> {
    let top = lp.top_logprobs.as_ref().and_then(|t| t.get(i)).and_then(Option::as_ref);
    let mut entries: Vec<(String, f64)> = match top {
        Some(map) => map
            .iter()
            .map(|(tok, &l)| (tok.clone(), l.exp().min(1.0)))
            .filter(|(_, p)| *p > 0.0 && p.is_finite())
            .collect(),
        None => match lp.token_logprobs.get(i).copied().flatten() {
            Some(l) => vec![(lp.tokens[i].clone(), l.exp().min(1.0))],
            None => return Err(Error::Protocol(format!("no logprobs for token {i}"))),
        },
    };
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.truncate(top_k);
    if entries.is_empty() {
        return Err(Error::Protocol(format!("empty top_logprobs for token {i}")));
    }
    let mass: f64 = entries.iter().map(|e| e.1).sum();
    if mass > 1.0 {
        // server-side rounding of near-deterministic positions
        entries.iter_mut().for_each(|e| e.1 /= mass);
    }
    TokenDistribution::new(entries, false).map_err(|e| Error::Protocol(e.to_string()))
}

/// Converts a completions response body into a step.
///
/// Token texts are placed back to back to form the step. When the server
/// stopped on the step delimiter the delimiter is re-attached to the final
/// token, since servers strip matched stop sequences.
pub fn parse_completion_response(body: &str, top_k: usize, tag: ModelTag) -> Result<GeneratedStep> {
    let resp: CompletionResponse =
        serde_json::from_str(body).map_err(|e| Error::Protocol(format!("bad response: {e}")))?;
    let choice = resp
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| Error::Protocol("response has no choices".into()))?;
    let lp = choice
        .logprobs
        .ok_or_else(|| Error::Protocol("response carries no logprobs".into()))?;
    if let Some(top) = &lp.top_logprobs {
        if top.len() != lp.tokens.len() {
            return Err(Error::Protocol(format!(
                "{} tokens but {} top_logprobs entries",
                lp.tokens.len(),
                top.len()
            )));
        }
    } else if lp.token_logprobs.len() != lp.tokens.len() {
        return Err(Error::Protocol("logprobs do not cover every token".into()));
    }

    let mut tokens = lp.tokens.clone();
    let mut dists = (0..tokens.len())
        .map(|i| position_distribution(&lp, i, top_k))
        .collect::<Result<Vec<_>>>()?;

    let joined = tokens.concat();
    if joined != choice.text {
        log::debug!("token strings do not reproduce choice text; using token concatenation");
    }

    let finish = if let Some(at) = joined.find(STEP_DELIMITER) {
        cut_tokens(&mut tokens, &mut dists, at + STEP_DELIMITER.len());
        Finish::StepBoundary
    } else {
        let finish = match choice.finish_reason.as_deref() {
            Some("length") => Finish::LengthLimit,
            _ => match &choice.stop_reason {
                Some(Value::String(_)) => Finish::StepBoundary,
                Some(_) => Finish::Answer,
                None if extract_answer(&joined).is_some() => Finish::Answer,
                None => Finish::StepBoundary,
            },
        };
        if finish == Finish::StepBoundary {
            match tokens.last_mut() {
                Some(last) => last.push_str(STEP_DELIMITER),
                None => {
                    tokens.push(STEP_DELIMITER.to_string());
                    dists.push(TokenDistribution::certain(STEP_DELIMITER));
                }
            }
        }
        finish
    };

    GeneratedStep::new(tokens, dists, finish, tag).map_err(|e| Error::Protocol(e.to_string()))
}

/// Keeps the prefix of `tokens` covering `end` bytes, trimming the last one.
fn cut_tokens(tokens: &mut Vec<String>, dists: &mut Vec<TokenDistribution>, end: usize) {
    let mut start = 0;
    for i in 0..tokens.len() {
        let len = tokens[i].len();
        if start + len >= end {
            tokens[i].truncate(end - start);
            tokens.truncate(i + 1);
            dists.truncate(i + 1);
            return;
        }
        start += len;
    }
}
