//! Scripted backend replaying steps from a JSONL fixture.
//!
//! Each line is one step:
//!
//! ```json
//! {"step_text": "Look at row 2.\n\n", "probs": [[0.9, 0.05], [1.0], ...],
//!  "finish": "step_boundary"}
//! ```
//!
//! Optional fields: `tokens` (token strings, must concatenate to
//! `step_text`; by default the text is split after each whitespace run),
//! `full` (bool, or one bool per token; default true), `candidates`
//! (candidate token names per position), and the selectors `query`,
//! `at_step`, `prev` and `sample`.
//!
//! A script without selectors replays line by line; every (query, sample)
//! pair has its own cursor. A script with selectors answers each request with
//! the first line whose selectors all match it.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{check_delimiter, Finish, GeneratedStep, StepBackend, StepRequest};
use crate::error::{Error, Result};
use crate::router::ModelTag;
use crate::uncertainty::TokenDistribution;

/// Request predicates for keyed scripts. Absent fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selector {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    /// 1-based position of the requested step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_step: Option<usize>,
    /// Exact text of the step immediately before the requested one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prev: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<u64>,
}

impl Selector {
    fn is_empty(&self) -> bool {
        *self == Selector::default()
    }

    fn matches(&self, req: &StepRequest<'_>) -> bool {
        self.query.as_deref().is_none_or(|q| q == req.query_id)
            && self.at_step.is_none_or(|p| p == req.position())
            && self
                .prev
                .as_deref()
                .is_none_or(|p| req.prior_steps.last().map(String::as_str) == Some(p))
            && self.sample.is_none_or(|s| s == req.sample)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum FullFlag {
    All(bool),
    PerToken(Vec<bool>),
}

/// One fixture line as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FixtureLine {
    step_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<String>>,
    probs: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    full: Option<FullFlag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    candidates: Option<Vec<Vec<String>>>,
    finish: Finish,
    #[serde(flatten)]
    selector: Selector,
}

/// A validated scripted step.
#[derive(Debug, Clone, PartialEq)]
pub struct MockStep {
    pub tokens: Vec<String>,
    pub distributions: Vec<TokenDistribution>,
    pub finish: Finish,
    pub selector: Selector,
}

/// Splits text after each whitespace run: `"a b\n\n"` becomes `["a ", "b\n\n"]`.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut prev_ws = false;
    for (i, c) in text.char_indices() {
        let ws = c.is_whitespace();
        if prev_ws && !ws {
            out.push(text[start..i].to_string());
            start = i;
        }
        prev_ws = ws;
    }
    if start < text.len() {
        out.push(text[start..].to_string());
    }
    out
}

impl MockStep {
    pub fn new(
        tokens: Vec<String>,
        distributions: Vec<TokenDistribution>,
        finish: Finish,
        selector: Selector,
    ) -> Result<Self> {
        // validates tiling and delimiter placement
        GeneratedStep::new(tokens.clone(), distributions.clone(), finish, ModelTag::Small)?;
        Ok(MockStep {
            tokens,
            distributions,
            finish,
            selector,
        })
    }

    /// Same step text, one token per whitespace-delimited chunk, with the given
    /// per-token distributions.
    pub fn from_text(text: &str, distributions: Vec<TokenDistribution>, finish: Finish) -> Result<Self> {
        Self::new(split_words(text), distributions, finish, Selector::default())
    }

    pub fn with_selector(mut self, selector: Selector) -> Self {
        self.selector = selector;
        self
    }

    pub fn text(&self) -> String {
        self.tokens.concat()
    }

    fn from_line(line: FixtureLine) -> Result<Self> {
        let tokens = match line.tokens {
            Some(t) => {
                if t.concat() != line.step_text {
                    return Err(Error::input("tokens do not concatenate to step_text"));
                }
                t
            }
            None => split_words(&line.step_text),
        };
        check_delimiter(&line.step_text, line.finish)?;
        if line.probs.len() != tokens.len() {
            return Err(Error::input(format!(
                "{} tokens but {} probability lists",
                tokens.len(),
                line.probs.len()
            )));
        }
        let full = |i: usize| -> Result<bool> {
            match &line.full {
                None => Ok(true),
                Some(FullFlag::All(b)) => Ok(*b),
                Some(FullFlag::PerToken(v)) => v
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::input("`full` list shorter than token list")),
            }
        };
        let mut distributions = Vec::with_capacity(tokens.len());
        for (i, probs) in line.probs.iter().enumerate() {
            let dist = match &line.candidates {
                Some(c) => {
                    let names = c
                        .get(i)
                        .filter(|n| n.len() == probs.len())
                        .ok_or_else(|| Error::input(format!("candidate list {i} does not match probs")))?;
                    TokenDistribution::new(names.iter().cloned().zip(probs.iter().copied()).collect(), full(i)?)?
                }
                None => TokenDistribution::from_probs(probs, full(i)?)?,
            };
            distributions.push(dist);
        }
        MockStep::new(tokens, distributions, line.finish, line.selector)
    }

    fn to_line(&self) -> FixtureLine {
        let full: Vec<bool> = self.distributions.iter().map(TokenDistribution::is_full).collect();
        let numbered = self.distributions.iter().all(|d| {
            d.entries()
                .iter()
                .enumerate()
                .all(|(i, (name, _))| *name == i.to_string())
        });
        FixtureLine {
            step_text: self.text(),
            tokens: Some(self.tokens.clone()),
            probs: self.distributions.iter().map(|d| d.probs().collect()).collect(),
            full: Some(if full.iter().all(|f| *f) {
                FullFlag::All(true)
            } else {
                FullFlag::PerToken(full)
            }),
            candidates: (!numbered).then(|| {
                self.distributions
                    .iter()
                    .map(|d| d.entries().iter().map(|(n, _)| n.clone()).collect())
                    .collect()
            }),
            finish: self.finish,
            selector: self.selector.clone(),
        }
    }
}

impl From<&GeneratedStep> for MockStep {
    fn from(step: &GeneratedStep) -> Self {
        MockStep {
            tokens: step.tokens.iter().map(|t| t.text.clone()).collect(),
            distributions: step.distributions.clone(),
            finish: step.finish,
            selector: Selector::default(),
        }
    }
}

#[derive(Debug)]
pub struct MockBackend {
    steps: Vec<MockStep>,
    keyed: bool,
    cursors: Mutex<HashMap<(String, u64), usize>>,
    tag: ModelTag,
    param_count: f64,
}

impl MockBackend {
    pub fn new(steps: Vec<MockStep>) -> Self {
        let keyed = steps.iter().any(|s| !s.selector.is_empty());
        MockBackend {
            steps,
            keyed,
            cursors: Mutex::new(HashMap::new()),
            tag: ModelTag::Small,
            param_count: 1.0,
        }
    }

    pub fn with_tag(mut self, tag: ModelTag) -> Self {
        self.tag = tag;
        self
    }

    pub fn with_param_count(mut self, n: f64) -> Self {
        self.param_count = n;
        self
    }

    pub fn steps(&self) -> &[MockStep] {
        &self.steps
    }

    /// Parses a JSONL fixture. Blank lines are skipped; errors carry the
    /// 1-based line number.
    pub fn from_jsonl_str(s: &str) -> Result<Self> {
        let mut steps = Vec::new();
        for (i, line) in s.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: FixtureLine =
                serde_json::from_str(line).map_err(|e| Error::parse(Some(i + 1), e.to_string()))?;
            steps.push(MockStep::from_line(parsed).map_err(|e| Error::parse(Some(i + 1), e.to_string()))?);
        }
        Ok(MockBackend::new(steps))
    }

    /// Serializes steps in fixture format, one JSON object per line.
    pub fn to_jsonl(steps: &[MockStep]) -> String {
        let mut out = String::new();
        for s in steps {
            out.push_str(&serde_json::to_string(&s.to_line()).expect("fixture lines serialize"));
            out.push('\n');
        }
        out
    }

    fn pick(&self, req: &StepRequest<'_>) -> Result<&MockStep> {
        if self.keyed {
            return self.steps.iter().find(|s| s.selector.matches(req)).ok_or_else(|| {
                Error::FixtureExhausted(format!(
                    "no scripted step for query {:?}, step {}, sample {}",
                    req.query_id,
                    req.position(),
                    req.sample
                ))
            });
        }
        let mut cursors = self.cursors.lock().expect("cursor lock poisoned");
        let cursor = cursors.entry((req.query_id.to_string(), req.sample)).or_insert(0);
        let step = self.steps.get(*cursor).ok_or_else(|| {
            Error::FixtureExhausted(format!(
                "script has {} steps; call {} for query {:?}",
                self.steps.len(),
                *cursor + 1,
                req.query_id
            ))
        })?;
        *cursor += 1;
        Ok(step)
    }
}

impl StepBackend for MockBackend {
    fn tag(&self) -> ModelTag {
        self.tag
    }

    fn param_count(&self) -> f64 {
        self.param_count
    }

    fn generate_step(&self, req: &StepRequest<'_>) -> Result<GeneratedStep> {
        let s = self.pick(req)?;
        let mut step = GeneratedStep::new(s.tokens.clone(), s.distributions.clone(), s.finish, self.tag)?;
        if let Some(limit) = req.max_tokens {
            if step.token_count > limit {
                truncate(&mut step, limit);
            }
        }
        Ok(step)
    }
}

fn truncate(step: &mut GeneratedStep, limit: usize) {
    step.tokens.truncate(limit);
    step.distributions.truncate(limit);
    step.token_count = limit;
    step.text.truncate(step.tokens.last().map_or(0, |t| t.range.end));
    step.finish = Finish::LengthLimit;
}

pub fn load_mock_script(path: impl AsRef<Path>) -> Result<MockBackend> {
    let path = path.as_ref();
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MockBackend::from_jsonl_str(&s)
}
