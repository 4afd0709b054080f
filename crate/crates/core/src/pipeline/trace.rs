use serde::{Deserialize, Serialize};

use crate::backends::{Finish, GeneratedStep};
use crate::error::{Error, Result};
use crate::router::ModelTag;
use crate::uncertainty::TokenDistribution;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Answer,
    StepLimit,
    TokenLimit,
}

/// A first-step generation that was thrown away and redone by the large model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscardedStep {
    pub model_tag: ModelTag,
    pub text: String,
    pub token_count: usize,
    pub d_final: Option<f64>,
    pub flops: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based.
    pub index: usize,
    pub model_tag: ModelTag,
    pub text: String,
    pub finish: Finish,
    pub token_count: usize,
    pub tokens: Vec<String>,
    pub distributions: Vec<TokenDistribution>,
    pub entropies: Vec<f64>,
    pub n_tab: usize,
    pub n_text: usize,
    pub phi_tab: Option<f64>,
    pub phi_text: Option<f64>,
    pub d_tab: Option<f64>,
    pub d_text: Option<f64>,
    pub d_final: Option<f64>,
    /// Model chosen for step `index + 1`; absent on the terminal step.
    pub next_model: Option<ModelTag>,
    pub regenerated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discarded: Option<DiscardedStep>,
    pub flops: f64,
}

impl StepRecord {
    /// Rebuilds the step as a backend would have returned it.
    pub fn to_generated(&self) -> Result<GeneratedStep> {
        GeneratedStep::new(self.tokens.clone(), self.distributions.clone(), self.finish, self.model_tag)
    }

    /// FLOPs of this step plus any discarded generation it replaced.
    pub fn total_flops(&self) -> f64 {
        self.flops + self.discarded.as_ref().map_or(0.0, |d| d.flops)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub schema: u32,
    pub query_id: String,
    pub table_id: String,
    pub question: String,
    pub steps: Vec<StepRecord>,
    pub final_answer: Option<String>,
    pub total_flops: f64,
    pub terminated_by: Termination,
    /// Repetition index the run was generated with.
    #[serde(default)]
    pub sample: u64,
}

impl Trace {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("traces serialize")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let t: Trace = serde_json::from_str(line).map_err(|e| Error::parse(None, e.to_string()))?;
        if t.schema != TRACE_SCHEMA_VERSION {
            return Err(Error::parse(
                None,
                format!("trace schema {} unsupported (expected {TRACE_SCHEMA_VERSION})", t.schema),
            ));
        }
        Ok(t)
    }

    /// Parses a JSONL trace file body; blank lines are skipped.
    pub fn parse_jsonl(s: &str) -> Result<Vec<Self>> {
        s.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                Trace::from_json_line(l).map_err(|e| match e {
                    Error::Parse { message, .. } => Error::parse(Some(i + 1), message),
                    other => other,
                })
            })
            .collect()
    }

    pub fn to_jsonl(traces: &[Trace]) -> String {
        traces.iter().map(|t| t.to_json_line() + "\n").collect()
    }

    pub fn step_texts(&self) -> Vec<String> {
        self.steps.iter().map(|s| s.text.clone()).collect()
    }

    pub fn lrm_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.model_tag == ModelTag::Large).count()
    }
}
