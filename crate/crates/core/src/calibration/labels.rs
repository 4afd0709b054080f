//! Boundary labels by suffix replacement.
//!
//! For a trace the large model got right, the small model rewrites ever
//! longer suffixes. The shortest suffix whose rewrite reliably breaks the
//! answer marks the last kept step as the failure boundary.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::CalibrationSample;
use crate::backends::{Finish, StepBackend, StepRequest};
use crate::error::{Error, Result};
use crate::eval::Evaluator;
use crate::pipeline::{AnswerPatterns, Query, Trace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingConfig {
    /// Upper bound on the suffix length searched; M = min(T − 1, max_suffix).
    #[serde(default = "default_max_suffix")]
    pub max_suffix: usize,
    /// Rewrites per suffix length.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Fraction of rewrites that must fail for a flip to count as stable.
    #[serde(default = "default_flip_ratio")]
    pub flip_ratio: f64,
    /// Total steps a rewritten run may reach, prefix included.
    #[serde(default = "default_step_limit")]
    pub step_limit: usize,
    /// Total tokens a rewritten run may use, prefix included.
    #[serde(default = "default_token_budget")]
    pub token_budget: usize,
    #[serde(default)]
    pub answer_patterns: AnswerPatterns,
}

fn default_max_suffix() -> usize {
    8
}
fn default_repeats() -> usize {
    5
}
fn default_flip_ratio() -> f64 {
    0.8
}
fn default_step_limit() -> usize {
    128
}
fn default_token_budget() -> usize {
    16_384
}

impl Default for LabelingConfig {
    fn default() -> Self {
        LabelingConfig {
            max_suffix: default_max_suffix(),
            repeats: default_repeats(),
            flip_ratio: default_flip_ratio(),
            step_limit: default_step_limit(),
            token_budget: default_token_budget(),
            answer_patterns: AnswerPatterns::default(),
        }
    }
}

impl LabelingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_suffix == 0 || self.repeats == 0 {
            return Err(Error::input("max_suffix and repeats must be positive"));
        }
        if !(self.flip_ratio > 0.0 && self.flip_ratio <= 1.0) {
            return Err(Error::input(format!("flip_ratio must be in (0, 1], got {}", self.flip_ratio)));
        }
        Ok(())
    }

    /// Failed rewrites needed for a stable flip: ⌈ratio · repeats⌉.
    pub fn flips_needed(&self) -> usize {
        // tolerance keeps 0.7 * 10 from rounding up to 8
        (self.flip_ratio * self.repeats as f64 - 1e-9).ceil().max(1.0) as usize
    }
}

/// A large-model trace paired with the query it answered.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelInput {
    pub trace: Trace,
    pub query: Query,
}

/// Where a trace's boundary landed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub trace_id: String,
    pub steps: usize,
    /// Shortest suffix length with a stable flip.
    pub suffix: usize,
    /// 1-based index of the positive step, `steps - suffix`.
    pub step: usize,
    /// Failed rewrites at each tried suffix length, in order.
    pub failures: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelingOutcome {
    pub samples: Vec<CalibrationSample>,
    pub boundaries: Vec<Boundary>,
    /// Traces searched to M without a stable flip.
    pub excluded: Vec<String>,
    pub warnings: Vec<String>,
}

enum TraceResult {
    Labeled(Boundary, Vec<CalibrationSample>, Vec<String>),
    Excluded(String),
    Skipped(String),
}

/// Keeps traces where the large model is right and the small model, if a
/// small-model trace for the same query is given, is wrong.
pub fn retain_for_calibration(
    lrm: &[Trace],
    srm: &[Trace],
    queries: &[Query],
    evaluator: &dyn Evaluator,
) -> Vec<LabelInput> {
    let correct = |t: &Trace, q: &Query| match (&t.final_answer, &q.answer) {
        (Some(p), Some(g)) => evaluator.is_correct(p, g),
        _ => false,
    };
    lrm.iter()
        .filter_map(|t| {
            let q = queries.iter().find(|q| q.id == t.query_id)?;
            if !correct(t, q) {
                return None;
            }
            let small_right = srm
                .iter()
                .filter(|s| s.query_id == t.query_id)
                .any(|s| correct(s, q));
            (!small_right).then(|| LabelInput {
                trace: t.clone(),
                query: q.clone(),
            })
        })
        .collect()
}

/// Lets the small model finish a run from `prefix`; true if the answer is wrong.
fn rewrite_fails(
    srm: &dyn StepBackend,
    input: &LabelInput,
    prefix_len: usize,
    sample: u64,
    evaluator: &dyn Evaluator,
    cfg: &LabelingConfig,
) -> Result<bool> {
    let q = &input.query;
    let gold = q.answer.as_deref().unwrap_or_default();
    let mut prior: Vec<String> = input.trace.steps[..prefix_len].iter().map(|s| s.text.clone()).collect();
    let mut used: usize = input.trace.steps[..prefix_len].iter().map(|s| s.token_count).sum();
    while prior.len() < cfg.step_limit && used < cfg.token_budget {
        let step = srm.generate_step(&StepRequest {
            query_id: &q.id,
            table: &q.table,
            question: &q.question,
            prior_steps: &prior,
            sample,
            max_tokens: Some(cfg.token_budget - used),
        })?;
        used += step.token_count;
        match step.finish {
            Finish::StepBoundary => prior.push(step.text),
            Finish::Answer => {
                let answer = cfg.answer_patterns.extract(&step.text);
                return Ok(!answer.is_some_and(|a| evaluator.is_correct(&a, gold)));
            }
            Finish::LengthLimit => break,
        }
    }
    Ok(true)
}

fn label_one(
    input: &LabelInput,
    srm: &dyn StepBackend,
    evaluator: &dyn Evaluator,
    cfg: &LabelingConfig,
) -> Result<TraceResult> {
    let trace = &input.trace;
    let id = trace.query_id.clone();
    let t = trace.steps.len();
    if t < 2 {
        return Ok(TraceResult::Skipped(format!("{id}: {t} step(s), nothing to replace")));
    }
    if input.query.answer.is_none() {
        return Ok(TraceResult::Skipped(format!("{id}: no gold answer")));
    }
    let max_m = (t - 1).min(cfg.max_suffix);
    let needed = cfg.flips_needed();
    let mut failures = Vec::new();
    for m in 1..=max_m {
        let mut failed = 0;
        for r in 0..cfg.repeats {
            let sample = ((m - 1) * cfg.repeats + r) as u64;
            if rewrite_fails(srm, input, t - m, sample, evaluator, cfg)? {
                failed += 1;
            }
        }
        failures.push(failed);
        if failed >= needed {
            let b = t - m;
            let mut samples = Vec::with_capacity(b);
            let mut warnings = Vec::new();
            for s in &trace.steps[..b] {
                if s.phi_tab.is_none() && s.phi_text.is_none() {
                    warnings.push(format!("{id}: step {} has no tokens, not sampled", s.index));
                    continue;
                }
                samples.push(CalibrationSample {
                    trace_id: id.clone(),
                    step_index: s.index,
                    phi_tab: s.phi_tab,
                    phi_text: s.phi_text,
                    label: s.index == b,
                });
            }
            let boundary = Boundary {
                trace_id: id,
                steps: t,
                suffix: m,
                step: b,
                failures,
            };
            return Ok(TraceResult::Labeled(boundary, samples, warnings));
        }
    }
    Ok(TraceResult::Excluded(id))
}

/// Labels every retained trace. Traces run in parallel on the current rayon
/// pool; output order follows input order.
pub fn build_labels(
    inputs: &[LabelInput],
    srm: &dyn StepBackend,
    evaluator: &dyn Evaluator,
    cfg: &LabelingConfig,
) -> Result<LabelingOutcome> {
    cfg.validate()?;
    let results: Vec<Result<TraceResult>> = inputs
        .par_iter()
        .map(|input| label_one(input, srm, evaluator, cfg))
        .collect();
    let mut out = LabelingOutcome::default();
    for r in results {
        match r? {
            TraceResult::Labeled(b, samples, warnings) => {
                out.boundaries.push(b);
                out.samples.extend(samples);
                out.warnings.extend(warnings);
            }
            TraceResult::Excluded(id) => out.excluded.push(id),
            TraceResult::Skipped(w) => out.warnings.push(w),
        }
    }
    Ok(out)
}
