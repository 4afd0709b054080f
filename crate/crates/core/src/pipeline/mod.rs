//! The routed generation loop.
//!
//! 1. The small model writes step 1.
//! 2. If step 1's fused risk exceeds τ, it is discarded and rewritten by the
//!    large model.
//! 3. Each completed step's risk picks the model for the following step.
//! 4. The loop ends on an answer, the step limit, or the token budget.

mod answer;
mod config;
mod flops;
mod trace;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backends::{build_backend, Finish, GeneratedStep, StepBackend, StepRequest};
use crate::calibration::RiskMapping;
use crate::error::Result;
use crate::router::{decide, score, ModelTag, ScoreMode, StepRisk};
use crate::table_trie::{Table, TableTrie, TokenMask};
use crate::uncertainty::{step_uncertainty, token_entropy, StepUncertainty};

pub use answer::{extract_answer, AnswerPatterns};
pub use config::{Mappings, RunConfig, SweepSettings, TrieSettings};
pub use flops::meter_flops;
pub use trace::{DiscardedStep, StepRecord, Termination, Trace, TRACE_SCHEMA_VERSION};

/// One question over one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub table: Table,
    pub question: String,
    /// Gold answer, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

/// Everything computed from one step to make a routing decision.
#[derive(Debug, Clone, PartialEq)]
pub struct StepScore {
    pub mask: TokenMask,
    pub entropies: Vec<f64>,
    pub uncertainty: StepUncertainty,
    /// Absent only for steps with no tokens.
    pub risk: Option<StepRisk>,
}

/// Mask, entropies, group means, calibrated risks and fused score for a step.
pub fn score_step(
    trie: &TableTrie,
    step: &GeneratedStep,
    tab: &RiskMapping,
    text: &RiskMapping,
    mode: ScoreMode,
) -> Result<StepScore> {
    let mask = trie.match_step(&step.text, &step.token_ranges())?;
    let entropies: Vec<f64> = step.distributions.iter().map(token_entropy).collect();
    let uncertainty = step_uncertainty(&entropies, &mask)?;
    let risk = if step.token_count == 0 {
        None
    } else {
        Some(score(mode, &uncertainty, tab, text)?)
    };
    Ok(StepScore {
        mask,
        entropies,
        uncertainty,
        risk,
    })
}

/// How the next model is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum RoutePolicy {
    /// Risk-threshold routing with first-step refinement.
    Threshold { tau: f64 },
    /// Every step from one model; the single-model reference points.
    Fixed { model: ModelTag },
    /// Each step goes to the large model with probability `p_large`,
    /// independent of any score.
    Random { p_large: f64 },
}

impl RoutePolicy {
    pub fn threshold(tau: f64) -> Self {
        RoutePolicy::Threshold { tau }
    }
}

/// Stable 64-bit FNV-1a, used to derive per-query RNG seeds.
fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in *part {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub struct Pipeline {
    cfg: RunConfig,
    srm: Arc<dyn StepBackend>,
    lrm: Arc<dyn StepBackend>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl Pipeline {
    pub fn new(cfg: RunConfig, srm: Arc<dyn StepBackend>, lrm: Arc<dyn StepBackend>) -> Self {
        Pipeline { cfg, srm, lrm }
    }

    /// Validates the config and builds both backends from it.
    pub fn from_config(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let srm = build_backend(ModelTag::Small, &cfg.srm)?;
        let lrm = build_backend(ModelTag::Large, &cfg.lrm)?;
        Ok(Pipeline::new(cfg, srm, lrm))
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn backend(&self, tag: ModelTag) -> &Arc<dyn StepBackend> {
        match tag {
            ModelTag::Small => &self.srm,
            ModelTag::Large => &self.lrm,
        }
    }

    /// Routed run at the configured τ.
    pub fn run_query(&self, query: &Query) -> Result<Trace> {
        self.run_with(query, RoutePolicy::threshold(self.cfg.tau), 0)
    }

    pub fn run_with(&self, query: &Query, policy: RoutePolicy, sample: u64) -> Result<Trace> {
        let cfg = &self.cfg;
        let trie = TableTrie::from_table(&query.table, cfg.trie.include_headers);
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(&[
            &cfg.seed.to_le_bytes(),
            &sample.to_le_bytes(),
            query.id.as_bytes(),
        ]));
        let mut pick_random = |p: f64| {
            if rng.gen_bool(p.clamp(0.0, 1.0)) {
                ModelTag::Large
            } else {
                ModelTag::Small
            }
        };

        let mut prior: Vec<String> = Vec::new();
        let mut steps: Vec<StepRecord> = Vec::new();
        let mut tokens_used = 0usize;
        let mut next = match policy {
            RoutePolicy::Threshold { .. } => ModelTag::Small,
            RoutePolicy::Fixed { model } => model,
            RoutePolicy::Random { p_large } => pick_random(p_large),
        };

        let terminated_by = loop {
            if steps.len() >= cfg.step_limit {
                break Termination::StepLimit;
            }
            if tokens_used >= cfg.token_budget {
                break Termination::TokenLimit;
            }

            let generate = |tag: ModelTag, prior: &[String], used: usize| {
                self.backend(tag).generate_step(&StepRequest {
                    query_id: &query.id,
                    table: &query.table,
                    question: &query.question,
                    prior_steps: prior,
                    sample,
                    max_tokens: Some(cfg.token_budget - used),
                })
            };
            let score_of = |step: &GeneratedStep| {
                score_step(&trie, step, &cfg.mappings.tab, &cfg.mappings.text, cfg.score_mode)
            };

            let mut step = generate(next, &prior, tokens_used)?;
            tokens_used += step.token_count;
            let mut scored = score_of(&step)?;
            let mut discarded = None;

            if let RoutePolicy::Threshold { tau } = policy {
                let d1 = scored.risk.map(|r| r.d_final);
                if steps.is_empty() && d1.is_some_and(|d| d > tau) && tokens_used < cfg.token_budget {
                    discarded = Some(DiscardedStep {
                        model_tag: step.model_tag,
                        flops: meter_flops(self.backend(step.model_tag).param_count(), step.token_count),
                        text: std::mem::take(&mut step.text),
                        token_count: step.token_count,
                        d_final: d1,
                    });
                    step = generate(ModelTag::Large, &prior, tokens_used)?;
                    tokens_used += step.token_count;
                    scored = score_of(&step)?;
                }
            }

            let terminal = step.finish != Finish::StepBoundary;
            let next_model = (!terminal).then(|| match policy {
                RoutePolicy::Threshold { tau } => scored
                    .risk
                    .map_or(ModelTag::Small, |r| decide(r.d_final, tau)),
                RoutePolicy::Fixed { model } => model,
                RoutePolicy::Random { p_large } => pick_random(p_large),
            });

            let tag = step.model_tag;
            steps.push(StepRecord {
                index: steps.len() + 1,
                model_tag: tag,
                finish: step.finish,
                token_count: step.token_count,
                tokens: step.tokens.iter().map(|t| t.text.clone()).collect(),
                entropies: scored.entropies,
                n_tab: scored.uncertainty.n_tab,
                n_text: scored.uncertainty.n_text,
                phi_tab: scored.uncertainty.phi_tab,
                phi_text: scored.uncertainty.phi_text,
                d_tab: scored.risk.and_then(|r| r.d_tab),
                d_text: scored.risk.and_then(|r| r.d_text),
                d_final: scored.risk.map(|r| r.d_final),
                next_model,
                regenerated: discarded.is_some(),
                discarded,
                flops: meter_flops(self.backend(tag).param_count(), step.token_count),
                distributions: step.distributions,
                text: step.text.clone(),
            });
            prior.push(step.text);

            match step.finish {
                Finish::StepBoundary => next = next_model.expect("non-terminal step has a decision"),
                Finish::Answer => break Termination::Answer,
                Finish::LengthLimit => break Termination::TokenLimit,
            }
        };

        let final_answer = match terminated_by {
            Termination::Answer => steps
                .last()
                .and_then(|s| cfg.answer_patterns.extract(&s.text)),
            _ => None,
        };
        let total_flops = steps.iter().map(StepRecord::total_flops).sum();
        Ok(Trace {
            schema: TRACE_SCHEMA_VERSION,
            query_id: query.id.clone(),
            table_id: query.table.id.clone(),
            question: query.question.clone(),
            steps,
            final_answer,
            total_flops,
            terminated_by,
            sample,
        })
    }
}
