//! Fixture builders shared by the integration suites.
#![allow(dead_code)]

pub mod oracle;

use std::sync::Arc;

use tabroute_core::backends::{BackendConfig, Finish, MockBackend, MockStep, Selector};
use tabroute_core::calibration::{LabelInput, RiskMapping, Signal};
use tabroute_core::pipeline::{Mappings, Pipeline, Query, RoutePolicy, RunConfig, SweepSettings};
use tabroute_core::router::ModelTag;
use tabroute_core::table_trie::Table;
use tabroute_core::uncertainty::TokenDistribution;

/// Text mapping used with planted risks: d = σ(10Φ − 3).
pub const TEXT_A: f64 = 10.0;
pub const TEXT_B: f64 = -3.0;

pub const SRM_PARAMS: f64 = 1.7e9;
pub const LRM_PARAMS: f64 = 14e9;

pub fn mappings() -> Mappings {
    Mappings::new(
        RiskMapping::new(Signal::Tab, 4.0, -2.0),
        RiskMapping::new(Signal::Text, TEXT_A, TEXT_B),
    )
    .unwrap()
}

fn binary_entropy(p: f64) -> f64 {
    let q = 1.0 - p;
    -(p * p.ln()) - if q > 0.0 { q * q.ln() } else { 0.0 }
}

/// Two-outcome distribution with entropy `h` nats (0 ≤ h < ln 2), by bisection.
pub fn distribution_with_entropy(h: f64) -> TokenDistribution {
    assert!((0.0..std::f64::consts::LN_2).contains(&h), "entropy {h} not reachable");
    if h == 0.0 {
        return TokenDistribution::certain("0");
    }
    let (mut lo, mut hi) = (0.5f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if binary_entropy(mid) > h {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p = 0.5 * (lo + hi);
    TokenDistribution::from_probs(&[p, 1.0 - p], true).unwrap()
}

/// Uncertainty that the text mapping turns into risk `d`.
pub fn phi_for_risk(d: f64) -> f64 {
    ((d / (1.0 - d)).ln() - TEXT_B) / TEXT_A
}

pub fn table() -> Table {
    Table::new(
        "t1",
        vec!["City".into(), "Population".into()],
        vec![
            vec!["Oslo".into(), "709,000".into()],
            vec!["Bergen".into(), "291,000".into()],
        ],
    )
    .unwrap()
}

pub fn query(id: &str) -> Query {
    Query {
        id: id.into(),
        table: table(),
        question: "Which city is largest?".into(),
        answer: Some("Oslo".into()),
    }
}

/// A text-only step (no table vocabulary) with planted fused risk `d`.
pub fn planted_step(words: &[&str], d: f64, finish: Finish) -> MockStep {
    let mut text = words.join(" ");
    if finish == Finish::StepBoundary {
        text.push_str("\n\n");
    }
    let n = words.len();
    let dist = distribution_with_entropy(phi_for_risk(d));
    MockStep::from_text(&text, vec![dist; n], finish).unwrap()
}

/// Position-keyed script: entry i answers requests for step i + 1.
pub fn keyed(steps: Vec<MockStep>) -> MockBackend {
    MockBackend::new(
        steps
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                s.with_selector(Selector {
                    at_step: Some(i + 1),
                    ..Selector::default()
                })
            })
            .collect(),
    )
}

/// Same planted risks for both models; answers `answer` at the final position.
pub fn scripted_pair(risks: &[f64], answer: &str) -> (MockBackend, MockBackend) {
    let make = |tag: ModelTag, params: f64| {
        let mut steps = Vec::new();
        for (i, &d) in risks.iter().enumerate() {
            let last = i + 1 == risks.len();
            let step = if last {
                let words = vec!["Final", "Answer", "is"];
                let mut s = planted_step(&words, d, Finish::Answer);
                let mut tokens = s.tokens.clone();
                tokens.push(format!(" \\boxed{{{answer}}}"));
                let mut dists = s.distributions.clone();
                dists.push(s.distributions[0].clone());
                s = MockStep::new(tokens, dists, Finish::Answer, Selector::default()).unwrap();
                s
            } else {
                let w = match tag {
                    ModelTag::Small => ["small", "model", "thinks", "here"],
                    ModelTag::Large => ["large", "model", "reasons", "carefully"],
                };
                planted_step(&w, d, Finish::StepBoundary)
            };
            steps.push(step);
        }
        keyed(steps).with_tag(tag).with_param_count(params)
    };
    (make(ModelTag::Small, SRM_PARAMS), make(ModelTag::Large, LRM_PARAMS))
}

pub fn run_config(tau: f64) -> RunConfig {
    RunConfig {
        tau,
        mappings: mappings(),
        step_limit: 128,
        token_budget: 16_384,
        srm: BackendConfig::mock(SRM_PARAMS, "srm.jsonl"),
        lrm: BackendConfig::mock(LRM_PARAMS, "lrm.jsonl"),
        trie: Default::default(),
        score_mode: Default::default(),
        answer_patterns: Default::default(),
        seed: 7,
        sweep: SweepSettings {
            seeds: 1,
            ..SweepSettings::default()
        },
    }
}

pub fn pipeline(tau: f64, srm: MockBackend, lrm: MockBackend) -> Pipeline {
    Pipeline::new(run_config(tau), Arc::new(srm), Arc::new(lrm))
}

/// Words per step in [`scripted_dataset`]; every step has 4 tokens.
pub const STEP_TOKENS: usize = 4;

fn answer_tail(d: f64, answer: &str) -> MockStep {
    let s = planted_step(&["Final", "Answer", "is"], d, Finish::Answer);
    let mut tokens = s.tokens.clone();
    tokens.push(format!(" \\boxed{{{answer}}}"));
    let mut dists = s.distributions.clone();
    dists.push(s.distributions[0].clone());
    MockStep::new(tokens, dists, Finish::Answer, Selector::default()).unwrap()
}

/// Several queries, each with its own planted risk sequence shared by both
/// models. The small model answers "Bergen" (wrong), the large one "Oslo".
pub fn scripted_dataset(plans: &[(&str, Vec<f64>)]) -> (MockBackend, MockBackend, Vec<Query>) {
    let make = |tag: ModelTag, params: f64, answer: &str| {
        let mut steps = Vec::new();
        for (id, risks) in plans {
            for (i, &d) in risks.iter().enumerate() {
                let step = if i + 1 == risks.len() {
                    answer_tail(d, answer)
                } else {
                    planted_step(&["some", "reasoning", "step", "here"], d, Finish::StepBoundary)
                };
                steps.push(step.with_selector(Selector {
                    query: Some(id.to_string()),
                    at_step: Some(i + 1),
                    ..Selector::default()
                }));
            }
        }
        MockBackend::new(steps).with_tag(tag).with_param_count(params)
    };
    let queries = plans.iter().map(|(id, _)| query(id)).collect();
    (
        make(ModelTag::Small, SRM_PARAMS, "Bergen"),
        make(ModelTag::Large, LRM_PARAMS, "Oslo"),
        queries,
    )
}

pub fn lrm_trace(steps: usize) -> LabelInput {
    let (srm, lrm) = scripted_pair(&vec![0.3; steps], "Oslo");
    let trace = pipeline(0.5, srm, lrm)
        .run_with(&query("q"), RoutePolicy::Fixed { model: ModelTag::Large }, 0)
        .unwrap();
    assert_eq!(trace.steps.len(), steps);
    LabelInput { trace, query: query("q") }
}

pub fn answer_step(answer: &str, at_step: usize, sample: u64) -> MockStep {
    let text = format!("Final Answer is \\boxed{{{answer}}}");
    let n = text.split_whitespace().count();
    MockStep::from_text(&text, vec![TokenDistribution::certain("x"); n], Finish::Answer)
        .unwrap()
        .with_selector(Selector {
            at_step: Some(at_step),
            sample: Some(sample),
            ..Selector::default()
        })
}

/// Rewrite steps for one trace of `t` steps: suffix length m answers wrong
/// in `wrong[m - 1]` of 5 runs. `query` restricts them to one query id.
pub fn rewrite_steps(query: Option<&str>, t: usize, wrong: &[usize]) -> Vec<MockStep> {
    let mut steps = Vec::new();
    for (i, &w) in wrong.iter().enumerate() {
        let m = i + 1;
        for r in 0..5 {
            let ans = if r < w { "Bergen" } else { "Oslo" };
            let mut step = answer_step(ans, t - m + 1, (i * 5 + r) as u64);
            step.selector.query = query.map(str::to_owned);
            steps.push(step);
        }
    }
    steps
}

pub fn rewriter(t: usize, wrong: &[usize]) -> MockBackend {
    MockBackend::new(rewrite_steps(None, t, wrong)).with_tag(ModelTag::Small)
}
