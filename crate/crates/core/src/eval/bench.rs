use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backends::{Finish, GeneratedStep};
use crate::error::{Error, Result};
use crate::pipeline::{score_step, Mappings};
use crate::router::{decide, ModelTag, ScoreMode};
use crate::table_trie::{Table, TableTrie};
use crate::uncertainty::TokenDistribution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub steps: usize,
    pub rounds: usize,
    pub trie_entries: usize,
    /// One-off trie construction for the table.
    pub trie_build_us: f64,
    /// Per-step routing: mask, entropies, group means, mappings, fusion, decision.
    pub mean_us: f64,
    pub p50_us: f64,
    pub max_us: f64,
}

/// Times the routing computation for each step, backend time excluded.
pub fn bench_routing(
    table: &Table,
    steps: &[GeneratedStep],
    mappings: &Mappings,
    mode: ScoreMode,
    tau: f64,
    rounds: usize,
) -> Result<BenchReport> {
    if steps.is_empty() || rounds == 0 {
        return Err(Error::input("benchmark needs at least one step and one round"));
    }
    let t0 = Instant::now();
    let trie = TableTrie::from_table(table, true);
    let trie_build_us = t0.elapsed().as_secs_f64() * 1e6;

    let mut per_step = Vec::with_capacity(steps.len() * rounds);
    let mut routed_large = 0usize;
    for _ in 0..rounds {
        for step in steps {
            let t = Instant::now();
            let scored = score_step(&trie, step, &mappings.tab, &mappings.text, mode)?;
            let tag = scored.risk.map_or(ModelTag::Small, |r| decide(r.d_final, tau));
            per_step.push(t.elapsed().as_secs_f64() * 1e6);
            routed_large += usize::from(tag == ModelTag::Large);
        }
    }
    log::debug!("{routed_large} of {} decisions routed large", per_step.len());
    let mean_us = per_step.iter().sum::<f64>() / per_step.len() as f64;
    per_step.sort_by(f64::total_cmp);
    Ok(BenchReport {
        steps: steps.len(),
        rounds,
        trie_entries: trie.len(),
        trie_build_us,
        mean_us,
        p50_us: per_step[per_step.len() / 2],
        max_us: *per_step.last().expect("non-empty"),
    })
}

const FILLER: &[&str] = &[
    "the", "value", "in", "row", "column", "is", "so", "we", "compare", "total", "then", "check", "which",
    "larger", "than", "sum", "of", "and", "answer", "next",
];

/// A random table of `entries` cells and `n_steps` steps of `tokens_per_step`
/// tokens mixing table text with filler, each with a random top-5 distribution.
pub fn synthetic_workload(
    n_steps: usize,
    tokens_per_step: usize,
    entries: usize,
    seed: u64,
) -> Result<(Table, Vec<GeneratedStep>)> {
    if entries == 0 || tokens_per_step == 0 {
        return Err(Error::input("workload needs entries and tokens"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = 5.min(entries);
    let headers: Vec<String> = (0..cols).map(|c| format!("field {c}")).collect();
    let rows_needed = (entries - cols).div_ceil(cols);
    let mut rows = Vec::new();
    for r in 0..rows_needed {
        rows.push(
            (0..cols)
                .map(|c| {
                    if r * cols + c + cols < entries {
                        format!("item{} {}", r * cols + c, rng.gen_range(100..100_000))
                    } else {
                        String::new()
                    }
                })
                .collect(),
        );
    }
    let table = Table::new("synthetic", headers, rows)?;
    let words: Vec<String> = table
        .entries()
        .flat_map(|e| e.split_whitespace().map(str::to_owned).collect::<Vec<_>>())
        .collect();

    let mut steps = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        let mut tokens: Vec<String> = (0..tokens_per_step)
            .map(|_| {
                let w = if rng.gen_bool(0.3) {
                    words.choose(&mut rng).expect("table has words").clone()
                } else {
                    FILLER.choose(&mut rng).expect("filler").to_string()
                };
                format!("{w} ")
            })
            .collect();
        let last = tokens.last_mut().expect("non-empty");
        last.pop();
        last.push_str("\n\n");
        let dists = (0..tokens_per_step)
            .map(|_| {
                let mut p: Vec<f64> = (0..5).map(|_| rng.gen::<f64>()).collect();
                let scale = rng.gen_range(0.5..1.0) / p.iter().sum::<f64>();
                p.iter_mut().for_each(|x| *x *= scale);
                TokenDistribution::from_probs(&p, false)
            })
            .collect::<Result<Vec<_>>>()?;
        steps.push(GeneratedStep::new(tokens, dists, Finish::StepBoundary, ModelTag::Small)?);
    }
    Ok((table, steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{RiskMapping, Signal};

    #[test]
    fn workload_shape() {
        let (table, steps) = synthetic_workload(3, 200, 50, 1).unwrap();
        assert_eq!(table.entries().filter(|e| !e.trim().is_empty()).count(), 50);
        assert_eq!(steps.len(), 3);
        assert!(steps.iter().all(|s| s.token_count == 200));
        let again = synthetic_workload(3, 200, 50, 1).unwrap();
        assert_eq!(again.1, steps);
    }

    #[test]
    fn bench_runs() {
        let (table, steps) = synthetic_workload(4, 20, 10, 2).unwrap();
        let m = Mappings::new(
            RiskMapping::new(Signal::Tab, 1.0, 0.0),
            RiskMapping::new(Signal::Text, 1.0, 0.0),
        )
        .unwrap();
        let r = bench_routing(&table, &steps, &m, ScoreMode::default(), 0.5, 2).unwrap();
        assert_eq!(r.steps, 4);
        assert!(r.mean_us > 0.0 && r.max_us >= r.p50_us);
    }
}
