use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluator::Evaluator;
use crate::error::{Error, Result};
use crate::pipeline::{Pipeline, Query, RoutePolicy, Trace};
use crate::router::ModelTag;

/// Mean outcome of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Routing threshold; the large-model probability for control rows.
    pub tau: f64,
    pub acc: f64,
    /// Mean FLOPs per query.
    pub flops: f64,
    /// Large-model steps over all steps.
    pub lrm_frac: f64,
    /// Runs that failed and were left out of the means.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid_spacing: f64,
    pub seeds: u64,
    pub queries: usize,
    /// Sorted by τ, 0 through 1.
    pub grid: Vec<SweepRow>,
    pub srm_only: SweepRow,
    pub lrm_only: SweepRow,
    /// Score-blind random routing over the same grid of probabilities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<Vec<SweepRow>>,
}

impl SweepResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep results serialize") + "\n"
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: SweepResult = serde_json::from_str(s).map_err(|e| Error::parse(None, e.to_string()))?;
        if r.grid.is_empty() {
            return Err(Error::parse(None, "sweep result has an empty grid"));
        }
        Ok(r)
    }

    /// `tau,acc,flops,lrm_frac` with a header row.
    pub fn to_csv(&self) -> String {
        rows_csv(&self.grid)
    }
}

pub fn rows_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["tau", "acc", "flops", "lrm_frac"]).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.tau.to_string(),
            r.acc.to_string(),
            r.flops.to_string(),
            r.lrm_frac.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub grid_spacing: f64,
    pub seeds: u64,
    pub max_failure_rate: f64,
    /// Thread count for queries within a row; `None` uses available parallelism.
    pub workers: Option<usize>,
    pub random_control: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            grid_spacing: 0.05,
            seeds: 3,
            max_failure_rate: 0.1,
            workers: None,
            random_control: false,
        }
    }
}

/// Thresholds from 0 to 1 inclusive.
pub fn tau_grid(spacing: f64) -> Result<Vec<f64>> {
    if !(spacing > 0.0 && spacing <= 1.0) {
        return Err(Error::input(format!("grid spacing must be in (0, 1], got {spacing}")));
    }
    let steps = 1.0 / spacing;
    let n = steps.round();
    if (steps - n).abs() < 1e-9 {
        let n = n as usize;
        return Ok((0..=n).map(|i| i as f64 / n as f64).collect());
    }
    let mut out: Vec<f64> = (0..).map(|i| i as f64 * spacing).take_while(|&t| t < 1.0).collect();
    out.push(1.0);
    Ok(out)
}

struct Run {
    correct: bool,
    flops: f64,
    lrm_steps: usize,
    steps: usize,
}

fn outcome(trace: &Trace, gold: &str, evaluator: &dyn Evaluator) -> Run {
    Run {
        correct: trace
            .final_answer
            .as_deref()
            .is_some_and(|a| evaluator.is_correct(a, gold)),
        flops: trace.total_flops,
        lrm_steps: trace.lrm_steps(),
        steps: trace.steps.len(),
    }
}

struct Pass<'a> {
    pipeline: &'a Pipeline,
    jobs: Vec<(&'a Query, u64)>,
    evaluator: &'a dyn Evaluator,
    max_failure_rate: f64,
}

impl Pass<'_> {
    fn run(&self, tau: f64, policy: RoutePolicy) -> Result<SweepRow> {
        let runs: Vec<Result<Run>> = self
            .jobs
            .par_iter()
            .map(|&(q, sample)| {
                let gold = q.answer.as_deref().unwrap_or_default();
                self.pipeline
                    .run_with(q, policy, sample)
                    .map(|t| outcome(&t, gold, self.evaluator))
            })
            .collect();
        let total = runs.len();
        let mut failed = 0;
        let (mut correct, mut flops, mut lrm, mut steps) = (0usize, 0.0f64, 0usize, 0usize);
        for r in runs {
            match r {
                Ok(r) => {
                    correct += usize::from(r.correct);
                    flops += r.flops;
                    lrm += r.lrm_steps;
                    steps += r.steps;
                }
                Err(e) => {
                    log::warn!("run failed at tau={tau}: {e}");
                    failed += 1;
                }
            }
        }
        if failed as f64 > self.max_failure_rate * total as f64 {
            return Err(Error::SweepAborted { failed, total });
        }
        let ok = (total - failed).max(1) as f64;
        Ok(SweepRow {
            tau,
            acc: correct as f64 / ok,
            flops: flops / ok,
            lrm_frac: if steps == 0 { 0.0 } else { lrm as f64 / steps as f64 },
            failures: failed,
        })
    }
}

/// Runs every query at every threshold, plus single-model references.
///
/// Each (query, seed) pair runs with sample index = seed. Rows run one after
/// another; queries inside a row run on a pool of `opts.workers` threads.
/// Sums are taken in (query id, seed) order, so results do not depend on
/// scheduling.
pub fn sweep(
    pipeline: &Pipeline,
    dataset: &[Query],
    evaluator: &dyn Evaluator,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    let grid = tau_grid(opts.grid_spacing)?;
    if dataset.is_empty() {
        return Err(Error::input("empty dataset"));
    }
    if opts.seeds == 0 {
        return Err(Error::input("seeds must be at least 1"));
    }
    if let Some(q) = dataset.iter().find(|q| q.answer.is_none()) {
        return Err(Error::input(format!("query {} has no gold answer", q.id)));
    }
    let mut queries: Vec<&Query> = dataset.iter().collect();
    queries.sort_by(|a, b| a.id.cmp(&b.id));
    let jobs: Vec<(&Query, u64)> = queries
        .iter()
        .flat_map(|q| (0..opts.seeds).map(move |s| (*q, s)))
        .collect();
    let pass = Pass {
        pipeline,
        jobs,
        evaluator,
        max_failure_rate: opts.max_failure_rate,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = opts.workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::input(format!("worker pool: {e}")))?;

    pool.install(|| {
        let srm_only = pass.run(1.0, RoutePolicy::Fixed { model: ModelTag::Small })?;
        let lrm_only = pass.run(0.0, RoutePolicy::Fixed { model: ModelTag::Large })?;
        let rows = grid
            .iter()
            .map(|&tau| pass.run(tau, RoutePolicy::Threshold { tau }))
            .collect::<Result<Vec<_>>>()?;
        let random = if opts.random_control {
            Some(
                grid.iter()
                    .map(|&p| pass.run(p, RoutePolicy::Random { p_large: p }))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        Ok(SweepResult {
            grid_spacing: opts.grid_spacing,
            seeds: opts.seeds,
            queries: dataset.len(),
            grid: rows,
            srm_only,
            lrm_only,
            random,
        })
    })
}

pub(crate) fn by_flops(a: &(f64, f64), b: &(f64, f64)) -> Ordering {
    a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1))
}
