use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::Args;
use log::info;
use rayon::prelude::*;
use tabroute_core::backends::{build_backend, split_words};
use tabroute_core::calibration::{
    build_labels, fit_sigmoid, retain_for_calibration, CalibrationSample, LabelingConfig, RiskMapping, Signal,
};
use tabroute_core::eval::{
    bench_routing, load_dataset, metric_report, rows_csv, sweep, synthetic_workload, write_atomic, ExactMatch,
    MetricReport, SweepOptions, SweepResult, FLOPS_UNIT,
};
use tabroute_core::pipeline::{Mappings, Pipeline, Query, RoutePolicy, RunConfig, Trace};
use tabroute_core::router::{ModelTag, ScoreMode};
use tabroute_core::table_trie::{Table, TableTrie};

use crate::Cli;

/// Exit code 2 for bad arguments and unreadable inputs, 1 for everything
/// that fails after the inputs were accepted.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome<T = ()> = Result<T, Failure>;

trait UsageExt<T> {
    fn usage(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> UsageExt<T> for Result<T, E> {
    fn usage(self) -> Outcome<T> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
}

fn usage_err<T>(msg: impl Into<String>) -> Outcome<T> {
    Err(Failure::Usage(anyhow!(msg.into())))
}

pub fn dispatch(cli: &Cli) -> Outcome {
    if cli.workers == Some(0) {
        return usage_err("--workers must be at least 1");
    }
    match &cli.command {
        crate::Command::Classify(a) => classify(cli, a),
        crate::Command::Calibrate(a) => calibrate(cli, a),
        crate::Command::Run(a) => run(cli, a),
        crate::Command::Sweep(a) => sweep_cmd(cli, a),
        crate::Command::Report(a) => report(cli, a),
        crate::Command::BenchRouting(a) => bench(cli, a),
    }
}

fn load_config(cli: &Cli) -> Outcome<RunConfig> {
    let Some(path) = &cli.config else {
        return usage_err("this subcommand needs --config");
    };
    let mut cfg = RunConfig::load(path)
        .with_context(|| format!("loading config {}", path.display()))
        .usage()?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.srm.seed = Some(seed);
        cfg.lrm.seed = Some(seed);
    }
    Ok(cfg)
}

fn load_table(path: &Path) -> Outcome<Table> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .usage()?;
    let mut table = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        Table::from_csv_str(&text)
    } else {
        Table::from_json_str(&text)
    }
    .with_context(|| format!("parsing table {}", path.display()))
    .usage()?;
    if table.id.is_empty() {
        table.id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    }
    Ok(table)
}

fn load_queries(path: &Path) -> Outcome<Vec<Query>> {
    load_dataset(path)
        .with_context(|| format!("loading dataset {}", path.display()))
        .usage()
}

fn load_traces(path: &Path) -> Outcome<Vec<Trace>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .usage()?;
    Trace::parse_jsonl(&text)
        .with_context(|| format!("parsing traces {}", path.display()))
        .usage()
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn write_out(dir: &Path, name: &str, body: &str) -> Outcome {
    let path = dir.join(name);
    write_atomic(&path, body.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn pool(cli: &Cli) -> Outcome<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        b = b.num_threads(w);
    }
    Ok(b.build()?)
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Table file (.json or .csv)
    #[arg(long)]
    pub table: PathBuf,
    /// Step text
    #[arg(long, conflicts_with = "step_file")]
    pub step: Option<String>,
    /// File holding the step text
    #[arg(long)]
    pub step_file: Option<PathBuf>,
    /// Leave header strings out of the trie
    #[arg(long)]
    pub no_headers: bool,
}

fn visible(s: &str) -> String {
    s.replace('\n', "⏎").replace('\t', "→")
}

fn classify(cli: &Cli, a: &ClassifyArgs) -> Outcome {
    let table = load_table(&a.table)?;
    let text = match (&a.step, &a.step_file) {
        (Some(s), _) => s.clone(),
        (None, Some(p)) => std::fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))
            .usage()?,
        (None, None) => return usage_err("give --step or --step-file"),
    };
    let trie = TableTrie::from_table(&table, !a.no_headers);
    let tokens = split_words(&text);
    let mut ranges = Vec::with_capacity(tokens.len());
    let mut at = 0;
    for t in &tokens {
        ranges.push(at..at + t.len());
        at += t.len();
    }
    let mask = trie.match_step(&text, &ranges)?;

    let (mut line, mut marks) = (String::new(), String::new());
    for (tok, &tab) in tokens.iter().zip(mask.bits()) {
        let shown = visible(tok);
        let width = shown.chars().count();
        line.push_str(&shown);
        let mark = if tab { "^" } else { " " };
        marks.push_str(&mark.repeat(width));
    }
    println!("{line}");
    println!("{}", marks.trim_end());
    println!("tab tokens: {}  text tokens: {}", mask.n_tab(), mask.n_text());
    for m in trie.find_matches(&text) {
        println!("  {:?} -> {:?} ({:?})", &text[m.original.clone()], m.entry, m.kind);
    }
    if let Some(dir) = &cli.output_dir {
        let body = serde_json::json!({ "tokens": tokens, "mask": mask });
        write_out(dir, "mask.json", &pretty(&body))?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Large-model traces (JSONL)
    #[arg(long, required_unless_present = "samples")]
    pub traces: Option<PathBuf>,
    /// Small-model traces for the retention filter (JSONL)
    #[arg(long)]
    pub srm_traces: Option<PathBuf>,
    /// Dataset with gold answers (JSONL)
    #[arg(long, required_unless_present = "samples")]
    pub dataset: Option<PathBuf>,
    /// Fit from an existing samples file instead of labeling
    #[arg(long, conflicts_with_all = ["traces", "srm_traces", "dataset"])]
    pub samples: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub max_suffix: usize,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0.8)]
    pub flip_ratio: f64,
}

fn stamp() -> Option<u64> {
    std::env::var("SOURCE_DATE_EPOCH").ok()?.parse().ok()
}

fn calibrate(cli: &Cli, a: &CalibrateArgs) -> Outcome {
    let dir = out_dir(cli);
    let samples: Vec<CalibrationSample> = if let Some(path) = &a.samples {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .usage()?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
            .collect::<anyhow::Result<_>>()
            .usage()?
    } else {
        let cfg = load_config(cli)?;
        let queries = load_queries(a.dataset.as_deref().expect("clap requires it"))?;
        let lrm = load_traces(a.traces.as_deref().expect("clap requires it"))?;
        let srm_traces = match &a.srm_traces {
            Some(p) => load_traces(p)?,
            None => Vec::new(),
        };
        let labeling = LabelingConfig {
            max_suffix: a.max_suffix,
            repeats: a.repeats,
            flip_ratio: a.flip_ratio,
            step_limit: cfg.step_limit,
            token_budget: cfg.token_budget,
            answer_patterns: cfg.answer_patterns.clone(),
        };
        labeling.validate().usage()?;
        let evaluator = ExactMatch::default();
        let inputs = retain_for_calibration(&lrm, &srm_traces, &queries, &evaluator);
        info!("{} of {} traces retained", inputs.len(), lrm.len());
        let srm = build_backend(ModelTag::Small, &cfg.srm).usage()?;
        let outcome = pool(cli)?.install(|| build_labels(&inputs, srm.as_ref(), &evaluator, &labeling))?;
        for w in &outcome.warnings {
            log::warn!("{w}");
        }
        println!(
            "labeled {} traces, excluded {}, {} samples",
            outcome.boundaries.len(),
            outcome.excluded.len(),
            outcome.samples.len()
        );
        let jsonl = |items: Vec<String>| items.into_iter().map(|l| l + "\n").collect::<String>();
        write_out(
            &dir,
            "boundaries.jsonl",
            &jsonl(outcome.boundaries.iter().map(|b| serde_json::to_string(b).expect("serializable")).collect()),
        )?;
        write_out(
            &dir,
            "samples.jsonl",
            &jsonl(outcome.samples.iter().map(|s| serde_json::to_string(s).expect("serializable")).collect()),
        )?;
        outcome.samples
    };

    let fit = |signal| -> Outcome<RiskMapping> {
        let mut m = fit_sigmoid(&samples, signal).with_context(|| format!("fitting the {signal} mapping"))?;
        m.created_at = stamp();
        println!("{signal}: a = {:.6}  b = {:.6}  loss = {:.6}", m.a, m.b, m.fit_loss.unwrap_or(f64::NAN));
        Ok(m)
    };
    let mappings = Mappings::new(fit(Signal::Tab)?, fit(Signal::Text)?)?;
    write_out(&dir, "mapping_tab.json", &pretty(&mappings.tab))?;
    write_out(&dir, "mapping_text.json", &pretty(&mappings.text))?;
    write_out(&dir, "mappings.json", &pretty(&mappings))?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Queries (JSONL of {id, table, question, answer})
    #[arg(long)]
    pub dataset: PathBuf,
    /// Only this query id
    #[arg(long)]
    pub query: Option<String>,
    /// Overrides the configured threshold
    #[arg(long)]
    pub tau: Option<f64>,
    /// Route every step to one model instead of by risk
    #[arg(long, value_parser = ["srm", "lrm"])]
    pub only: Option<String>,
    /// Repetition index passed to the backends
    #[arg(long, default_value_t = 0)]
    pub sample: u64,
}

fn run(cli: &Cli, a: &RunArgs) -> Outcome {
    let mut cfg = load_config(cli)?;
    if let Some(t) = a.tau {
        cfg.tau = t;
    }
    cfg.validate().usage()?;
    let mut queries = load_queries(&a.dataset)?;
    if let Some(id) = &a.query {
        queries.retain(|q| &q.id == id);
        if queries.is_empty() {
            return usage_err(format!("no query {id} in the dataset"));
        }
    }
    let policy = match a.only.as_deref() {
        Some("srm") => RoutePolicy::Fixed { model: ModelTag::Small },
        Some("lrm") => RoutePolicy::Fixed { model: ModelTag::Large },
        _ => RoutePolicy::threshold(cfg.tau),
    };
    let pipeline = Pipeline::from_config(cfg).usage()?;
    let traces: Vec<Trace> = pool(cli)?.install(|| {
        queries
            .par_iter()
            .map(|q| pipeline.run_with(q, policy, a.sample))
            .collect::<tabroute_core::Result<_>>()
    })?;

    let eval = ExactMatch::default();
    let mut correct = 0;
    for (t, q) in traces.iter().zip(&queries) {
        let ok = match (&t.final_answer, &q.answer) {
            (Some(p), Some(g)) => Some(tabroute_core::eval::Evaluator::is_correct(&eval, p, g)),
            _ => q.answer.as_ref().map(|_| false),
        };
        correct += usize::from(ok == Some(true));
        println!(
            "{}\tanswer={}\tcorrect={}\tsteps={}\tlrm_steps={}\tflops={:.4e}\tend={:?}",
            t.query_id,
            t.final_answer.as_deref().unwrap_or("-"),
            ok.map_or("-".to_string(), |b| b.to_string()),
            t.steps.len(),
            t.lrm_steps(),
            t.total_flops,
            t.terminated_by,
        );
    }
    println!("accuracy {}/{}", correct, traces.len());
    write_out(&out_dir(cli), "traces.jsonl", &Trace::to_jsonl(&traces))?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Queries (JSONL of {id, table, question, answer})
    #[arg(long)]
    pub dataset: PathBuf,
    /// Threshold grid spacing; defaults to the config's
    #[arg(long)]
    pub spacing: Option<f64>,
    /// Repetitions averaged per grid point; defaults to the config's
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Also sweep score-blind random routing
    #[arg(long)]
    pub random_control: bool,
}

fn sweep_cmd(cli: &Cli, a: &SweepArgs) -> Outcome {
    let cfg = load_config(cli)?;
    let queries = load_queries(&a.dataset)?;
    let opts = SweepOptions {
        grid_spacing: a.spacing.unwrap_or(cfg.sweep.grid_spacing),
        seeds: a.seeds.unwrap_or(cfg.sweep.seeds),
        max_failure_rate: cfg.sweep.max_failure_rate,
        workers: cli.workers,
        random_control: a.random_control,
    };
    tabroute_core::eval::tau_grid(opts.grid_spacing).usage()?;
    let pipeline = Pipeline::from_config(cfg).usage()?;
    let result = sweep(&pipeline, &queries, &ExactMatch::default(), &opts)?;
    let dir = out_dir(cli);
    write_out(&dir, "sweep.json", &result.to_json())?;
    write_out(&dir, "curve.csv", &result.to_csv())?;
    if let Some(rows) = &result.random {
        write_out(&dir, "random.csv", &rows_csv(rows))?;
    }
    print!("{}", result.to_csv());
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Saved sweep result (sweep.json)
    #[arg(long)]
    pub input: PathBuf,
    /// Print the report as JSON
    #[arg(long)]
    pub json: bool,
}

fn render(m: &MetricReport) -> String {
    let units = |f: f64| f / FLOPS_UNIT;
    let mut out = String::new();
    out.push_str(&format!(
        "acc at {:.0}% of LRM FLOPs: {:.4} (budget {:.4} x1e12 FLOPs/query)\n",
        m.budget_fraction * 100.0,
        m.acc_at_budget,
        units(m.budget_flops)
    ));
    match m.flops_at_target {
        Some(f) => out.push_str(&format!(
            "FLOPs to {:.0}% of LRM acc: {:.4} x1e12 FLOPs/query (target acc {:.4})\n",
            m.target_fraction * 100.0,
            units(f),
            m.target_acc
        )),
        None => out.push_str(&format!(
            "FLOPs to {:.0}% of LRM acc: not reached (target acc {:.4})\n",
            m.target_fraction * 100.0,
            m.target_acc
        )),
    }
    match m.a_per_f {
        Some(v) => out.push_str(&format!("A/F: {v:.4} (acc in %, FLOPs in 1e12/query)\n")),
        None => out.push_str("A/F: n/a\n"),
    }
    for p in &m.points {
        out.push_str(&format!(
            "  {:<10} acc {:.4}  flops {:.4e}  A/F {}\n",
            p.label,
            p.acc,
            p.flops,
            p.a_per_f.map_or("n/a".into(), |v| format!("{v:.4}"))
        ));
    }
    out
}

fn report(cli: &Cli, a: &ReportArgs) -> Outcome {
    let text = std::fs::read_to_string(&a.input)
        .with_context(|| format!("reading {}", a.input.display()))
        .usage()?;
    let result = SweepResult::from_json(&text)
        .with_context(|| format!("parsing {}", a.input.display()))
        .usage()?;
    let m = metric_report(&result);
    if a.json {
        print!("{}", pretty(&m));
    } else {
        print!("{}", render(&m));
    }
    println!();
    print!("{}", result.to_csv());
    if let Some(dir) = &cli.output_dir {
        write_out(dir, "report.json", &pretty(&m))?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Trace file whose steps are replayed (JSONL); synthetic steps otherwise
    #[arg(long, requires = "dataset")]
    pub trace: Option<PathBuf>,
    /// Dataset holding the traced queries' tables
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Synthetic steps
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Tokens per synthetic step
    #[arg(long, default_value_t = 200)]
    pub tokens: usize,
    /// Table entries in the synthetic table
    #[arg(long, default_value_t = 50)]
    pub entries: usize,
    /// Passes over the steps
    #[arg(long, default_value_t = 10)]
    pub rounds: usize,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
}

fn bench(cli: &Cli, a: &BenchArgs) -> Outcome {
    let (mappings, mode) = match &cli.config {
        Some(_) => {
            let cfg = load_config(cli)?;
            (cfg.mappings, cfg.score_mode)
        }
        None => (
            Mappings::new(RiskMapping::new(Signal::Tab, 1.0, 0.0), RiskMapping::new(Signal::Text, 1.0, 0.0))?,
            ScoreMode::default(),
        ),
    };
    let mut reports = Vec::new();
    match &a.trace {
        Some(path) => {
            let traces = load_traces(path)?;
            let queries = load_queries(a.dataset.as_deref().expect("clap requires it"))?;
            for t in &traces {
                let Some(q) = queries.iter().find(|q| q.id == t.query_id) else {
                    return usage_err(format!("trace query {} is not in the dataset", t.query_id));
                };
                let steps = t
                    .steps
                    .iter()
                    .map(|s| s.to_generated())
                    .collect::<tabroute_core::Result<Vec<_>>>()
                    .usage()?;
                if !steps.is_empty() {
                    reports.push(bench_routing(&q.table, &steps, &mappings, mode, a.tau, a.rounds)?);
                }
            }
        }
        None => {
            let seed = cli.seed.unwrap_or(0);
            let (table, steps) = synthetic_workload(a.steps, a.tokens, a.entries, seed).usage()?;
            reports.push(bench_routing(&table, &steps, &mappings, mode, a.tau, a.rounds)?);
        }
    }
    if reports.is_empty() {
        return usage_err("no steps to time");
    }
    let total: usize = reports.iter().map(|r| r.steps * r.rounds).sum();
    let mean = reports.iter().map(|r| r.mean_us * (r.steps * r.rounds) as f64).sum::<f64>() / total as f64;
    let max = reports.iter().map(|r| r.max_us).fold(0.0, f64::max);
    let steps: usize = reports.iter().map(|r| r.steps).sum();
    println!("steps: {steps}  timed: {total}");
    println!("mean per-step routing: {mean:.2} us");
    println!("max per-step routing: {max:.2} us");
    if let Some(dir) = &cli.output_dir {
        write_out(dir, "bench.json", &pretty(&reports))?;
    }
    Ok(())
}
