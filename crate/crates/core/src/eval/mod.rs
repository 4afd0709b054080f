//! Threshold sweeps, accuracy/FLOPs metrics and the routing microbenchmark.

mod bench;
mod dataset;
mod evaluator;
mod metrics;
mod output;
mod sweep;

pub use bench::{bench_routing, synthetic_workload, BenchReport};
pub use dataset::{load_dataset, parse_dataset};
pub use evaluator::{Evaluator, ExactMatch};
pub use metrics::{
    a_per_f, acc_at_flops, flops_at_acc, interpolate_acc, interpolate_flops, metric_report, operating_points,
    pareto_frontier, result_frontier, MetricReport, OperatingPoint, Point, BUDGET_FRACTION, FLOPS_UNIT,
    TARGET_FRACTION,
};
pub use output::write_atomic;
pub use sweep::{rows_csv, sweep, tau_grid, SweepOptions, SweepResult, SweepRow};
