use serde::{Deserialize, Serialize};

use super::sweep::{by_flops, SweepResult};
use crate::error::{Error, Result};

/// FLOPs are reported in units of 1e12 per query.
pub const FLOPS_UNIT: f64 = 1e12;
pub const BUDGET_FRACTION: f64 = 0.6;
pub const TARGET_FRACTION: f64 = 0.98;

/// A (FLOPs, accuracy) operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub flops: f64,
    pub acc: f64,
}

/// Points not dominated in both coordinates, sorted by FLOPs; accuracy
/// strictly increases along the result.
pub fn pareto_frontier(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.flops.is_finite() && p.acc.is_finite())
        .map(|p| (p.flops, p.acc))
        .collect();
    pts.sort_by(by_flops);
    let mut out: Vec<Point> = Vec::new();
    for (flops, acc) in pts {
        if out.last().is_none_or(|l| acc > l.acc) {
            out.push(Point { flops, acc });
        }
    }
    out
}

/// Frontier accuracy at `budget`, clamped to the ends.
pub fn interpolate_acc(frontier: &[Point], budget: f64) -> Option<f64> {
    let first = frontier.first()?;
    let last = frontier.last()?;
    if budget <= first.flops {
        return Some(first.acc);
    }
    if budget >= last.flops {
        return Some(last.acc);
    }
    let j = frontier.windows(2).position(|w| budget <= w[1].flops)?;
    let (p, q) = (frontier[j], frontier[j + 1]);
    Some(p.acc + (q.acc - p.acc) * (budget - p.flops) / (q.flops - p.flops))
}

/// Slack for targets computed as `acc / x * x`, which can land an ulp high.
const ACC_SLACK: f64 = 1e-12;

/// Cheapest frontier FLOPs reaching `target`; absent above the best accuracy.
pub fn interpolate_flops(frontier: &[Point], target: f64) -> Option<f64> {
    let first = frontier.first()?;
    if target <= first.acc + ACC_SLACK {
        return Some(first.flops);
    }
    let j = frontier.windows(2).position(|w| target <= w[1].acc + ACC_SLACK)?;
    let (p, q) = (frontier[j], frontier[j + 1]);
    let t = ((target - p.acc) / (q.acc - p.acc)).min(1.0);
    Some(p.flops + (q.flops - p.flops) * t)
}

/// Grid rows plus both references.
pub fn operating_points(r: &SweepResult) -> Vec<Point> {
    r.grid
        .iter()
        .chain([&r.srm_only, &r.lrm_only])
        .map(|row| Point {
            flops: row.flops,
            acc: row.acc,
        })
        .collect()
}

pub fn result_frontier(r: &SweepResult) -> Vec<Point> {
    pareto_frontier(&operating_points(r))
}

/// Accuracy at `fraction` of large-model-only FLOPs.
pub fn acc_at_flops(r: &SweepResult, fraction: f64) -> f64 {
    interpolate_acc(&result_frontier(r), fraction * r.lrm_only.flops).unwrap_or(0.0)
}

/// FLOPs needed to reach `fraction` of large-model-only accuracy.
pub fn flops_at_acc(r: &SweepResult, fraction: f64) -> Option<f64> {
    interpolate_flops(&result_frontier(r), fraction * r.lrm_only.acc)
}

/// Accuracy in percentage points over FLOPs in report units.
pub fn a_per_f(acc_percent: f64, flops_units: f64) -> Result<f64> {
    if flops_units.is_nan() || flops_units <= 0.0 {
        return Err(Error::input(format!("A/F needs positive FLOPs, got {flops_units}")));
    }
    Ok(acc_percent / flops_units)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub label: String,
    pub acc: f64,
    pub flops: f64,
    /// Absent when the point used no FLOPs.
    pub a_per_f: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub budget_fraction: f64,
    pub target_fraction: f64,
    pub flops_unit: f64,
    /// Accuracy (fraction) at the FLOPs budget.
    pub acc_at_budget: f64,
    pub budget_flops: f64,
    /// Raw FLOPs to reach the accuracy target; absent when never reached.
    pub flops_at_target: Option<f64>,
    pub target_acc: f64,
    /// A/F of the budget operating point.
    pub a_per_f: Option<f64>,
    pub points: Vec<OperatingPoint>,
}

fn point_af(acc: f64, flops: f64) -> Option<f64> {
    a_per_f(acc * 100.0, flops / FLOPS_UNIT).ok()
}

pub fn metric_report(r: &SweepResult) -> MetricReport {
    let frontier = result_frontier(r);
    let budget = BUDGET_FRACTION * r.lrm_only.flops;
    let acc_at_budget = interpolate_acc(&frontier, budget).unwrap_or(0.0);
    // the budget point is clamped onto the frontier's FLOPs range
    let spent = match (frontier.first(), frontier.last()) {
        (Some(f), Some(l)) => budget.clamp(f.flops, l.flops),
        _ => budget,
    };
    let mut points = vec![
        OperatingPoint {
            label: "srm_only".into(),
            acc: r.srm_only.acc,
            flops: r.srm_only.flops,
            a_per_f: point_af(r.srm_only.acc, r.srm_only.flops),
        },
        OperatingPoint {
            label: "lrm_only".into(),
            acc: r.lrm_only.acc,
            flops: r.lrm_only.flops,
            a_per_f: point_af(r.lrm_only.acc, r.lrm_only.flops),
        },
    ];
    points.extend(r.grid.iter().map(|row| OperatingPoint {
        label: format!("tau={}", row.tau),
        acc: row.acc,
        flops: row.flops,
        a_per_f: point_af(row.acc, row.flops),
    }));
    MetricReport {
        budget_fraction: BUDGET_FRACTION,
        target_fraction: TARGET_FRACTION,
        flops_unit: FLOPS_UNIT,
        acc_at_budget,
        budget_flops: budget,
        flops_at_target: interpolate_flops(&frontier, TARGET_FRACTION * r.lrm_only.acc),
        target_acc: TARGET_FRACTION * r.lrm_only.acc,
        a_per_f: point_af(acc_at_budget, spent),
        points,
    }
}
