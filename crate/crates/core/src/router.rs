//! Risk fusion and the small-vs-large routing decision.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::calibration::RiskMapping;
use crate::error::{Error, Result};
use crate::uncertainty::StepUncertainty;

/// Which generation backend produces a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelTag {
    #[serde(rename = "SRM")]
    Small,
    #[serde(rename = "LRM")]
    Large,
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelTag::Small => "SRM",
            ModelTag::Large => "LRM",
        })
    }
}

fn check_risk(name: &str, r: f64) -> Result<()> {
    if (0.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(Error::input(format!("{name} risk {r} is outside [0, 1]")))
    }
}

/// Noisy-OR of two failure risks. A missing risk contributes nothing.
///
/// Evaluated as `a + b - ab`, then clamped to `[max(a, b), min(1, a + b)]` so
/// the bounds hold exactly under rounding.
pub fn fuse(d_tab: Option<f64>, d_text: Option<f64>) -> Result<f64> {
    if d_tab.is_none() && d_text.is_none() {
        return Err(Error::input("no risk to fuse: step has no tokens"));
    }
    let a = d_tab.unwrap_or(0.0);
    let b = d_text.unwrap_or(0.0);
    check_risk("table", a)?;
    check_risk("text", b)?;
    let upper = (a + b).min(1.0);
    Ok((a + b - a * b).max(a.max(b)).min(upper))
}

/// Large model iff the fused risk strictly exceeds `tau`.
pub fn decide(d_final: f64, tau: f64) -> ModelTag {
    if d_final > tau {
        ModelTag::Large
    } else {
        ModelTag::Small
    }
}

/// How step uncertainties become a single routing score.
///
/// Everything other than `NoisyOr` exists for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ScoreMode {
    #[default]
    NoisyOr,
    /// One mean over all tokens, mapped with the text mapping.
    AverageToken,
    TableOnly,
    TextOnly,
    /// `w·d_tab + (1 − w)·d_text`, absent risks counted as 0.
    Linear { weight: f64 },
}

/// Per-step risks and the fused score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRisk {
    pub d_tab: Option<f64>,
    pub d_text: Option<f64>,
    pub d_final: f64,
}

pub fn score(mode: ScoreMode, unc: &StepUncertainty, tab: &RiskMapping, text: &RiskMapping) -> Result<StepRisk> {
    let d_tab = unc.phi_tab.map(|p| tab.apply(p)).transpose()?;
    let d_text = unc.phi_text.map(|p| text.apply(p)).transpose()?;
    let d_final = match mode {
        ScoreMode::NoisyOr => fuse(d_tab, d_text)?,
        ScoreMode::AverageToken => {
            let n = unc.n_tab + unc.n_text;
            if n == 0 {
                return Err(Error::input("no risk to fuse: step has no tokens"));
            }
            let total = unc.phi_tab.unwrap_or(0.0) * unc.n_tab as f64
                + unc.phi_text.unwrap_or(0.0) * unc.n_text as f64;
            text.apply(total / n as f64)?
        }
        ScoreMode::TableOnly => {
            fuse(d_tab, d_text)?;
            d_tab.unwrap_or(0.0)
        }
        ScoreMode::TextOnly => {
            fuse(d_tab, d_text)?;
            d_text.unwrap_or(0.0)
        }
        ScoreMode::Linear { weight } => {
            fuse(d_tab, d_text)?;
            let w = weight.clamp(0.0, 1.0);
            w * d_tab.unwrap_or(0.0) + (1.0 - w) * d_text.unwrap_or(0.0)
        }
    };
    Ok(StepRisk {
        d_tab,
        d_text,
        d_final,
    })
}

/// A complete routing record for one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub d_tab: Option<f64>,
    pub d_text: Option<f64>,
    pub d_final: f64,
    pub tau: f64,
    pub choice: ModelTag,
}

impl RoutingDecision {
    pub fn new(risk: StepRisk, tau: f64) -> Self {
        RoutingDecision {
            d_tab: risk.d_tab,
            d_text: risk.d_text,
            d_final: risk.d_final,
            tau,
            choice: decide(risk.d_final, tau),
        }
    }
}
