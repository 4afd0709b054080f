use std::path::Path;

use serde::{Deserialize, Serialize};

use super::answer::AnswerPatterns;
use crate::backends::BackendConfig;
use crate::calibration::{RiskMapping, Signal};
use crate::error::{Error, Result};
use crate::router::ScoreMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mappings {
    pub tab: RiskMapping,
    pub text: RiskMapping,
}

impl Mappings {
    pub fn new(tab: RiskMapping, text: RiskMapping) -> Result<Self> {
        if tab.signal != Signal::Tab || text.signal != Signal::Text {
            return Err(Error::input("mapping signals must be (tab, text)"));
        }
        Ok(Mappings { tab, text })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrieSettings {
    #[serde(default = "yes")]
    pub include_headers: bool,
}

fn yes() -> bool {
    true
}

impl Default for TrieSettings {
    fn default() -> Self {
        TrieSettings {
            include_headers: true,
        }
    }
}

/// Threshold sweep parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    #[serde(default = "default_spacing")]
    pub grid_spacing: f64,
    /// Independent repetitions averaged per grid point.
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    /// Fraction of failed runs above which a sweep aborts.
    #[serde(default = "default_failure_rate")]
    pub max_failure_rate: f64,
}

fn default_spacing() -> f64 {
    0.05
}
fn default_seeds() -> u64 {
    3
}
fn default_failure_rate() -> f64 {
    0.1
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            grid_spacing: default_spacing(),
            seeds: default_seeds(),
            max_failure_rate: default_failure_rate(),
        }
    }
}

fn default_step_limit() -> usize {
    128
}
fn default_token_budget() -> usize {
    16_384
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub tau: f64,
    pub mappings: Mappings,
    #[serde(default = "default_step_limit")]
    pub step_limit: usize,
    /// Generated-token budget for one query, across all steps and both models.
    #[serde(default = "default_token_budget")]
    pub token_budget: usize,
    pub srm: BackendConfig,
    pub lrm: BackendConfig,
    #[serde(default)]
    pub trie: TrieSettings,
    #[serde(default)]
    pub score_mode: ScoreMode,
    #[serde(default)]
    pub answer_patterns: AnswerPatterns,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sweep: SweepSettings,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::input(format!("tau {} outside [0, 1]", self.tau)));
        }
        if self.step_limit == 0 || self.token_budget == 0 {
            return Err(Error::input("step_limit and token_budget must be positive"));
        }
        if self.mappings.tab.signal != Signal::Tab || self.mappings.text.signal != Signal::Text {
            return Err(Error::input("mapping signals must be (tab, text)"));
        }
        if !(self.sweep.grid_spacing > 0.0 && self.sweep.grid_spacing <= 1.0) {
            return Err(Error::input("grid_spacing must be in (0, 1]"));
        }
        if self.sweep.seeds == 0 {
            return Err(Error::input("sweep needs at least one seed"));
        }
        self.srm.validate()?;
        self.lrm.validate()
    }

    /// Reads a JSON config; relative script paths resolve against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::parse(Some(e.line()), e.to_string()))?;
        if let Some(dir) = path.parent() {
            for backend in [&mut cfg.srm, &mut cfg.lrm] {
                if let Some(script) = &backend.script {
                    if script.is_relative() {
                        backend.script = Some(dir.join(script));
                    }
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
