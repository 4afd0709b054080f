use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which step-level uncertainty a mapping calibrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signal {
    Tab,
    Text,
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Signal::Tab => "tab",
            Signal::Text => "text",
        })
    }
}

/// Sigmoid map from a step uncertainty to a next-step failure risk.
///
/// The persisted form also carries fit diagnostics; those are optional when a
/// mapping is written by hand into a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskMapping {
    pub signal: Signal,
    pub a: f64,
    pub b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    /// Unix seconds. Only set when the caller supplies a timestamp, so that
    /// repeated fits produce identical files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<u64>,
}

impl RiskMapping {
    pub fn new(signal: Signal, a: f64, b: f64) -> Self {
        RiskMapping {
            signal,
            a,
            b,
            fit_loss: None,
            n_samples: None,
            created_at: None,
        }
    }

    /// σ(a·phi + b), kept strictly inside (0, 1).
    pub fn apply(&self, phi: f64) -> Result<f64> {
        if !phi.is_finite() {
            return Err(Error::input(format!("uncertainty {phi} is not finite")));
        }
        Ok(sigmoid_open(self.a * phi + self.b))
    }
}

pub fn apply_mapping(mapping: &RiskMapping, phi: f64) -> Result<f64> {
    mapping.apply(phi)
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

const OPEN_LOW: f64 = f64::MIN_POSITIVE;
const OPEN_HIGH: f64 = 1.0 - f64::EPSILON / 2.0;

fn sigmoid_open(z: f64) -> f64 {
    if z.is_nan() {
        return 0.5;
    }
    sigmoid(z).clamp(OPEN_LOW, OPEN_HIGH)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let zero = RiskMapping::new(Signal::Tab, 0.0, 0.0);
        assert_eq!(zero.apply(123.4).unwrap(), 0.5);
        assert_eq!(RiskMapping::new(Signal::Tab, 1.0, 0.0).apply(0.0).unwrap(), 0.5);
        assert_eq!(RiskMapping::new(Signal::Text, 2.0, -1.0).apply(0.5).unwrap(), 0.5);
        assert!(zero.apply(f64::INFINITY).is_err());
        assert!(zero.apply(f64::NAN).is_err());
    }

    #[test]
    fn saturates_inside_open_interval() {
        let m = RiskMapping::new(Signal::Text, 1e6, 0.0);
        let hi = m.apply(1e6).unwrap();
        let lo = m.apply(-1e6).unwrap();
        assert!(hi < 1.0 && hi > 0.5);
        assert!(lo > 0.0 && lo < 0.5);
        let huge = RiskMapping::new(Signal::Text, f64::MAX, 0.0);
        assert!(huge.apply(f64::MAX).unwrap() < 1.0);
    }

    #[test]
    fn persisted_shape() {
        let mut m = RiskMapping::new(Signal::Tab, 2.0, -1.0);
        m.fit_loss = Some(0.5);
        m.n_samples = Some(10);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, r#"{"signal":"tab","a":2.0,"b":-1.0,"fit_loss":0.5,"n_samples":10}"#);
        let back: RiskMapping = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }

    proptest! {
        #[test]
        fn open_interval_and_monotone(a in 0.0f64..50.0, b in -50.0f64..50.0, x in -1e3f64..1e3, dx in 0.0f64..10.0) {
            let m = RiskMapping::new(Signal::Tab, a, b);
            let lo = m.apply(x).unwrap();
            let hi = m.apply(x + dx).unwrap();
            prop_assert!(lo > 0.0 && lo < 1.0);
            prop_assert!(hi >= lo);
        }
    }
}
