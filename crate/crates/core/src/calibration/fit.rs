//! Two-parameter logistic fit by damped Newton iteration.

use serde::{Deserialize, Serialize};

use super::mapping::{sigmoid, RiskMapping, Signal};
use crate::error::{Error, Result};

/// One labeled step used to fit the risk mappings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub trace_id: String,
    pub step_index: usize,
    pub phi_tab: Option<f64>,
    pub phi_text: Option<f64>,
    /// 1 for the routing-boundary step, 0 for earlier steps.
    #[serde(with = "label01")]
    pub label: bool,
}

mod label01 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(D::Error::custom(format!("label must be 0 or 1, got {other}"))),
        }
    }
}

impl CalibrationSample {
    pub fn signal(&self, signal: Signal) -> Option<f64> {
        match signal {
            Signal::Tab => self.phi_tab,
            Signal::Text => self.phi_text,
        }
    }
}

/// Stopping rule for [`fit_sigmoid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            grad_tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub mapping: RiskMapping,
    /// Mean binary cross-entropy at the returned parameters.
    pub loss: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean BCE of σ(a·x + b) against `ys`.
pub fn mean_bce(xs: &[f64], ys: &[bool], a: f64, b: f64) -> f64 {
    let total: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let z = a * x + b;
            if y {
                softplus(-z)
            } else {
                softplus(z)
            }
        })
        .sum();
    total / xs.len() as f64
}

struct Derivs {
    grad: [f64; 2],
    hess: [[f64; 2]; 2],
}

fn derivs(xs: &[f64], ys: &[bool], a: f64, b: f64) -> Derivs {
    let mut g = [0.0; 2];
    let mut h = [[0.0; 2]; 2];
    for (&x, &y) in xs.iter().zip(ys) {
        let p = sigmoid(a * x + b);
        let r = p - f64::from(u8::from(y));
        let w = p * (1.0 - p);
        g[0] += r * x;
        g[1] += r;
        h[0][0] += w * x * x;
        h[0][1] += w * x;
        h[1][1] += w;
    }
    let n = xs.len() as f64;
    Derivs {
        grad: [g[0] / n, g[1] / n],
        hess: [[h[0][0] / n, h[0][1] / n], [h[0][1] / n, h[1][1] / n]],
    }
}

/// Newton direction when the Hessian is safely positive definite, steepest
/// descent otherwise.
fn direction(d: &Derivs) -> [f64; 2] {
    let [[haa, hab], [_, hbb]] = d.hess;
    let det = haa * hbb - hab * hab;
    let [ga, gb] = d.grad;
    if haa > 0.0 && det > 1e-14 * (haa * hbb).max(f64::MIN_POSITIVE) {
        let step = [-(hbb * ga - hab * gb) / det, -(haa * gb - hab * ga) / det];
        if step[0] * ga + step[1] * gb < 0.0 {
            return step;
        }
    }
    [-ga, -gb]
}

/// Fits σ(a·Φ + b) to the samples carrying `signal`, minimizing plain BCE.
///
/// Starts from the best constant predictor and only accepts steps that
/// decrease the loss, so the result never does worse than that constant.
pub fn fit_sigmoid(samples: &[CalibrationSample], signal: Signal) -> Result<RiskMapping> {
    fit_sigmoid_with(samples, signal, FitOptions::default()).map(|r| r.mapping)
}

pub fn fit_sigmoid_with(
    samples: &[CalibrationSample],
    signal: Signal,
    opts: FitOptions,
) -> Result<FitReport> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in samples {
        if let Some(phi) = s.signal(signal) {
            if !phi.is_finite() {
                return Err(Error::input(format!(
                    "non-finite {signal} uncertainty in sample {}#{}",
                    s.trace_id, s.step_index
                )));
            }
            xs.push(phi);
            ys.push(s.label);
        }
    }
    let positives = ys.iter().filter(|y| **y).count();
    if positives == 0 || positives == ys.len() {
        return Err(Error::Calibration(format!(
            "{signal} fit needs both classes; got {positives} positive of {} samples",
            ys.len()
        )));
    }

    let rate = positives as f64 / ys.len() as f64;
    let mut a = 0.0;
    let mut b = (rate / (1.0 - rate)).ln();
    let mut loss = mean_bce(&xs, &ys, a, b);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        let d = derivs(&xs, &ys, a, b);
        if d.grad[0].hypot(d.grad[1]) < opts.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let dir = direction(&d);
        let slope = dir[0] * d.grad[0] + dir[1] * d.grad[1];
        let mut t = 1.0;
        let mut step = None;
        for _ in 0..60 {
            let (na, nb) = (a + t * dir[0], b + t * dir[1]);
            let nl = mean_bce(&xs, &ys, na, nb);
            if nl <= loss + 1e-4 * t * slope {
                step = Some((na, nb, nl));
                break;
            }
            t *= 0.5;
        }
        match step {
            Some((na, nb, nl)) if nl < loss => {
                a = na;
                b = nb;
                loss = nl;
            }
            // no further decrease representable in f64
            _ => break,
        }
    }

    let mut mapping = RiskMapping::new(signal, a, b);
    mapping.fit_loss = Some(loss);
    mapping.n_samples = Some(xs.len());
    Ok(FitReport {
        mapping,
        loss,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(phi: f64, label: bool) -> CalibrationSample {
        CalibrationSample {
            trace_id: "t".into(),
            step_index: 1,
            phi_tab: Some(phi),
            phi_text: None,
            label,
        }
    }

    #[test]
    fn single_class_is_an_error() {
        let s = vec![sample(0.1, false), sample(0.2, false)];
        assert!(matches!(fit_sigmoid(&s, Signal::Tab), Err(Error::Calibration(_))));
        // text signal absent everywhere
        let s = vec![sample(0.1, false), sample(0.2, true)];
        assert!(matches!(fit_sigmoid(&s, Signal::Text), Err(Error::Calibration(_))));
    }

    #[test]
    fn separable_data_ranks_correctly() {
        let s: Vec<_> = [0.1, 0.2, 0.3, 0.9, 1.0, 1.2]
            .iter()
            .enumerate()
            .map(|(i, &x)| sample(x, i >= 3))
            .collect();
        let r = fit_sigmoid_with(&s, Signal::Tab, FitOptions::default()).unwrap();
        assert!(r.mapping.a > 0.0);
        let risk = |x| r.mapping.apply(x).unwrap();
        assert!(risk(0.9) > risk(0.3));
        // grid-search oracle: nothing on a coarse grid beats the fit
        let xs: Vec<f64> = s.iter().map(|c| c.phi_tab.unwrap()).collect();
        let ys: Vec<bool> = s.iter().map(|c| c.label).collect();
        for ai in 0..=40 {
            for bi in -40..=40 {
                let (a, b) = (ai as f64, bi as f64 * 0.5);
                assert!(r.loss <= mean_bce(&xs, &ys, a, b) + 1e-12);
            }
        }
    }

    #[test]
    fn sample_serde_uses_zero_one() {
        let s = sample(0.5, true);
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains(r#""label":1"#));
        assert!(serde_json::from_str::<CalibrationSample>(&json.replace(r#""label":1"#, r#""label":2"#)).is_err());
    }

    #[test]
    fn overlapping_classes_converge() {
        let s: Vec<_> = [(0.1, false), (0.2, true), (0.3, false), (0.5, true), (0.6, false), (0.9, true)]
            .iter()
            .map(|&(x, y)| sample(x, y))
            .collect();
        let r = fit_sigmoid_with(&s, Signal::Tab, FitOptions::default()).unwrap();
        assert!(r.converged);
        let d = derivs(
            &s.iter().map(|c| c.phi_tab.unwrap()).collect::<Vec<_>>(),
            &s.iter().map(|c| c.label).collect::<Vec<_>>(),
            r.mapping.a,
            r.mapping.b,
        );
        assert!(d.grad[0].hypot(d.grad[1]) < 1e-8);
    }
}
