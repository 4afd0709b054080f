//! Token entropy and its per-group step averages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table_trie::TokenMask;

const MASS_TOLERANCE: f64 = 1e-9;

/// Predicted next-token distribution at one position, possibly truncated to
/// the top-k candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution")]
pub struct TokenDistribution {
    entries: Vec<(String, f64)>,
    coverage: f64,
    full: bool,
}

#[derive(Deserialize)]
struct RawDistribution {
    entries: Vec<(String, f64)>,
    full: bool,
}

impl TryFrom<RawDistribution> for TokenDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        TokenDistribution::new(raw.entries, raw.full)
    }
}

impl TokenDistribution {
    /// `full` states that `entries` enumerate the whole vocabulary; otherwise
    /// the missing mass is attributed to an unseen tail.
    pub fn new(entries: Vec<(String, f64)>, full: bool) -> Result<Self> {
        if let Some((tok, p)) = entries.iter().find(|(_, p)| !(*p > 0.0 && *p <= 1.0)) {
            return Err(Error::input(format!(
                "probability {p} for candidate {tok:?} is outside (0, 1]"
            )));
        }
        let coverage: f64 = entries.iter().map(|(_, p)| p).sum();
        if coverage > 1.0 + MASS_TOLERANCE {
            return Err(Error::input(format!(
                "distribution mass {coverage} exceeds 1"
            )));
        }
        Ok(TokenDistribution {
            entries,
            coverage,
            full,
        })
    }

    /// Candidates named by their position, for fixtures that only carry probabilities.
    pub fn from_probs(probs: &[f64], full: bool) -> Result<Self> {
        Self::new(
            probs
                .iter()
                .enumerate()
                .map(|(i, &p)| (i.to_string(), p))
                .collect(),
            full,
        )
    }

    /// A single certain outcome.
    pub fn certain(token: impl Into<String>) -> Self {
        TokenDistribution {
            entries: vec![(token.into(), 1.0)],
            coverage: 1.0,
            full: true,
        }
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn probs(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|(_, p)| *p)
    }

    pub fn coverage(&self) -> f64 {
        self.coverage
    }

    pub fn is_full(&self) -> bool {
        self.full
    }

    /// Probability mass outside the listed candidates (zero for full distributions).
    pub fn residual(&self) -> f64 {
        if self.full {
            0.0
        } else {
            (1.0 - self.coverage).max(0.0)
        }
    }
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Shannon entropy in nats. A truncated distribution's residual mass is
/// counted as one extra outcome.
pub fn token_entropy(dist: &TokenDistribution) -> f64 {
    let h = -dist.probs().map(plogp).sum::<f64>() - plogp(dist.residual());
    h.max(0.0)
}

/// Mean token entropy over the table-token and text-token groups of a step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepUncertainty {
    pub phi_tab: Option<f64>,
    pub phi_text: Option<f64>,
    pub n_tab: usize,
    pub n_text: usize,
}

pub fn step_uncertainty(entropies: &[f64], mask: &TokenMask) -> Result<StepUncertainty> {
    if entropies.len() != mask.len() {
        return Err(Error::input(format!(
            "{} entropies for a mask of {} tokens",
            entropies.len(),
            mask.len()
        )));
    }
    let (mut sum_tab, mut sum_text) = (0.0, 0.0);
    let (mut n_tab, mut n_text) = (0usize, 0usize);
    for (&h, &is_tab) in entropies.iter().zip(mask.bits()) {
        if is_tab {
            sum_tab += h;
            n_tab += 1;
        } else {
            sum_text += h;
            n_text += 1;
        }
    }
    let mean = |sum: f64, n: usize| (n > 0).then(|| sum / n as f64);
    Ok(StepUncertainty {
        phi_tab: mean(sum_tab, n_tab),
        phi_text: mean(sum_text, n_text),
        n_tab,
        n_text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Textbook definition over a full probability vector: sum of p * log(1/p).
    fn shannon(ps: &[f64]) -> f64 {
        ps.iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * (1.0 / p).ln())
            .sum()
    }

    #[test]
    fn one_hot_is_zero() {
        assert_eq!(token_entropy(&TokenDistribution::certain("x")), 0.0);
    }

    #[test]
    fn uniform_four() {
        let d = TokenDistribution::from_probs(&[0.25; 4], true).unwrap();
        assert!(close(token_entropy(&d), 1.386_294_361_119_890_6, 1e-12));
    }

    #[test]
    fn tail_lump() {
        let d = TokenDistribution::from_probs(&[0.6, 0.3], false).unwrap();
        let expected = 0.897_945_724_856_779_7;
        assert!(close(token_entropy(&d), expected, 1e-12));
        // same entries declared full: no tail term
        let full = TokenDistribution::from_probs(&[0.6, 0.3], true).unwrap();
        assert!(token_entropy(&full) < expected);
    }

    #[test]
    fn rejects_bad_mass() {
        assert!(TokenDistribution::from_probs(&[0.7, 0.4], false).is_err());
        assert!(TokenDistribution::from_probs(&[0.0, 0.4], false).is_err());
        assert!(TokenDistribution::from_probs(&[f64::NAN], false).is_err());
        assert!(serde_json::from_str::<TokenDistribution>(r#"{"entries":[["a",1.5]],"full":true}"#).is_err());
    }

    #[test]
    fn step_means() {
        let s = step_uncertainty(&[0.2, 0.4], &TokenMask::new(vec![true, true])).unwrap();
        assert!(close(s.phi_tab.unwrap(), 0.3, 1e-15));
        assert_eq!(s.phi_text, None);
        let s = step_uncertainty(&[0.5], &TokenMask::new(vec![false])).unwrap();
        assert_eq!((s.phi_tab, s.phi_text), (None, Some(0.5)));
        assert!(step_uncertainty(&[0.5], &TokenMask::new(vec![])).is_err());
    }

    #[test]
    fn step_means_match_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..5.0)).collect();
        let bits: Vec<bool> = (0..100).map(|_| rng.gen_bool(0.3)).collect();
        let s = step_uncertainty(&h, &TokenMask::new(bits.clone())).unwrap();
        let mut tab = Vec::new();
        let mut text = Vec::new();
        for i in 0..100 {
            if bits[i] { tab.push(h[i]) } else { text.push(h[i]) }
        }
        let oracle = |v: &[f64]| v.iter().fold(0.0, |a, x| a + x) / v.len() as f64;
        assert!(close(s.phi_tab.unwrap(), oracle(&tab), 1e-12));
        assert!(close(s.phi_text.unwrap(), oracle(&text), 1e-12));
    }

    #[test]
    fn matches_shannon_on_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.gen_range(1..40);
            let raw: Vec<f64> = (0..n).map(|_| -rng.gen_range(1e-12f64..1.0).ln()).collect();
            let total: f64 = raw.iter().sum();
            let ps: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let d = TokenDistribution::from_probs(&ps, true).unwrap();
            assert!(close(token_entropy(&d), shannon(&ps), 1e-9));
        }
    }

    proptest! {
        #[test]
        fn bounded_and_permutation_invariant(
            weights in proptest::collection::vec(0.01f64..1.0, 1..20),
            mass in 0.05f64..1.0,
            full in any::<bool>(),
            rot in 0usize..20,
        ) {
            let total: f64 = weights.iter().sum();
            let scale = if full { 1.0 } else { mass };
            let ps: Vec<f64> = weights.iter().map(|w| w / total * scale).collect();
            let d = TokenDistribution::from_probs(&ps, full).unwrap();
            let h = token_entropy(&d);
            let outcomes = ps.len() + usize::from(d.residual() > 0.0);
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (outcomes as f64).ln() + 1e-9);

            let mut rotated = ps.clone();
            rotated.rotate_left(rot % ps.len());
            let d2 = TokenDistribution::from_probs(&rotated, full).unwrap();
            prop_assert!((token_entropy(&d2) - h).abs() < 1e-12);
        }

        #[test]
        fn concatenation_is_weighted_mean(
            a in proptest::collection::vec(0.0f64..5.0, 1..30),
            b in proptest::collection::vec(0.0f64..5.0, 1..30),
            tab in any::<bool>(),
        ) {
            let mask = |n: usize| TokenMask::new(vec![tab; n]);
            let phi = |s: StepUncertainty| if tab { s.phi_tab.unwrap() } else { s.phi_text.unwrap() };
            let pa = phi(step_uncertainty(&a, &mask(a.len())).unwrap());
            let pb = phi(step_uncertainty(&b, &mask(b.len())).unwrap());
            let joined: Vec<f64> = a.iter().chain(&b).copied().collect();
            let pj = phi(step_uncertainty(&joined, &mask(joined.len())).unwrap());
            let weighted = (pa * a.len() as f64 + pb * b.len() as f64) / joined.len() as f64;
            prop_assert!((pj - weighted).abs() < 1e-12);
        }
    }
}
