/// Judges a predicted final answer against the gold answer.
pub trait Evaluator: Send + Sync {
    fn is_correct(&self, predicted: &str, gold: &str) -> bool;
}

impl<F> Evaluator for F
where
    F: Fn(&str, &str) -> bool + Send + Sync,
{
    fn is_correct(&self, predicted: &str, gold: &str) -> bool {
        self(predicted, gold)
    }
}

/// Normalized exact match with a numeric fallback.
///
/// Numbers compare with relative tolerance `rel_tol` after dropping thousands
/// separators, currency and percent signs. Everything else compares on
/// lowercase alphanumerics only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactMatch {
    pub rel_tol: f64,
}

impl Default for ExactMatch {
    fn default() -> Self {
        ExactMatch { rel_tol: 1e-6 }
    }
}

fn as_number(s: &str) -> Option<f64> {
    let cleaned: String = s
        .trim()
        .trim_end_matches('.')
        .chars()
        .filter(|c| !matches!(c, ',' | '%' | '$' | ' '))
        .collect();
    cleaned.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn squash(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

impl Evaluator for ExactMatch {
    fn is_correct(&self, predicted: &str, gold: &str) -> bool {
        if let (Some(p), Some(g)) = (as_number(predicted), as_number(gold)) {
            let scale = p.abs().max(g.abs());
            return (p - g).abs() <= self.rel_tol * scale;
        }
        squash(predicted) == squash(gold)
    }
}
