use serde::{Deserialize, Serialize};

/// Where to look for the final answer in a terminal step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerPatterns {
    /// LaTeX-style commands whose braced argument is the answer, e.g. `\boxed`.
    #[serde(default = "default_commands")]
    pub commands: Vec<String>,
    /// Plain-text markers; the answer is whatever follows the last one.
    #[serde(default = "default_markers")]
    pub markers: Vec<String>,
}

fn default_commands() -> Vec<String> {
    vec!["\\boxed".into()]
}

fn default_markers() -> Vec<String> {
    vec!["Final Answer".into()]
}

impl Default for AnswerPatterns {
    fn default() -> Self {
        AnswerPatterns {
            commands: default_commands(),
            markers: default_markers(),
        }
    }
}

/// Braced argument starting right after `open` (which must index a `{`).
fn braced(text: &str, open: usize) -> Option<&str> {
    let mut depth = 0usize;
    for (i, c) in text[open..].char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[open + 1..open + i]);
                }
            }
            _ => {}
        }
    }
    None
}

impl AnswerPatterns {
    pub fn extract(&self, text: &str) -> Option<String> {
        let last_command = self
            .commands
            .iter()
            .filter(|c| !c.is_empty())
            .flat_map(|cmd| {
                text.match_indices(cmd.as_str()).filter_map(move |(at, _)| {
                    let open = at + cmd.len();
                    text[open..].starts_with('{').then_some(open)
                })
            })
            .max();
        if let Some(inner) = last_command.and_then(|open| braced(text, open)) {
            return Some(inner.trim().to_string());
        }

        let (at, marker) = self
            .markers
            .iter()
            .filter(|m| !m.is_empty())
            .filter_map(|m| text.rfind(m.as_str()).map(|at| (at, m)))
            .max_by_key(|(at, _)| *at)?;
        let mut rest = text[at + marker.len()..].trim_start();
        rest = rest.strip_prefix(':').unwrap_or(rest).trim_start();
        if let Some(after) = rest.strip_prefix("is") {
            if after.starts_with([' ', ':']) || after.is_empty() {
                rest = after.trim_start();
                rest = rest.strip_prefix(':').unwrap_or(rest).trim_start();
            }
        }
        let answer = rest.trim();
        (!answer.is_empty()).then(|| answer.to_string())
    }
}

/// Answer in the terminal step using the default patterns.
pub fn extract_answer(text: &str) -> Option<String> {
    AnswerPatterns::default().extract(text)
}
