use serde::{Deserialize, Serialize};

use crate::prompts::Phase;

/// One generated standard-input payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    /// Iteration that produced it.
    pub id: u32,
    pub input_text: String,
    pub phase: Phase,
    pub normalized_form: String,
}

impl TestCase {
    pub fn new(id: u32, input_text: impl Into<String>, phase: Phase) -> Self {
        let input_text = input_text.into();
        let normalized_form = normalize_input(&input_text);
        Self {
            id,
            input_text,
            phase,
            normalized_form,
        }
    }
}

/// CRLF to LF, trailing whitespace stripped per line, trailing empty lines
/// dropped.
pub fn normalize_input(text: &str) -> String {
    let unified = text.replace("\r\n", "\n").replace('\r', "\n");
    let mut lines: Vec<&str> = unified.split('\n').map(str::trim_end).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines.join("\n")
}

const HEADER: &str = "test case input";

/// Extracts the payload that follows the `Test Case Input:` header of a
/// generator response. Returns `None` when the header is missing or the
/// payload is empty or still holds only the `<input k>` placeholders.
pub fn parse_tcg_output(response: &str) -> Option<String> {
    let unified = response.replace("\r\n", "\n");
    let lines: Vec<&str> = unified
        .split('\n')
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect();

    let (at, rest) = lines.iter().enumerate().find_map(|(i, line)| {
        let lower = line.to_ascii_lowercase();
        let pos = lower.find(HEADER)?;
        let after = &line[pos + HEADER.len()..];
        let after = after.trim_start_matches(['*', '_', ' ']);
        let after = after.strip_prefix(':')?;
        Some((i, after.trim_start_matches(['*', '_']).trim()))
    })?;

    let mut payload: Vec<&str> = Vec::new();
    if !rest.is_empty() {
        payload.push(rest);
    }
    payload.extend(lines[at + 1..].iter().map(|l| l.trim_end()));
    while payload.first().is_some_and(|l| l.trim().is_empty()) {
        payload.remove(0);
    }
    while payload.last().is_some_and(|l| l.trim().is_empty()) {
        payload.pop();
    }
    if payload.is_empty() || payload.iter().all(|l| is_placeholder(l)) {
        return None;
    }
    Some(payload.join("\n"))
}

fn is_placeholder(line: &str) -> bool {
    let t = line.trim().trim_end_matches("...").trim();
    if t.is_empty() || t == "..." {
        return true;
    }
    t.strip_prefix("<input")
        .and_then(|r| r.strip_suffix('>'))
        .is_some_and(|n| n.trim().chars().all(|c| c.is_ascii_digit() || c == 'k'))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_input("5 6 \n1 2 3 4 5\r\n"), "5 6\n1 2 3 4 5");
        assert_eq!(normalize_input("5 6\n1 2 3 4 5"), "5 6\n1 2 3 4 5");
        assert_ne!(normalize_input("6 5\n1 2 3 4 5"), normalize_input("5 6\n1 2 3 4 5"));
        assert_eq!(normalize_input("a\n\n\n"), "a");
        assert_eq!(normalize_input(" a"), " a");
    }

    #[test]
    fn normalization_is_idempotent() {
        for s in ["x \r\ny\t\n\n", "", "\n", "a\r\rb"] {
            let once = normalize_input(s);
            assert_eq!(normalize_input(&once), once);
        }
    }

    #[test]
    fn plain_frame() {
        assert_eq!(
            parse_tcg_output("Test Case Input:\n5 6\n1 2 3 4 5").as_deref(),
            Some("5 6\n1 2 3 4 5")
        );
    }

    #[test]
    fn decorated_and_fenced() {
        let r = "Here you go.\n**Test Case Input:**\n```\n0\n```\n";
        assert_eq!(parse_tcg_output(r).as_deref(), Some("0"));
        assert_eq!(parse_tcg_output("test case input: 7").as_deref(), Some("7"));
    }

    #[test]
    fn unparsable_outputs() {
        assert_eq!(parse_tcg_output("5 6\n1 2"), None);
        assert_eq!(parse_tcg_output("Test Case Input:\n\n"), None);
        assert_eq!(parse_tcg_output("Test Case Input:\n<input 1>\n<input 2>..."), None);
        assert_eq!(parse_tcg_output(""), None);
    }
}
