//! Predictive execution: ask the executor agent to simulate one input and
//! parse what it says.
//!
//! Response contract (labels matched case-insensitively, sections may span
//! several lines):
//!
//! ```text
//! Covered Lines: 1, 2, 3, 5
//! Runtime Errors: ArithmeticException
//! Reasoning: ...
//! ```

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use tracing::debug;

use crate::agents::{AgentError, AgentRole, Agents};
use crate::corpus::{CodeSnippet, Language};
use crate::engine::TestCase;
use crate::prompts::PromptTemplates;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Ok,
    Repaired,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionPrediction {
    pub test_id: u32,
    pub predicted_covered: BTreeSet<u32>,
    pub predicted_errors: BTreeSet<String>,
    pub reasoning: String,
    pub parse_status: ParseStatus,
    /// Executor calls spent on this prediction (1 + format retries).
    pub attempts: u32,
    /// Final raw response.
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedResponse {
    pub covered: BTreeSet<u32>,
    pub errors: BTreeSet<String>,
    pub reasoning: String,
    pub status: ParseStatus,
}

/// Reduces an exception mention to its bare type name:
/// `java.lang.ArithmeticException: / by zero` becomes `ArithmeticException`,
/// `ZeroDivisionError: division by zero` becomes `ZeroDivisionError`.
/// Idempotent.
pub fn normalize_exception_name(raw: &str) -> String {
    // each pass yields a substring of its input, so this terminates
    let mut current = normalize_once(raw).to_string();
    loop {
        let next = normalize_once(&current);
        if next == current {
            return current;
        }
        current = next.to_string();
    }
}

fn normalize_once(raw: &str) -> &str {
    let is_bullet = |c: char| c.is_whitespace() || matches!(c, '-' | '*' | '`' | '•');
    let mut s = raw.trim();
    if let Some(pos) = s.find("Exception in thread \"") {
        let rest = &s[pos + "Exception in thread \"".len()..];
        s = rest.find('"').map_or(rest, |q| &rest[q + 1..]).trim_start();
    }
    s = s.trim_start_matches(is_bullet);
    // numbered list marker: `1.` or `2)`
    let digits = s.len() - s.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 && matches!(s[digits..].chars().next(), Some('.' | ')')) {
        s = s[digits + 1..].trim_start_matches(is_bullet);
    }
    let end = s
        .find(|c: char| c.is_whitespace() || matches!(c, ':' | '(' | ',' | ';'))
        .unwrap_or(s.len());
    let token = &s[..end];
    let token = token.trim_matches(|c: char| !(c.is_alphanumeric() || c == '_' || c == '$'));
    let name = token.rsplit('.').next().unwrap_or(token);
    name.trim_matches(|c: char| !(c.is_alphanumeric() || c == '_' || c == '$'))
}

fn is_exception_name(name: &str) -> bool {
    const OTHER: &[&str] = &[
        "StopIteration",
        "KeyboardInterrupt",
        "SystemExit",
        "GeneratorExit",
        "Throwable",
    ];
    let mut chars = name.chars();
    let shaped = matches!(chars.next(), Some(c) if c.is_ascii_uppercase())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$');
    shaped
        && (name.ends_with("Error") || name.ends_with("Exception") || OTHER.contains(&name))
}

/// Counterpart of a Java exception in Python or vice versa. Not applied
/// during matching, which is same-language exact.
pub fn cross_language_equivalent(name: &str, target: Language) -> Option<&'static str> {
    const PAIRS: &[(&str, &str)] = &[
        ("ArithmeticException", "ZeroDivisionError"),
        ("ArrayIndexOutOfBoundsException", "IndexError"),
        ("IndexOutOfBoundsException", "IndexError"),
        ("StringIndexOutOfBoundsException", "IndexError"),
        ("NumberFormatException", "ValueError"),
        ("InputMismatchException", "ValueError"),
        ("NegativeArraySizeException", "ValueError"),
        ("NullPointerException", "TypeError"),
        ("ClassCastException", "TypeError"),
        ("NoSuchElementException", "EOFError"),
        ("StackOverflowError", "RecursionError"),
        ("OutOfMemoryError", "MemoryError"),
    ];
    match target {
        Language::Python => PAIRS.iter().find(|(j, _)| *j == name).map(|(_, p)| *p),
        Language::Java => PAIRS.iter().find(|(_, p)| *p == name).map(|(j, _)| *j),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Covered,
    Errors,
    Reasoning,
}

const COVERED_LABELS: &[&str] = &[
    "covered lines",
    "covered line numbers",
    "executed lines",
    "predicted coverage",
    "coverage",
];
const ERROR_LABELS: &[&str] = &[
    "runtime errors",
    "runtime error",
    "runtime exceptions",
    "predicted errors",
    "exceptions",
    "errors",
];
const REASONING_LABELS: &[&str] = &["reasoning", "step by step reasoning", "explanation"];

struct Header<'a> {
    section: Section,
    /// Label written exactly as in the contract, without decoration.
    canonical: bool,
    rest: &'a str,
}

fn match_header(line: &str) -> Option<Header<'_>> {
    let canonical_forms = [
        ("Covered Lines:", Section::Covered),
        ("Runtime Errors:", Section::Errors),
        ("Reasoning:", Section::Reasoning),
    ];
    for (label, section) in canonical_forms {
        if let Some(rest) = line.strip_prefix(label) {
            return Some(Header {
                section,
                canonical: true,
                rest,
            });
        }
    }
    let stripped = line.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '#' | '*' | '-' | '_' | '>'));
    let lower = stripped.to_ascii_lowercase();
    let groups = [
        (COVERED_LABELS, Section::Covered),
        (ERROR_LABELS, Section::Errors),
        (REASONING_LABELS, Section::Reasoning),
    ];
    for (labels, section) in groups {
        for label in labels {
            if !lower.starts_with(label) {
                continue;
            }
            let after = &stripped[label.len()..];
            let after = after.trim_start_matches(['*', '_', ' ']);
            if let Some(rest) = after.strip_prefix(':') {
                let rest = rest.trim_start_matches(['*', '_']);
                return Some(Header {
                    section,
                    canonical: false,
                    rest,
                });
            }
        }
    }
    None
}

fn parse_lines(content: &str) -> BTreeSet<u32> {
    let mut out = BTreeSet::new();
    let normalized = content.replace(['\u{2013}', '\u{2014}'], "-");
    for item in normalized.split(|c: char| c == ',' || c == ';' || c.is_whitespace()) {
        let item = item.trim_matches(|c: char| !(c.is_ascii_digit() || c == '-'));
        if item.is_empty() {
            continue;
        }
        if let Some((a, b)) = item.split_once('-') {
            if let (Ok(a), Ok(b)) = (a.parse::<u32>(), b.parse::<u32>()) {
                if a <= b && b - a <= 10_000 {
                    out.extend(a..=b);
                }
                continue;
            }
        }
        if let Ok(n) = item.parse::<u32>() {
            out.insert(n);
        }
    }
    out
}

/// Exception names mentioned one per item (comma, semicolon or line
/// separated); items that do not look like exception types are ignored.
pub fn extract_exception_names(content: &str) -> BTreeSet<String> {
    parse_errors(content)
}

fn parse_errors(content: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for item in content.split([',', ';', '\n']) {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        let name = normalize_exception_name(item);
        if is_exception_name(&name) {
            out.insert(name);
        }
    }
    out
}

/// Tolerant parse of an executor response. Never fails; unrecognisable
/// text yields `ParseStatus::Failed` with empty sets.
pub fn parse_pe_response(text: &str) -> ParsedResponse {
    let mut sections: Vec<(Section, bool, String)> = Vec::new();
    let mut preamble = false;
    for line in text.lines() {
        if let Some(h) = match_header(line) {
            sections.push((h.section, h.canonical, h.rest.trim().to_string()));
            continue;
        }
        match sections.last_mut() {
            Some((_, _, body)) => {
                body.push('\n');
                body.push_str(line);
            }
            None if !line.trim().is_empty() => preamble = true,
            None => {}
        }
    }

    let has = |s: Section| sections.iter().any(|(sec, _, _)| *sec == s);
    if !has(Section::Covered) && !has(Section::Errors) {
        return ParsedResponse {
            covered: BTreeSet::new(),
            errors: BTreeSet::new(),
            reasoning: text.trim().to_string(),
            status: ParseStatus::Failed,
        };
    }

    let mut covered = BTreeSet::new();
    let mut errors = BTreeSet::new();
    let mut reasoning = Vec::new();
    for (section, _, body) in &sections {
        match section {
            Section::Covered => covered.extend(parse_lines(body)),
            Section::Errors => errors.extend(parse_errors(body)),
            Section::Reasoning => reasoning.push(body.trim().to_string()),
        }
    }

    let order: Vec<Section> = sections.iter().map(|(s, _, _)| *s).collect();
    let canonical = !preamble
        && order == [Section::Covered, Section::Errors, Section::Reasoning]
        && sections.iter().all(|(_, c, _)| *c);
    ParsedResponse {
        covered,
        errors,
        reasoning: reasoning.join("\n"),
        status: if canonical {
            ParseStatus::Ok
        } else {
            ParseStatus::Repaired
        },
    }
}

/// Canonical rendering of a response; `parse_pe_response` inverts it.
pub fn render_pe_response(
    covered: &BTreeSet<u32>,
    errors: &BTreeSet<String>,
    reasoning: &str,
) -> String {
    let lines: Vec<String> = covered.iter().map(u32::to_string).collect();
    let errs = if errors.is_empty() {
        "none".to_string()
    } else {
        errors.iter().cloned().collect::<Vec<_>>().join(", ")
    };
    format!(
        "Covered Lines: {}\nRuntime Errors: {}\nReasoning: {}",
        lines.join(", "),
        errs,
        reasoning.trim()
    )
}

/// Builds the executor prompt, calls the agent and parses the answer,
/// retrying with a format reminder while the answer is unparsable.
pub fn predict_execution(
    agents: &Agents,
    templates: &PromptTemplates,
    snippet: &CodeSnippet,
    test_case: &TestCase,
    format_retries: u32,
) -> Result<ExecutionPrediction, AgentError> {
    let base = templates
        .pe(snippet, &test_case.input_text)
        .map_err(|_| AgentError::EmptyPrompt)?;
    let mut prompt = base.clone();
    let mut attempts = 0;
    loop {
        attempts += 1;
        let response = agents.complete(AgentRole::PredictiveExecutor, &prompt)?;
        let parsed = parse_pe_response(&response);
        if parsed.status != ParseStatus::Failed || attempts > format_retries {
            debug!(test = test_case.id, status = ?parsed.status, attempts, "prediction parsed");
            return Ok(ExecutionPrediction {
                test_id: test_case.id,
                predicted_covered: parsed.covered,
                predicted_errors: parsed.errors,
                reasoning: parsed.reasoning,
                parse_status: parsed.status,
                attempts,
                response,
            });
        }
        prompt = templates.with_pe_reminder(&base);
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::agents::ScriptedBackend;
    use crate::prompts::Phase;

    #[test]
    fn normalize_examples() {
        assert_eq!(
            normalize_exception_name("java.util.InputMismatchException"),
            "InputMismatchException"
        );
        assert_eq!(
            normalize_exception_name("ZeroDivisionError: division by zero"),
            "ZeroDivisionError"
        );
        assert_eq!(
            normalize_exception_name("java.lang.ArithmeticException: / by zero"),
            "ArithmeticException"
        );
        assert_eq!(
            normalize_exception_name("ArithmeticException (division by zero)"),
            "ArithmeticException"
        );
        assert_eq!(normalize_exception_name("  `IndexError`  "), "IndexError");
        assert_eq!(normalize_exception_name("1. ValueError"), "ValueError");
        assert_eq!(normalize_exception_name("MyCustomThing"), "MyCustomThing");
    }

    #[test]
    fn normalize_jvm_trace_first_line() {
        // first stderr line of `java Main` for a program computing 1/0
        let trace = "Exception in thread \"main\" java.lang.ArithmeticException: / by zero\n\tat Main.main(Main.java:3)";
        let first = trace.lines().next().unwrap();
        assert_eq!(normalize_exception_name(first), "ArithmeticException");
    }

    #[test]
    fn canonical_response() {
        let p = parse_pe_response("Covered Lines: 1,2,3\nRuntime Errors: none\nReasoning: straight line");
        assert_eq!(p.covered, BTreeSet::from([1, 2, 3]));
        assert!(p.errors.is_empty());
        assert_eq!(p.reasoning, "straight line");
        assert_eq!(p.status, ParseStatus::Ok);
    }

    #[test]
    fn error_with_message() {
        let p = parse_pe_response(
            "Covered Lines: 1, 2\nRuntime Errors: ArithmeticException (division by zero)\nReasoning: b is 0",
        );
        assert_eq!(p.errors, BTreeSet::from(["ArithmeticException".to_string()]));
        assert_eq!(p.status, ParseStatus::Ok);
    }

    #[test]
    fn prose_before_headers_is_repaired() {
        let text = "Let me think about this.\nFirst n=5.\n\n**Covered Lines:** 1-3, 5\n**Runtime Errors:** java.lang.NullPointerException\nReasoning: x is null";
        let p = parse_pe_response(text);
        assert_eq!(p.status, ParseStatus::Repaired);
        assert_eq!(p.covered, BTreeSet::from([1, 2, 3, 5]));
        assert_eq!(p.errors, BTreeSet::from(["NullPointerException".to_string()]));
    }

    #[test]
    fn missing_sections_fail() {
        let p = parse_pe_response("I cannot help with that.");
        assert_eq!(p.status, ParseStatus::Failed);
        assert!(p.covered.is_empty() && p.errors.is_empty());
        assert_eq!(parse_pe_response("").status, ParseStatus::Failed);
    }

    #[test]
    fn multiline_sections() {
        let text = "covered lines:\n1, 2,\n4\nruntime errors:\n- IndexError: list index out of range\n- ValueError\nreasoning:\nstep 1\nstep 2";
        let p = parse_pe_response(text);
        assert_eq!(p.covered, BTreeSet::from([1, 2, 4]));
        assert_eq!(
            p.errors,
            BTreeSet::from(["IndexError".to_string(), "ValueError".to_string()])
        );
        assert_eq!(p.reasoning, "step 1\nstep 2");
        assert_eq!(p.status, ParseStatus::Repaired);
    }

    #[test]
    fn none_variants_are_empty() {
        for none in ["none", "None", "None.", "N/A", "no runtime errors", "none (loop never entered)"] {
            let p = parse_pe_response(&format!("Covered Lines: 1\nRuntime Errors: {none}\nReasoning: r"));
            assert!(p.errors.is_empty(), "{none}: {:?}", p.errors);
        }
    }

    #[test]
    fn equivalence_table() {
        assert_eq!(
            cross_language_equivalent("ArithmeticException", Language::Python),
            Some("ZeroDivisionError")
        );
        assert_eq!(
            cross_language_equivalent("IndexError", Language::Java),
            Some("ArrayIndexOutOfBoundsException")
        );
        assert_eq!(cross_language_equivalent("Foo", Language::Python), None);
    }

    fn fig2() -> CodeSnippet {
        CodeSnippet::new(
            "fig2",
            Language::Java,
            "import java.util.*;\npublic class Main {\n  public static void main(String[] args){\n    Scanner sc = new Scanner(System.in);\n    int n = sc.nextInt();\n    int k = sc.nextInt();\n    int as[] = new int[n];\n    for (int i = 0; i < n; i++) as[i] = sc.nextInt();\n    for (int i = 0; i < k && (k+i) < n; i++) {\n      if (as[k+i] > as[i]) System.out.println(\"Yes\");\n      else System.out.println(\"No\");\n    }\n  }\n}\n",
            None,
        )
        .unwrap()
    }

    fn test_case(input: &str) -> TestCase {
        TestCase::new(1, input, Phase::DualObjective)
    }

    #[test]
    fn fig2_correct_analysis() {
        // n=5, k=6: 6+0 < 5 is false, so the second loop body never runs
        let response = "Covered Lines: 1, 2, 3, 4, 5, 6, 7, 8, 9\nRuntime Errors: none\nReasoning: n=5 and k=6; the loop condition (k+i) < n is 6 < 5, false, so lines 10 and 11 never execute.";
        let backend = ScriptedBackend::new().with_queue(AgentRole::PredictiveExecutor, [response]);
        let agents = Agents::with_backend(Arc::new(backend));
        let pred = predict_execution(
            &agents,
            &PromptTemplates::default(),
            &fig2(),
            &test_case("5 6\n1 2 3 4 5"),
            2,
        )
        .unwrap();
        assert!(pred.predicted_errors.is_empty());
        assert!(!pred.predicted_covered.contains(&10));
        assert!(!pred.predicted_covered.contains(&11));
        assert_eq!(pred.parse_status, ParseStatus::Ok);
    }

    #[test]
    fn retries_then_gives_up() {
        let backend = ScriptedBackend::new().with_queue(
            AgentRole::PredictiveExecutor,
            ["nonsense", "still nonsense", "Covered Lines: 4\nRuntime Errors: none\nReasoning: ok"],
        );
        let agents = Agents::with_backend(Arc::new(backend));
        let t = PromptTemplates::default();
        let pred = predict_execution(&agents, &t, &fig2(), &test_case("1"), 2).unwrap();
        assert_eq!(pred.attempts, 3);
        assert_eq!(pred.parse_status, ParseStatus::Ok);

        let backend = ScriptedBackend::new()
            .with_queue(AgentRole::PredictiveExecutor, ["x", "y", "z", "unused"]);
        let agents = Agents::with_backend(Arc::new(backend));
        let pred = predict_execution(&agents, &t, &fig2(), &test_case("1"), 2).unwrap();
        assert_eq!(pred.attempts, 3);
        assert_eq!(pred.parse_status, ParseStatus::Failed);
        assert!(pred.predicted_covered.is_empty());
        assert_eq!(agents.calls(AgentRole::PredictiveExecutor), 3);
    }

    #[test]
    fn transport_failure_propagates() {
        let agents = Agents::with_backend(Arc::new(ScriptedBackend::new()));
        let err = predict_execution(&agents, &PromptTemplates::default(), &fig2(), &test_case("1"), 2);
        assert!(matches!(err, Err(AgentError::ScriptExhausted(_))));
    }

    fn exception_name() -> impl Strategy<Value = String> {
        "[A-Z][A-Za-z0-9]{0,12}(Error|Exception)"
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(raw in "\\PC{1,40}") {
            let once = normalize_exception_name(&raw);
            prop_assert_eq!(normalize_exception_name(&once), once.clone());
        }

        #[test]
        fn qualified_names_strip(pkg in "[a-z]{1,6}(\\.[a-z]{1,6}){0,3}", name in exception_name(), msg in "[ -~]{0,20}") {
            let raw = format!("{pkg}.{name}: {msg}");
            prop_assert_eq!(normalize_exception_name(&raw), name);
        }

        #[test]
        fn parse_never_panics(text in "\\PC{0,200}") {
            let p = parse_pe_response(&text);
            if p.status == ParseStatus::Failed {
                prop_assert!(p.covered.is_empty() && p.errors.is_empty());
            }
        }

        #[test]
        fn render_parse_fixpoint(
            covered in proptest::collection::btree_set(1u32..500, 0..30),
            errors in proptest::collection::btree_set(exception_name(), 0..5),
            reasoning in "[a-z][a-z ,.]{0,60}",
        ) {
            let text = render_pe_response(&covered, &errors, &reasoning);
            let first = parse_pe_response(&text);
            prop_assert_eq!(first.status, ParseStatus::Ok);
            prop_assert_eq!(&first.covered, &covered);
            prop_assert_eq!(&first.errors, &errors);
            let again = parse_pe_response(&render_pe_response(&first.covered, &first.errors, &first.reasoning));
            prop_assert_eq!(again, first);
        }
    }
}
