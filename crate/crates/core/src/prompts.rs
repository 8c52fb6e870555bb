//! Prompt construction.
//!
//! Templates are plain text with `{name}` placeholders. Built-in copies live
//! in `templates/`; any file of the same name in an override directory
//! replaces the built-in one.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{CodeSnippet, Language};
use crate::engine::CoverageLedger;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("snippet `{0}` has an empty source")]
    EmptySource(String),
    #[error("test input must not be empty")]
    EmptyTestInput,
    #[error("ledger belongs to `{ledger}`, not `{snippet}`")]
    LedgerMismatch { ledger: String, snippet: String },
    #[error("template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Generation phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Raise coverage and trigger errors.
    DualObjective,
    /// Trigger errors only.
    ErrorFocus,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::DualObjective => "dual-objective",
            Phase::ErrorFocus => "error-focus",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marker {
    Covered,
    Uncovered,
    NonCoverable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedLine {
    pub index: u32,
    pub text: String,
    pub marker: Marker,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedSource {
    pub lines: Vec<AnnotatedLine>,
}

impl AnnotatedSource {
    pub fn uncovered_count(&self) -> usize {
        self.lines
            .iter()
            .filter(|l| l.marker == Marker::Uncovered)
            .count()
    }

    /// `N: text`, with `!` between the number and the text of uncovered lines.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            let bang = if line.marker == Marker::Uncovered { "!" } else { "" };
            out.push_str(&format!("{}: {bang}{}\n", line.index, line.text));
        }
        out
    }
}

/// Numbered listing without coverage markers.
pub fn numbered_source(snippet: &CodeSnippet) -> String {
    let mut out = String::new();
    for line in &snippet.lines {
        out.push_str(&format!("{}: {}\n", line.index, line.text));
    }
    out
}

pub fn annotate_uncovered(
    snippet: &CodeSnippet,
    ledger: &CoverageLedger,
) -> Result<AnnotatedSource, PromptError> {
    if ledger.snippet_id != snippet.id {
        return Err(PromptError::LedgerMismatch {
            ledger: ledger.snippet_id.clone(),
            snippet: snippet.id.clone(),
        });
    }
    let lines = snippet
        .lines
        .iter()
        .map(|l| {
            let marker = if !snippet.coverable_lines.contains(&l.index) {
                Marker::NonCoverable
            } else if ledger.covered.contains(&l.index) {
                Marker::Covered
            } else {
                Marker::Uncovered
            };
            AnnotatedLine {
                index: l.index,
                text: l.text.clone(),
                marker,
            }
        })
        .collect();
    Ok(AnnotatedSource { lines })
}

/// One entry of the error-scenario catalog shown to the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErrorScenario {
    pub name: &'static str,
    pub description: &'static str,
}

const JAVA_CATALOG: &[ErrorScenario] = &[
    ErrorScenario {
        name: "InputMismatchException",
        description: "Provide an input value whose data type is different than the one specified.",
    },
    ErrorScenario {
        name: "ArithmeticException",
        description: "Test cases that could raise arithmetic exceptions include division by zero, overflow, underflow, and attempts to perform invalid operations, e.g., taking the square root of a negative number.",
    },
    ErrorScenario {
        name: "NullPointerException",
        description: "Create a scenario where a variable is explicitly set to null before usage.",
    },
    ErrorScenario {
        name: "NumberFormatException",
        description: "A value that cannot be parsed to the expected data type, e.g., a non-numeric string.",
    },
    ErrorScenario {
        name: "ArrayIndexOutOfBoundsException or IndexOutOfBoundsException",
        description: "Design input values leading to accessing array or list indices beyond their bounds.",
    },
];

const PYTHON_CATALOG: &[ErrorScenario] = &[
    ErrorScenario {
        name: "ValueError",
        description: "Provide an input value whose type or format is different than the one expected, e.g., a non-numeric string where a number is parsed, or an invalid math operation such as the square root of a negative number.",
    },
    ErrorScenario {
        name: "ZeroDivisionError",
        description: "Test cases that divide or take the modulo by zero; consider overflow (OverflowError) as well.",
    },
    ErrorScenario {
        name: "TypeError",
        description: "Create a scenario where a value is None or of the wrong type when an operation uses it.",
    },
    ErrorScenario {
        name: "IndexError",
        description: "Design input values leading to accessing list, tuple or string indices beyond their bounds.",
    },
    ErrorScenario {
        name: "NameError",
        description: "Drive execution into a path that uses a name before it is defined.",
    },
];

pub fn error_catalog(language: Language) -> &'static [ErrorScenario] {
    match language {
        Language::Java => JAVA_CATALOG,
        Language::Python => PYTHON_CATALOG,
    }
}

fn render_catalog(language: Language) -> String {
    let mut out = String::new();
    for s in error_catalog(language) {
        out.push_str(s.name);
        out.push_str(": ");
        out.push_str(s.description);
        out.push('\n');
    }
    out.push_str("(Other types of runtime errors and exceptions)");
    out
}

/// Substitutes `{name}` placeholders in a single left-to-right pass.
/// Unknown placeholders and braces inside substituted values are left alone.
fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let replaced = after.find('}').and_then(|close| {
            let key = &after[..close];
            vars.iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| (close, *v))
        });
        match replaced {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

macro_rules! builtin {
    ($name:literal) => {
        include_str!(concat!("../templates/", $name, ".txt"))
    };
}

/// The prompt templates in use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub phase1: String,
    pub phase2: String,
    pub basic: String,
    pub pe: String,
    pub vanilla: String,
    pub frame: String,
    pub tcg_reminder: String,
    pub pe_reminder: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            phase1: builtin!("phase1").into(),
            phase2: builtin!("phase2").into(),
            basic: builtin!("basic").into(),
            pe: builtin!("pe").into(),
            vanilla: builtin!("vanilla").into(),
            frame: builtin!("frame").into(),
            tcg_reminder: builtin!("tcg_reminder").into(),
            pe_reminder: builtin!("pe_reminder").into(),
        }
    }
}

impl PromptTemplates {
    /// Built-ins, with `<name>.txt` files from `dir` taking precedence.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut t = Self::default();
        for (name, slot) in t.slots_mut() {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                *slot = std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
            }
        }
        Ok(t)
    }

    fn slots_mut(&mut self) -> [(&'static str, &mut String); 8] {
        [
            ("phase1", &mut self.phase1),
            ("phase2", &mut self.phase2),
            ("basic", &mut self.basic),
            ("pe", &mut self.pe),
            ("vanilla", &mut self.vanilla),
            ("frame", &mut self.frame),
            ("tcg_reminder", &mut self.tcg_reminder),
            ("pe_reminder", &mut self.pe_reminder),
        ]
    }

    /// SHA-256 of each template, for run fingerprints.
    pub fn hashes(&self) -> BTreeMap<String, String> {
        let mut copy = self.clone();
        copy.slots_mut()
            .into_iter()
            .map(|(name, text)| (name.to_string(), hex::encode(Sha256::digest(text.as_bytes()))))
            .collect()
    }

    /// Output frame shared by every generator prompt.
    pub fn output_frame(&self) -> &str {
        self.frame.trim_end()
    }

    /// Dual-objective prompt: annotated source plus the error catalog.
    pub fn phase1(&self, annotated: &AnnotatedSource, language: Language) -> String {
        render(
            &self.phase1,
            &[
                ("language", language.as_str()),
                ("error_catalog", &render_catalog(language)),
                ("output_frame", self.output_frame()),
                ("annotated_source", annotated.render().trim_end()),
            ],
        )
    }

    /// Error-only prompt; carries no coverage annotation.
    pub fn phase2(&self, snippet: &CodeSnippet) -> String {
        render(
            &self.phase2,
            &[
                ("language", snippet.language.as_str()),
                ("error_catalog", &render_catalog(snippet.language)),
                ("output_frame", self.output_frame()),
                ("source", numbered_source(snippet).trim_end()),
            ],
        )
    }

    /// Generator prompt with no feedback and no error catalog.
    pub fn basic(&self, snippet: &CodeSnippet) -> String {
        render(
            &self.basic,
            &[
                ("language", snippet.language.as_str()),
                ("output_frame", self.output_frame()),
                ("source", numbered_source(snippet).trim_end()),
            ],
        )
    }

    pub fn pe(&self, snippet: &CodeSnippet, test_input: &str) -> Result<String, PromptError> {
        if test_input.is_empty() {
            return Err(PromptError::EmptyTestInput);
        }
        Ok(render(
            &self.pe,
            &[
                ("language", snippet.language.as_str()),
                ("source", numbered_source(snippet).trim_end()),
                ("test_input", test_input),
            ],
        ))
    }

    pub fn vanilla(&self, snippet: &CodeSnippet) -> Result<String, PromptError> {
        if snippet.source.trim().is_empty() {
            return Err(PromptError::EmptySource(snippet.id.clone()));
        }
        Ok(render(
            &self.vanilla,
            &[
                ("language", snippet.language.as_str()),
                ("source", snippet.source.trim_end()),
            ],
        ))
    }

    pub fn with_tcg_reminder(&self, prompt: &str) -> String {
        format!("{prompt}\n\n{}", self.tcg_reminder.trim_end())
    }

    pub fn with_pe_reminder(&self, prompt: &str) -> String {
        format!("{prompt}\n\n{}", self.pe_reminder.trim_end())
    }
}

pub fn build_phase1_prompt(
    templates: &PromptTemplates,
    annotated: &AnnotatedSource,
    language: Language,
) -> String {
    templates.phase1(annotated, language)
}

pub fn build_phase2_prompt(templates: &PromptTemplates, snippet: &CodeSnippet) -> String {
    templates.phase2(snippet)
}

pub fn build_pe_prompt(
    templates: &PromptTemplates,
    snippet: &CodeSnippet,
    test_input: &str,
) -> Result<String, PromptError> {
    templates.pe(snippet, test_input)
}

pub fn build_vanilla_prompt(
    templates: &PromptTemplates,
    snippet: &CodeSnippet,
) -> Result<String, PromptError> {
    templates.vanilla(snippet)
}
