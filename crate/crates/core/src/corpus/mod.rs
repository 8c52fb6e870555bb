//! Programs under test.
//!
//! A corpus file is UTF-8 with one JSON record per line:
//!
//! ```text
//! {"id":"s1","language":"python","source":"a=int(input())\nprint(10//a)\n","completeness":"complete","ground_truth_errors":["ZeroDivisionError"]}
//! ```
//!
//! `completeness`, `ground_truth_errors` and `companion_complete_id` are
//! optional; unknown fields are ignored. When `completeness` is absent it is
//! computed with [`classify_completeness`].

mod completeness;
mod lines;

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::predictor::normalize_exception_name;

pub use completeness::classify_source;
pub use lines::coverable_lines;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("record {record}: {message}")]
    Malformed { record: usize, message: String },
    #[error("record {record}: field `{field}`: {message}")]
    Field {
        record: usize,
        field: &'static str,
        message: String,
    },
    #[error("duplicate snippet id `{id}` (records {first} and {second})")]
    DuplicateId {
        id: String,
        first: usize,
        second: usize,
    },
    #[error("snippet `{0}` has an empty source")]
    EmptySource(String),
    #[error("unknown snippet id `{0}`")]
    UnknownSnippet(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Java,
    Python,
}

impl Language {
    pub fn as_str(self) -> &'static str {
        match self {
            Language::Java => "Java",
            Language::Python => "Python",
        }
    }

    fn parse(raw: &str) -> Option<Self> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "java" => Some(Language::Java),
            "python" | "python3" | "py" => Some(Language::Python),
            _ => None,
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Completeness {
    Complete,
    Incomplete,
}

impl Completeness {
    fn parse(raw: &str) -> Option<Self> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "complete" => Some(Completeness::Complete),
            "incomplete" => Some(Completeness::Incomplete),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceLine {
    /// 1-based.
    pub index: u32,
    pub text: String,
}

/// One program under test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSnippet {
    pub id: String,
    pub language: Language,
    pub source: String,
    pub lines: Vec<SourceLine>,
    pub completeness: Completeness,
    pub coverable_lines: BTreeSet<u32>,
    pub ground_truth_errors: Option<BTreeSet<String>>,
    pub companion_complete_id: Option<String>,
}

impl CodeSnippet {
    /// Builds a snippet, computing lines, coverable lines and (when not
    /// supplied) completeness.
    pub fn new(
        id: impl Into<String>,
        language: Language,
        source: impl Into<String>,
        completeness: Option<Completeness>,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        let source = source.into();
        if source.trim().is_empty() {
            return Err(CorpusError::EmptySource(id));
        }
        let lines = split_lines(&source);
        let coverable_lines = coverable_lines(language, &source);
        let completeness = completeness.unwrap_or_else(|| classify_source(language, &source));
        Ok(Self {
            id,
            language,
            source,
            lines,
            completeness,
            coverable_lines,
            ground_truth_errors: None,
            companion_complete_id: None,
        })
    }

    pub fn with_ground_truth<I, S>(mut self, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.ground_truth_errors = Some(
            names
                .into_iter()
                .map(|n| normalize_exception_name(n.as_ref()))
                .filter(|n| !n.is_empty())
                .collect(),
        );
        self
    }

    pub fn with_companion(mut self, id: impl Into<String>) -> Self {
        self.companion_complete_id = Some(id.into());
        self
    }

    pub fn line_count(&self) -> u32 {
        self.lines.len() as u32
    }

    /// Whether generated inputs can be checked by actually running code.
    pub fn verification_available(&self) -> bool {
        self.completeness == Completeness::Complete || self.companion_complete_id.is_some()
    }

    fn to_record(&self) -> Record {
        Record {
            id: self.id.clone(),
            language: self.language,
            source: self.source.clone(),
            completeness: self.completeness,
            ground_truth_errors: self.ground_truth_errors.clone(),
            companion_complete_id: self.companion_complete_id.clone(),
        }
    }
}

/// Recomputes the coverable-line estimate for a snippet.
pub fn compute_coverable_lines(snippet: &CodeSnippet) -> BTreeSet<u32> {
    coverable_lines(snippet.language, &snippet.source)
}

/// Classifies a snippet by parsing it as a standalone unit.
pub fn classify_completeness(snippet: &CodeSnippet) -> Completeness {
    classify_source(snippet.language, &snippet.source)
}

fn split_lines(source: &str) -> Vec<SourceLine> {
    source
        .lines()
        .enumerate()
        .map(|(i, text)| SourceLine {
            index: i as u32 + 1,
            text: text.to_string(),
        })
        .collect()
}

#[derive(Serialize)]
struct Record {
    id: String,
    language: Language,
    source: String,
    completeness: Completeness,
    #[serde(skip_serializing_if = "Option::is_none")]
    ground_truth_errors: Option<BTreeSet<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    companion_complete_id: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub name: String,
    pub snippets: Vec<CodeSnippet>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, snippets: Vec<CodeSnippet>) -> Result<Self, CorpusError> {
        let mut seen = std::collections::HashMap::new();
        for (i, s) in snippets.iter().enumerate() {
            if let Some(first) = seen.insert(s.id.clone(), i + 1) {
                return Err(CorpusError::DuplicateId {
                    id: s.id.clone(),
                    first,
                    second: i + 1,
                });
            }
        }
        Ok(Self {
            name: name.into(),
            snippets,
        })
    }

    pub fn len(&self) -> usize {
        self.snippets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snippets.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CodeSnippet> {
        self.snippets.iter().find(|s| s.id == id)
    }

    /// The program to execute when verifying `snippet`: itself when
    /// complete, otherwise its companion.
    pub fn verification_target<'a>(&'a self, snippet: &'a CodeSnippet) -> Option<&'a CodeSnippet> {
        match snippet.completeness {
            Completeness::Complete => Some(snippet),
            Completeness::Incomplete => snippet
                .companion_complete_id
                .as_deref()
                .and_then(|id| self.get(id)),
        }
    }

    /// Parses corpus text. `name` becomes the corpus name.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self, CorpusError> {
        let mut snippets = Vec::new();
        let mut seen: std::collections::HashMap<String, usize> = Default::default();
        for (line_no, line) in text.lines().enumerate() {
            let record = line_no + 1;
            if line.trim().is_empty() {
                continue;
            }
            let snippet = parse_record(record, line)?;
            if let Some(first) = seen.insert(snippet.id.clone(), record) {
                return Err(CorpusError::DuplicateId {
                    id: snippet.id,
                    first,
                    second: record,
                });
            }
            snippets.push(snippet);
        }
        Ok(Self {
            name: name.into(),
            snippets,
        })
    }

    /// Serializes back to the line-delimited record format.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.snippets {
            out.push_str(&serde_json::to_string(&s.to_record()).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, self.to_jsonl()).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn ids(&self) -> HashSet<&str> {
        self.snippets.iter().map(|s| s.id.as_str()).collect()
    }
}

/// Loads a corpus file; the corpus is named after the file stem.
pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Corpus::parse(name, &text)
}

fn parse_record(record: usize, line: &str) -> Result<CodeSnippet, CorpusError> {
    let value: Value = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
        record,
        message: e.to_string(),
    })?;
    let Value::Object(map) = value else {
        return Err(CorpusError::Malformed {
            record,
            message: "expected a JSON object".into(),
        });
    };

    let id = required_str(&map, record, "id")?;
    let language = required_str(&map, record, "language")?;
    let language = Language::parse(language).ok_or_else(|| CorpusError::Field {
        record,
        field: "language",
        message: format!("unsupported language `{language}`"),
    })?;
    let source = required_str(&map, record, "source")?;
    if source.trim().is_empty() {
        return Err(CorpusError::Field {
            record,
            field: "source",
            message: "must not be empty".into(),
        });
    }
    let completeness = match optional(&map, "completeness") {
        None => None,
        Some(Value::String(s)) => Some(Completeness::parse(s).ok_or_else(|| CorpusError::Field {
            record,
            field: "completeness",
            message: format!("expected `complete` or `incomplete`, got `{s}`"),
        })?),
        Some(_) => {
            return Err(CorpusError::Field {
                record,
                field: "completeness",
                message: "expected a string".into(),
            })
        }
    };
    let ground_truth = match optional(&map, "ground_truth_errors") {
        None => None,
        Some(Value::Array(items)) => {
            let mut names = Vec::with_capacity(items.len());
            for item in items {
                match item {
                    Value::String(s) => names.push(s.clone()),
                    _ => {
                        return Err(CorpusError::Field {
                            record,
                            field: "ground_truth_errors",
                            message: "expected an array of strings".into(),
                        })
                    }
                }
            }
            Some(names)
        }
        Some(_) => {
            return Err(CorpusError::Field {
                record,
                field: "ground_truth_errors",
                message: "expected an array of strings".into(),
            })
        }
    };
    let companion = match optional(&map, "companion_complete_id") {
        None => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            return Err(CorpusError::Field {
                record,
                field: "companion_complete_id",
                message: "expected a string".into(),
            })
        }
    };

    let mut snippet = CodeSnippet::new(id, language, source, completeness)?;
    if let Some(names) = ground_truth {
        snippet = snippet.with_ground_truth(names);
    }
    snippet.companion_complete_id = companion;
    Ok(snippet)
}

fn optional<'a>(map: &'a Map<String, Value>, field: &str) -> Option<&'a Value> {
    map.get(field).filter(|v| !v.is_null())
}

fn required_str<'a>(
    map: &'a Map<String, Value>,
    record: usize,
    field: &'static str,
) -> Result<&'a str, CorpusError> {
    match map.get(field) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(CorpusError::Field {
            record,
            field,
            message: "expected a string".into(),
        }),
        None => Err(CorpusError::Field {
            record,
            field,
            message: "missing".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, source: &str, completeness: Option<&str>) -> String {
        let mut obj = serde_json::json!({"id": id, "language": "python", "source": source});
        if let Some(c) = completeness {
            obj["completeness"] = Value::String(c.into());
        }
        obj.to_string()
    }

    #[test]
    fn single_record() {
        let corpus = Corpus::parse("t", &record("s1", "a=1\nb=2\nprint(a+b)\n", None)).unwrap();
        assert_eq!(corpus.len(), 1);
        let s = &corpus.snippets[0];
        assert_eq!(s.line_count(), 3);
        assert_eq!(s.completeness, Completeness::Complete);
        assert_eq!(s.coverable_lines, BTreeSet::from([1, 2, 3]));
    }

    #[test]
    fn missing_source_names_field() {
        let err = Corpus::parse("t", r#"{"id":"x","language":"java"}"#).unwrap_err();
        match err {
            CorpusError::Field { record, field, .. } => {
                assert_eq!(record, 1);
                assert_eq!(field, "source");
            }
            other => panic!("unexpected {other}"),
        }
        assert!(err_string(r#"{"id":"x","language":"java"}"#).contains("source"));
    }

    fn err_string(text: &str) -> String {
        Corpus::parse("t", text).unwrap_err().to_string()
    }

    #[test]
    fn malformed_json_names_record() {
        let text = format!("{}\n{{not json\n", record("a", "x=1", None));
        let msg = err_string(&text);
        assert!(msg.starts_with("record 2:"), "{msg}");
    }

    #[test]
    fn duplicate_id_rejected() {
        let text = format!("{}\n{}\n", record("a", "x=1", None), record("a", "y=1", None));
        assert!(matches!(
            Corpus::parse("t", &text),
            Err(CorpusError::DuplicateId { first: 1, second: 2, .. })
        ));
    }

    #[test]
    fn unknown_fields_ignored_and_supplied_completeness_wins() {
        let text = r#"{"id":"a","language":"python","source":"print(x)","completeness":"complete","extra":42}"#;
        let corpus = Corpus::parse("t", text).unwrap();
        // `x` is undeclared, but the corpus label takes precedence
        assert_eq!(corpus.snippets[0].completeness, Completeness::Complete);
        assert_eq!(
            classify_completeness(&corpus.snippets[0]),
            Completeness::Incomplete
        );
    }

    #[test]
    fn ground_truth_is_normalized() {
        let text = r#"{"id":"a","language":"java","source":"class A {}","ground_truth_errors":["java.lang.ArithmeticException: / by zero"]}"#;
        let corpus = Corpus::parse("t", text).unwrap();
        assert_eq!(
            corpus.snippets[0].ground_truth_errors,
            Some(BTreeSet::from(["ArithmeticException".to_string()]))
        );
    }

    #[test]
    fn split_of_complete_and_incomplete_records() {
        // 100 complete + 100 incomplete, mirroring a FixEval-style split
        let mut text = String::new();
        for i in 0..100 {
            text.push_str(&record(&format!("c{i}"), "n=int(input())\nprint(n)\n", None));
            text.push('\n');
        }
        for i in 0..100 {
            text.push_str(&record(&format!("i{i}"), "print(undefined_thing)\n", None));
            text.push('\n');
        }
        let corpus = Corpus::parse("fixeval", &text).unwrap();
        assert_eq!(corpus.len(), 200);
        let incomplete = corpus
            .snippets
            .iter()
            .filter(|s| s.completeness == Completeness::Incomplete)
            .count();
        assert_eq!(incomplete, 100);
    }

    #[test]
    fn incomplete_without_companion_is_unverifiable() {
        let s = CodeSnippet::new("a", Language::Python, "print(q)", None).unwrap();
        assert_eq!(s.completeness, Completeness::Incomplete);
        assert!(!s.verification_available());
        assert!(s.with_companion("b").verification_available());
    }

    #[test]
    fn verification_target_resolves_companion() {
        let complete = CodeSnippet::new("full", Language::Python, "q=1\nprint(q)", None).unwrap();
        let partial = CodeSnippet::new("part", Language::Python, "print(q)", None)
            .unwrap()
            .with_companion("full");
        let corpus = Corpus::new("c", vec![complete, partial]).unwrap();
        let target = corpus.verification_target(&corpus.snippets[1]).unwrap();
        assert_eq!(target.id, "full");
    }
}
