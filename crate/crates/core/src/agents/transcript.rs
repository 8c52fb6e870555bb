use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{prompt_digest, AgentError, AgentRole};

/// One recorded exchange. The full prompt is kept next to its digest so a
/// lookup can confirm the match.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub digest: String,
    pub role: AgentRole,
    pub prompt: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recorded_unix: Option<u64>,
}

/// Recorded responses keyed by prompt digest. Persisted as JSON lines,
/// sorted by digest.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    entries: BTreeMap<String, TranscriptEntry>,
}

impl Transcript {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, digest: &str) -> Option<&TranscriptEntry> {
        self.entries.get(digest)
    }

    pub fn entries(&self) -> impl Iterator<Item = &TranscriptEntry> {
        self.entries.values()
    }

    /// Inserts an entry; the first response recorded for a digest wins.
    pub fn insert(&mut self, entry: TranscriptEntry) -> bool {
        if self.entries.contains_key(&entry.digest) {
            return false;
        }
        self.entries.insert(entry.digest.clone(), entry);
        true
    }

    pub fn model_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.entries().filter_map(|e| e.model.clone()).collect();
        names.sort();
        names.dedup();
        names
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for entry in self.entries.values() {
            out.push_str(&serde_json::to_string(entry).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, AgentError> {
        let mut t = Transcript::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry =
                serde_json::from_str(line).map_err(|e| AgentError::Transcript {
                    path: origin.to_string(),
                    message: format!("line {}: {e}", i + 1),
                })?;
            if prompt_digest(entry.role, &entry.prompt) != entry.digest {
                return Err(AgentError::Transcript {
                    path: origin.to_string(),
                    message: format!("line {}: digest does not match prompt", i + 1),
                });
            }
            t.insert(entry);
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let text = fs::read_to_string(path).map_err(|e| AgentError::Transcript {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<(), AgentError> {
        fs::write(path, self.to_jsonl()).map_err(|e| AgentError::Transcript {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}
