use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Cumulative predicted coverage of one snippet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageLedger {
    pub snippet_id: String,
    pub covered: BTreeSet<u32>,
    pub coverable: BTreeSet<u32>,
    pub percent: f64,
    /// Percent after each update.
    pub history: Vec<f64>,
}

/// What one [`CoverageLedger::update`] did.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LedgerUpdate {
    /// Lines newly covered.
    pub gained: BTreeSet<u32>,
    /// Predicted lines outside the coverable set, ignored.
    pub dropped: BTreeSet<u32>,
}

impl LedgerUpdate {
    pub fn increased(&self) -> bool {
        !self.gained.is_empty()
    }
}

impl CoverageLedger {
    pub fn new(snippet_id: impl Into<String>, coverable: BTreeSet<u32>) -> Self {
        Self {
            snippet_id: snippet_id.into(),
            covered: BTreeSet::new(),
            coverable,
            percent: 0.0,
            history: Vec::new(),
        }
    }

    /// Merges a predicted line set and appends the new percent to the
    /// history.
    pub fn update(&mut self, predicted: &BTreeSet<u32>) -> LedgerUpdate {
        let mut outcome = LedgerUpdate::default();
        for &line in predicted {
            if !self.coverable.contains(&line) {
                outcome.dropped.insert(line);
            } else if self.covered.insert(line) {
                outcome.gained.insert(line);
            }
        }
        self.percent = percent_of(self.covered.len(), self.coverable.len());
        self.history.push(self.percent);
        outcome
    }

    /// Every coverable line covered. False for an empty coverable set.
    pub fn is_full(&self) -> bool {
        !self.coverable.is_empty() && self.covered.len() == self.coverable.len()
    }
}

/// `100 * part / whole`, 0 when `whole` is 0.
pub fn percent_of(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}
