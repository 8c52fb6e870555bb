//! Synthetic inputs shared by the benchmarks.

use std::collections::BTreeSet;
use std::sync::Arc;

use predexec_core::agents::ScriptedBackend;
use predexec_core::predictor::render_pe_response;
use predexec_core::{AgentRole, Agents, CodeSnippet, Completeness, Language};

/// Straight-line Python program of `statements` lines reading one integer.
pub fn straight_line_program(statements: u32) -> CodeSnippet {
    let mut source = String::from("n = int(input())\n");
    for i in 1..statements {
        source.push_str(&format!("v{i} = n * {i} // (n + {i})\n"));
    }
    CodeSnippet::new("bench", Language::Python, source, Some(Completeness::Complete))
        .expect("nonempty program")
}

/// Agents whose generator proposes `0, 1, 2, ...` and whose executor
/// reports `lines_per_test` more lines of `snippet` covered per answer.
pub fn scripted_agents(snippet: &CodeSnippet, iterations: u32, lines_per_test: usize) -> Agents {
    let coverable: Vec<u32> = snippet.coverable_lines.iter().copied().collect();
    let generator = (0..iterations).map(|i| format!("Test Case Input:\n{i}"));
    let executor = (0..iterations as usize).map(|i| {
        let upto = ((i + 1) * lines_per_test).min(coverable.len());
        let covered: BTreeSet<u32> = coverable[..upto].iter().copied().collect();
        let errors: BTreeSet<String> = if i == 0 {
            BTreeSet::from(["ZeroDivisionError".to_string()])
        } else {
            BTreeSet::new()
        };
        render_pe_response(&covered, &errors, "walked through each statement")
    });
    let backend = ScriptedBackend::new()
        .with_queue(AgentRole::TestCaseGenerator, generator)
        .with_queue(AgentRole::PredictiveExecutor, executor);
    Agents::with_backend(Arc::new(backend))
}

/// A chatty executor answer: reasoning prose first, decorated headers.
pub fn verbose_response(lines: u32) -> String {
    let mut text = String::new();
    for i in 1..=lines {
        text.push_str(&format!("Step {i}: the statement on line {i} runs with n = 0.\n"));
    }
    text.push_str(&format!("\n**Covered Lines:** 1-{lines}\n"));
    text.push_str("**Runtime Errors:**\n- ZeroDivisionError: integer division or modulo by zero\n");
    text.push_str("**Reasoning:** n + 0 is zero on the first statement.\n");
    text
}
