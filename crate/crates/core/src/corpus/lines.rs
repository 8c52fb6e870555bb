//! Coverable-line estimate used as the coverage denominator in prompts.
//!
//! Excluded: blank lines, comment-only lines, continuation lines of
//! multi-line comments/strings, (Python) continuation lines inside open
//! brackets and bare `else:`/`finally:` headers, and (Java) lines holding
//! nothing but braces.

use std::collections::BTreeSet;

use super::Language;

pub fn coverable_lines(language: Language, source: &str) -> BTreeSet<u32> {
    match language {
        Language::Python => python(source),
        Language::Java => java(source),
    }
}

fn python(source: &str) -> BTreeSet<u32> {
    let mut out = BTreeSet::new();
    let mut state = PyScan::default();
    for (i, line) in source.lines().enumerate() {
        let continuation = state.open.is_some() || state.depth > 0;
        state = scan_python_line(line, state);
        if continuation {
            continue;
        }
        let code = line.split('#').next().unwrap_or("").trim();
        // the tracer never reports these clause headers
        if code.is_empty() || code == "else:" || code == "finally:" {
            continue;
        }
        out.insert(i as u32 + 1);
    }
    out
}

#[derive(Debug, Clone, Copy, Default)]
struct PyScan {
    /// Open triple-quote delimiter of a string spanning lines.
    open: Option<&'static str>,
    /// Unclosed bracket depth.
    depth: u32,
}

/// Advances the string and bracket state across one line.
fn scan_python_line(line: &str, state: PyScan) -> PyScan {
    let PyScan { mut open, mut depth } = state;
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if let Some(delim) = open {
            if line[i..].starts_with(delim) {
                open = None;
                i += 3;
            } else if bytes[i] == b'\\' {
                i += 2;
            } else {
                i += 1;
            }
            continue;
        }
        match bytes[i] {
            b'#' => break,
            b'"' | b'\'' => {
                let triple = if bytes[i] == b'"' { "\"\"\"" } else { "'''" };
                if line[i..].starts_with(triple) {
                    open = Some(triple);
                    i += 3;
                } else {
                    let quote = bytes[i];
                    i += 1;
                    while i < bytes.len() && bytes[i] != quote {
                        if bytes[i] == b'\\' {
                            i += 1;
                        }
                        i += 1;
                    }
                    i += 1;
                }
            }
            b'(' | b'[' | b'{' => {
                depth += 1;
                i += 1;
            }
            b')' | b']' | b'}' => {
                depth = depth.saturating_sub(1);
                i += 1;
            }
            _ => i += 1,
        }
    }
    PyScan { open, depth }
}

fn java(source: &str) -> BTreeSet<u32> {
    let mut out = BTreeSet::new();
    let mut in_block = false;
    for (i, line) in source.lines().enumerate() {
        let (code, still_in_block) = strip_java_comments(line, in_block);
        in_block = still_in_block;
        let code = code.trim();
        if code.is_empty() || is_brace_only(code) {
            continue;
        }
        out.insert(i as u32 + 1);
    }
    out
}

fn is_brace_only(code: &str) -> bool {
    code.contains(['{', '}'])
        && code
            .chars()
            .all(|c| matches!(c, '{' | '}' | ';' | ')' | ',') || c.is_whitespace())
}

/// Returns the line with comments removed and whether a block comment is
/// still open at its end. String literals are kept verbatim.
fn strip_java_comments(line: &str, mut in_block: bool) -> (String, bool) {
    let mut out = String::with_capacity(line.len());
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        if in_block {
            if c == '*' && chars.peek() == Some(&'/') {
                chars.next();
                in_block = false;
            }
            continue;
        }
        match c {
            '/' if chars.peek() == Some(&'/') => break,
            '/' if chars.peek() == Some(&'*') => {
                chars.next();
                in_block = true;
            }
            '"' | '\'' => {
                out.push(c);
                while let Some(n) = chars.next() {
                    out.push(n);
                    if n == '\\' {
                        if let Some(esc) = chars.next() {
                            out.push(esc);
                        }
                    } else if n == c {
                        break;
                    }
                }
            }
            _ => out.push(c),
        }
    }
    (out, in_block)
}
