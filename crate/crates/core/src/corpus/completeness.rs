//! Standalone-unit check: does the snippet parse on its own and resolve
//! every name it uses?
//!
//! This is a lexical approximation, not a compiler. It errs toward
//! `Complete` when a name could plausibly come from a wildcard import.

use std::collections::HashSet;

use super::{Completeness, Language};

pub fn classify_source(language: Language, source: &str) -> Completeness {
    let ok = match language {
        Language::Java => java_is_complete(source),
        Language::Python => python_is_complete(source),
    };
    if ok {
        Completeness::Complete
    } else {
        Completeness::Incomplete
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Punct(char),
    /// Multi-char operators that matter for binding analysis.
    Op(&'static str),
    Literal,
    Newline,
}

// ---------------------------------------------------------------- Java

const JAVA_LANG: &[&str] = &[
    "String", "System", "Integer", "Long", "Double", "Float", "Boolean", "Character", "Byte",
    "Short", "Math", "StrictMath", "Object", "StringBuilder", "StringBuffer", "Exception",
    "RuntimeException", "Error", "Throwable", "Thread", "Runnable", "Iterable", "Comparable",
    "CharSequence", "Number", "Void", "Override", "Deprecated", "SuppressWarnings",
    "FunctionalInterface", "SafeVarargs", "Class", "Enum", "Record", "AutoCloseable", "Cloneable",
    "Process", "ProcessBuilder", "Runtime", "ArithmeticException", "NumberFormatException",
    "NullPointerException", "ArrayIndexOutOfBoundsException", "IndexOutOfBoundsException",
    "StringIndexOutOfBoundsException", "IllegalArgumentException", "IllegalStateException",
    "ClassCastException", "NegativeArraySizeException", "ArrayStoreException",
    "UnsupportedOperationException", "InterruptedException", "CloneNotSupportedException",
    "SecurityException", "ClassNotFoundException", "ReflectiveOperationException",
    "StackOverflowError", "OutOfMemoryError", "AssertionError", "NoSuchFieldException",
    "NoSuchMethodException", "Main",
];

/// Frequently used JDK types outside `java.lang`, with their package.
const JDK_TYPES: &[(&str, &str)] = &[
    ("Scanner", "java.util"),
    ("ArrayList", "java.util"),
    ("List", "java.util"),
    ("LinkedList", "java.util"),
    ("Map", "java.util"),
    ("HashMap", "java.util"),
    ("TreeMap", "java.util"),
    ("LinkedHashMap", "java.util"),
    ("Set", "java.util"),
    ("HashSet", "java.util"),
    ("TreeSet", "java.util"),
    ("LinkedHashSet", "java.util"),
    ("Arrays", "java.util"),
    ("Collections", "java.util"),
    ("Deque", "java.util"),
    ("ArrayDeque", "java.util"),
    ("Queue", "java.util"),
    ("PriorityQueue", "java.util"),
    ("Stack", "java.util"),
    ("Iterator", "java.util"),
    ("Random", "java.util"),
    ("Optional", "java.util"),
    ("StringTokenizer", "java.util"),
    ("Objects", "java.util"),
    ("Comparator", "java.util"),
    ("InputMismatchException", "java.util"),
    ("NoSuchElementException", "java.util"),
    ("ConcurrentModificationException", "java.util"),
    ("BufferedReader", "java.io"),
    ("InputStreamReader", "java.io"),
    ("PrintWriter", "java.io"),
    ("IOException", "java.io"),
    ("File", "java.io"),
    ("FileReader", "java.io"),
    ("FileNotFoundException", "java.io"),
    ("UnsupportedEncodingException", "java.io"),
    ("BigInteger", "java.math"),
    ("BigDecimal", "java.math"),
    ("Stream", "java.util.stream"),
    ("IntStream", "java.util.stream"),
    ("Collectors", "java.util.stream"),
    ("Function", "java.util.function"),
    ("NoSuchAlgorithmException", "java.security"),
    ("MessageDigest", "java.security"),
];

const JAVA_TYPE_KEYWORDS: &[&str] = &["class", "interface", "enum", "record"];

fn java_tokens(source: &str) -> Option<Vec<Tok>> {
    let chars: Vec<char> = source.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c == '/' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            loop {
                if i + 1 >= chars.len() {
                    return None;
                }
                if chars[i] == '*' && chars[i + 1] == '/' {
                    i += 2;
                    break;
                }
                i += 1;
            }
        } else if c == '"' && chars.get(i + 1) == Some(&'"') && chars.get(i + 2) == Some(&'"') {
            i += 3;
            loop {
                if i + 2 >= chars.len() {
                    return None;
                }
                if chars[i] == '\\' {
                    i += 2;
                    continue;
                }
                if chars[i] == '"' && chars[i + 1] == '"' && chars[i + 2] == '"' {
                    i += 3;
                    break;
                }
                i += 1;
            }
            toks.push(Tok::Literal);
        } else if c == '"' || c == '\'' {
            i += 1;
            loop {
                match chars.get(i) {
                    None | Some('\n') => return None,
                    Some('\\') => i += 2,
                    Some(&q) if q == c => {
                        i += 1;
                        break;
                    }
                    _ => i += 1,
                }
            }
            toks.push(Tok::Literal);
        } else if c.is_alphabetic() || c == '_' || c == '$' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '$')
            {
                i += 1;
            }
            toks.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if c.is_ascii_digit() {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '.' || chars[i] == '_')
            {
                i += 1;
            }
            toks.push(Tok::Literal);
        } else if c.is_whitespace() {
            i += 1;
        } else {
            toks.push(Tok::Punct(c));
            i += 1;
        }
    }
    Some(toks)
}

fn brackets_balanced(toks: &[Tok]) -> bool {
    let mut stack = Vec::new();
    for t in toks {
        if let Tok::Punct(c) = t {
            match c {
                '(' | '[' | '{' => stack.push(*c),
                ')' | ']' | '}' => {
                    let want = match c {
                        ')' => '(',
                        ']' => '[',
                        _ => '{',
                    };
                    if stack.pop() != Some(want) {
                        return false;
                    }
                }
                _ => {}
            }
        }
    }
    stack.is_empty()
}

fn java_is_complete(source: &str) -> bool {
    let Some(toks) = java_tokens(source) else {
        return false;
    };
    if !brackets_balanced(&toks) || !java_top_level_ok(&toks) {
        return false;
    }
    java_names_resolve(&toks)
}

/// Every top-level segment must be a package/import statement or a type
/// declaration; at least one type declaration must exist.
fn java_top_level_ok(toks: &[Tok]) -> bool {
    let mut depth = 0usize;
    let mut segment: Vec<&Tok> = Vec::new();
    let mut saw_type = false;
    for t in toks {
        match t {
            Tok::Punct('{') => {
                if depth == 0 {
                    let is_type = segment.iter().any(|t| {
                        matches!(t, Tok::Ident(s) if JAVA_TYPE_KEYWORDS.contains(&s.as_str()))
                    });
                    if !is_type {
                        return false;
                    }
                    saw_type = true;
                    segment.clear();
                }
                depth += 1;
            }
            Tok::Punct('}') => depth -= 1,
            Tok::Punct(';') if depth == 0 => {
                let first = segment.first();
                let ok = segment.is_empty()
                    || matches!(first, Some(Tok::Ident(s)) if s == "package" || s == "import");
                if !ok {
                    return false;
                }
                segment.clear();
            }
            _ if depth == 0 => segment.push(t),
            _ => {}
        }
    }
    saw_type && segment.is_empty()
}

fn java_names_resolve(toks: &[Tok]) -> bool {
    let mut declared: HashSet<&str> = HashSet::new();
    let mut imported: HashSet<String> = HashSet::new();
    let mut wildcard_pkgs: HashSet<String> = HashSet::new();

    let mut i = 0;
    while i < toks.len() {
        match &toks[i] {
            Tok::Ident(kw) if kw == "import" => {
                let mut path = Vec::new();
                let mut wildcard = false;
                i += 1;
                while i < toks.len() && toks[i] != Tok::Punct(';') {
                    match &toks[i] {
                        Tok::Ident(s) if s == "static" && path.is_empty() => {}
                        Tok::Ident(s) => path.push(s.clone()),
                        Tok::Punct('*') => wildcard = true,
                        _ => {}
                    }
                    i += 1;
                }
                if wildcard {
                    wildcard_pkgs.insert(path.join("."));
                } else if let Some(last) = path.last() {
                    imported.insert(last.clone());
                }
            }
            Tok::Ident(kw) if JAVA_TYPE_KEYWORDS.contains(&kw.as_str()) => {
                if let Some(Tok::Ident(name)) = toks.get(i + 1) {
                    declared.insert(name);
                }
            }
            _ => {}
        }
        i += 1;
    }

    for (idx, t) in toks.iter().enumerate() {
        let Tok::Ident(name) = t else { continue };
        let after_dot = idx > 0 && toks[idx - 1] == Tok::Punct('.');
        if after_dot || !name.starts_with(|c: char| c.is_ascii_uppercase()) {
            continue;
        }
        if is_constant_or_type_param(name)
            || JAVA_LANG.contains(&name.as_str())
            || declared.contains(name.as_str())
            || imported.contains(name)
        {
            continue;
        }
        let resolved = match JDK_TYPES.iter().find(|(n, _)| n == name) {
            Some((_, pkg)) => wildcard_pkgs.contains(*pkg),
            None => !wildcard_pkgs.is_empty(),
        };
        if !resolved {
            return false;
        }
    }
    true
}

fn is_constant_or_type_param(name: &str) -> bool {
    name.len() <= 2 && name.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit())
        || name.len() > 1
            && name
                .chars()
                .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

// -------------------------------------------------------------- Python

const PY_KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class",
    "continue", "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if",
    "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try",
    "while", "with", "yield", "match", "case",
];

const PY_BUILTINS: &[&str] = &[
    "abs", "aiter", "all", "anext", "any", "ascii", "bin", "bool", "breakpoint", "bytearray",
    "bytes", "callable", "chr", "classmethod", "compile", "complex", "delattr", "dict", "dir",
    "divmod", "enumerate", "eval", "exec", "filter", "float", "format", "frozenset", "getattr",
    "globals", "hasattr", "hash", "help", "hex", "id", "input", "int", "isinstance",
    "issubclass", "iter", "len", "list", "locals", "map", "max", "memoryview", "min", "next",
    "object", "oct", "open", "ord", "pow", "print", "property", "range", "repr", "reversed",
    "round", "set", "setattr", "slice", "sorted", "staticmethod", "str", "sum", "super", "tuple",
    "type", "vars", "zip", "__import__", "__name__", "__file__", "__doc__", "__builtins__",
    "__spec__", "__loader__", "__package__", "exit", "quit", "copyright", "credits", "license",
    "NotImplemented", "Ellipsis", "self", "cls",
    "BaseException", "Exception", "ArithmeticError", "AssertionError", "AttributeError",
    "BufferError", "EOFError", "FloatingPointError", "GeneratorExit", "ImportError",
    "ModuleNotFoundError", "IndexError", "KeyError", "KeyboardInterrupt", "LookupError",
    "MemoryError", "NameError", "NotImplementedError", "OSError", "IOError", "OverflowError",
    "RecursionError", "ReferenceError", "RuntimeError", "StopIteration", "StopAsyncIteration",
    "SyntaxError", "IndentationError", "TabError", "SystemError", "SystemExit", "TypeError",
    "UnboundLocalError", "UnicodeError", "UnicodeDecodeError", "UnicodeEncodeError",
    "ValueError", "ZeroDivisionError", "FileNotFoundError", "FileExistsError",
    "PermissionError", "TimeoutError", "ConnectionError", "BrokenPipeError",
    "InterruptedError", "IsADirectoryError", "NotADirectoryError", "ProcessLookupError",
    "ChildProcessError", "BlockingIOError", "Warning", "UserWarning", "DeprecationWarning",
    "RuntimeWarning",
];

fn python_tokens(source: &str) -> Option<Vec<Tok>> {
    let chars: Vec<char> = source.chars().collect();
    let mut toks = Vec::new();
    let mut depth = 0i32;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c == '\\' && chars.get(i + 1) == Some(&'\n') {
            i += 2;
        } else if c == '\n' {
            if depth == 0 {
                toks.push(Tok::Newline);
            }
            i += 1;
        } else if c == '"' || c == '\'' {
            let triple = chars.get(i + 1) == Some(&c) && chars.get(i + 2) == Some(&c);
            if triple {
                i += 3;
                loop {
                    if i + 2 >= chars.len() {
                        return None;
                    }
                    if chars[i] == '\\' {
                        i += 2;
                        continue;
                    }
                    if chars[i] == c && chars[i + 1] == c && chars[i + 2] == c {
                        i += 3;
                        break;
                    }
                    i += 1;
                }
            } else {
                i += 1;
                loop {
                    match chars.get(i) {
                        None | Some('\n') => return None,
                        Some('\\') => i += 2,
                        Some(&q) if q == c => {
                            i += 1;
                            break;
                        }
                        _ => i += 1,
                    }
                }
            }
            toks.push(Tok::Literal);
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            // string prefixes: f"..", rb'..'
            if matches!(chars.get(i), Some('"') | Some('\''))
                && i - start <= 2
                && chars[start..i]
                    .iter()
                    .all(|c| matches!(c.to_ascii_lowercase(), 'r' | 'b' | 'f' | 'u'))
            {
                continue;
            }
            toks.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if c.is_ascii_digit() {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '.' || chars[i] == '_')
            {
                i += 1;
            }
            toks.push(Tok::Literal);
        } else if c.is_whitespace() {
            i += 1;
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let op = match two.as_str() {
                "==" => Some("=="),
                "!=" => Some("!="),
                "<=" => Some("<="),
                ">=" => Some(">="),
                ":=" => Some(":="),
                "->" => Some("->"),
                "**" => Some("**"),
                _ => None,
            };
            if let Some(op) = op {
                toks.push(Tok::Op(op));
                i += 2;
                continue;
            }
            match c {
                '(' | '[' | '{' => depth += 1,
                ')' | ']' | '}' => depth -= 1,
                _ => {}
            }
            toks.push(Tok::Punct(c));
            i += 1;
        }
    }
    toks.push(Tok::Newline);
    Some(toks)
}

fn python_is_complete(source: &str) -> bool {
    if !python_layout_ok(source) {
        return false;
    }
    let Some(toks) = python_tokens(source) else {
        return false;
    };
    if !brackets_balanced(&toks) {
        return false;
    }
    python_names_resolve(&toks)
}

/// Indentation sanity: the first statement starts at column 0 and every
/// block header ending in `:` is followed by a more indented line.
fn python_layout_ok(source: &str) -> bool {
    let logical: Vec<&str> = source
        .lines()
        .filter(|l| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .collect();
    let indent = |l: &str| l.len() - l.trim_start().len();
    if let Some(first) = logical.first() {
        if indent(first) != 0 {
            return false;
        }
    }
    for (idx, line) in logical.iter().enumerate() {
        let code = line.split('#').next().unwrap_or("").trim_end();
        let header = code.ends_with(':')
            && code
                .split_whitespace()
                .next()
                .map(|w| {
                    let w = w.trim_end_matches(':');
                    matches!(
                        w,
                        "if" | "elif" | "else" | "for" | "while" | "def" | "class" | "try"
                            | "except" | "finally" | "with" | "async"
                    )
                })
                .unwrap_or(false);
        if header {
            match logical.get(idx + 1) {
                Some(next) if indent(next) > indent(line) => {}
                _ => return false,
            }
        }
    }
    true
}

fn python_names_resolve(toks: &[Tok]) -> bool {
    let mut defined: HashSet<String> = HashSet::new();
    let mut star_import = false;
    // identifiers that are keyword-argument names or bound by syntax
    let mut binding_positions: HashSet<usize> = HashSet::new();

    let ident = |i: usize| match toks.get(i) {
        Some(Tok::Ident(s)) => Some(s.as_str()),
        _ => None,
    };

    // statement boundaries
    let mut stmt_start = 0;
    for (i, t) in toks.iter().enumerate() {
        if *t != Tok::Newline && *t != Tok::Punct(';') {
            continue;
        }
        let stmt = &toks[stmt_start..i];
        let base = stmt_start;
        stmt_start = i + 1;
        if stmt.is_empty() {
            continue;
        }

        // imports
        match ident(base) {
            Some("import") => {
                let mut j = 0;
                let mut expect_name = true;
                while j < stmt.len() {
                    match &stmt[j] {
                        Tok::Ident(s) if s == "import" => {}
                        Tok::Ident(s) if s == "as" => {
                            if let Some(Tok::Ident(alias)) = stmt.get(j + 1) {
                                defined.insert(alias.clone());
                                binding_positions.insert(base + j + 1);
                            }
                            j += 1;
                        }
                        Tok::Ident(s) if expect_name => {
                            defined.insert(s.clone());
                            binding_positions.insert(base + j);
                            expect_name = false;
                        }
                        Tok::Ident(_) => {
                            binding_positions.insert(base + j);
                        }
                        Tok::Punct(',') => expect_name = true,
                        _ => {}
                    }
                    j += 1;
                }
                for k in 0..stmt.len() {
                    binding_positions.insert(base + k);
                }
                continue;
            }
            Some("from") => {
                let import_at = stmt
                    .iter()
                    .position(|t| *t == Tok::Ident("import".into()))
                    .unwrap_or(stmt.len());
                let mut j = import_at + 1;
                while j < stmt.len() {
                    match &stmt[j] {
                        Tok::Punct('*') => star_import = true,
                        Tok::Ident(s) if s == "as" => {}
                        Tok::Ident(s) => {
                            let aliased = matches!(stmt.get(j + 1), Some(Tok::Ident(a)) if a == "as");
                            if !aliased {
                                defined.insert(s.clone());
                            }
                        }
                        _ => {}
                    }
                    j += 1;
                }
                for k in 0..stmt.len() {
                    binding_positions.insert(base + k);
                }
                continue;
            }
            Some("global") | Some("nonlocal") => {
                for (k, t) in stmt.iter().enumerate() {
                    if let Tok::Ident(s) = t {
                        defined.insert(s.clone());
                        binding_positions.insert(base + k);
                    }
                }
                continue;
            }
            _ => {}
        }

        // assignment targets: everything left of a depth-0 `=`
        let mut depth = 0i32;
        let mut last_eq = None;
        for (k, t) in stmt.iter().enumerate() {
            match t {
                Tok::Punct('(') | Tok::Punct('[') | Tok::Punct('{') => depth += 1,
                Tok::Punct(')') | Tok::Punct(']') | Tok::Punct('}') => depth -= 1,
                Tok::Punct('=') if depth == 0 => last_eq = Some(k),
                _ => {}
            }
        }
        if let Some(eq) = last_eq {
            // `x += 1` reads x as well; `x: int = 1` annotates
            for k in 0..eq {
                let after_dot = k > 0 && stmt[k - 1] == Tok::Punct('.');
                if let Tok::Ident(s) = &stmt[k] {
                    if !after_dot && !PY_KEYWORDS.contains(&s.as_str()) {
                        defined.insert(s.clone());
                    }
                }
            }
        }

        for k in 0..stmt.len() {
            let Tok::Ident(word) = &stmt[k] else { continue };
            match word.as_str() {
                "def" | "class" => {
                    if let Some(Tok::Ident(name)) = stmt.get(k + 1) {
                        defined.insert(name.clone());
                        binding_positions.insert(base + k + 1);
                    }
                    if word == "def" {
                        bind_params(stmt, base, k + 2, &mut defined, &mut binding_positions);
                    }
                }
                "for" => {
                    let mut j = k + 1;
                    while j < stmt.len() && stmt[j] != Tok::Ident("in".into()) {
                        if let Tok::Ident(s) = &stmt[j] {
                            defined.insert(s.clone());
                            binding_positions.insert(base + j);
                        }
                        j += 1;
                    }
                }
                "as" => {
                    if let Some(Tok::Ident(name)) = stmt.get(k + 1) {
                        defined.insert(name.clone());
                        binding_positions.insert(base + k + 1);
                    }
                }
                "lambda" => {
                    let mut j = k + 1;
                    while j < stmt.len() && stmt[j] != Tok::Punct(':') {
                        if let Tok::Ident(s) = &stmt[j] {
                            defined.insert(s.clone());
                            binding_positions.insert(base + j);
                        }
                        j += 1;
                    }
                }
                _ => {}
            }
            if stmt.get(k + 1) == Some(&Tok::Op(":=")) {
                defined.insert(word.clone());
            }
        }

        // keyword argument names: `name=` inside brackets
        let mut depth = 0i32;
        for k in 0..stmt.len() {
            match &stmt[k] {
                Tok::Punct('(') | Tok::Punct('[') | Tok::Punct('{') => depth += 1,
                Tok::Punct(')') | Tok::Punct(']') | Tok::Punct('}') => depth -= 1,
                Tok::Ident(_) if depth > 0 && stmt.get(k + 1) == Some(&Tok::Punct('=')) => {
                    binding_positions.insert(base + k);
                }
                _ => {}
            }
        }
    }

    if star_import {
        return true;
    }
    for (i, t) in toks.iter().enumerate() {
        let Tok::Ident(name) = t else { continue };
        if binding_positions.contains(&i) {
            continue;
        }
        if i > 0 && toks[i - 1] == Tok::Punct('.') {
            continue;
        }
        if PY_KEYWORDS.contains(&name.as_str())
            || PY_BUILTINS.contains(&name.as_str())
            || defined.contains(name)
        {
            continue;
        }
        return false;
    }
    true
}

fn bind_params(
    stmt: &[Tok],
    base: usize,
    open: usize,
    defined: &mut HashSet<String>,
    positions: &mut HashSet<usize>,
) {
    if stmt.get(open) != Some(&Tok::Punct('(')) {
        return;
    }
    let mut depth = 0i32;
    let mut expect_param = true;
    for (k, t) in stmt.iter().enumerate().skip(open) {
        match t {
            Tok::Punct('(') | Tok::Punct('[') | Tok::Punct('{') => depth += 1,
            Tok::Punct(')') | Tok::Punct(']') | Tok::Punct('}') => {
                depth -= 1;
                if depth == 0 {
                    return;
                }
            }
            Tok::Punct(',') if depth == 1 => expect_param = true,
            Tok::Punct('*') | Tok::Op("**") | Tok::Punct('/') if depth == 1 => {}
            Tok::Ident(s) if depth == 1 && expect_param => {
                defined.insert(s.clone());
                positions.insert(base + k);
                expect_param = false;
            }
            _ if depth == 1 => expect_param = false,
            _ => {}
        }
    }
}
