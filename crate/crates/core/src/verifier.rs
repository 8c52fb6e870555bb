//! Ground truth by execution.
//!
//! A complete program is run once per generated input in its own temporary
//! directory with the input on standard input. Python programs run under a
//! line-tracer shim that reports executed lines and the uncaught exception
//! as a single line:
//!
//! ```text
//! lines=1,2,5|exception=ZeroDivisionError|kind=exception
//! ```
//!
//! Java programs are compiled and run directly; the uncaught exception is
//! read from the JVM's stack trace and no line coverage is collected.

use std::collections::BTreeSet;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::corpus::{CodeSnippet, Completeness, Language};
use crate::predictor::{normalize_exception_name, ExecutionPrediction};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("{tool} not available: {message}")]
    EnvironmentMissing { tool: String, message: String },
    #[error("snippet `{0}` is incomplete; verify its companion instead")]
    NotComplete(String),
    #[error("tracer shim failed: {0}")]
    Shim(String),
    #[error("malformed shim report `{0}`")]
    ShimReport(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitKind {
    CleanExit,
    UncaughtException,
    Timeout,
    BuildFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActualOutcome {
    pub test_id: u32,
    pub exit_kind: ExitKind,
    pub exception_name: Option<String>,
    pub executed_lines: BTreeSet<u32>,
    pub stderr_tail: String,
    /// Seconds.
    pub wall_time: f64,
}

impl ActualOutcome {
    /// Equality ignoring `wall_time`.
    pub fn same_behavior(&self, other: &ActualOutcome) -> bool {
        self.test_id == other.test_id
            && self.exit_kind == other.exit_kind
            && self.exception_name == other.exception_name
            && self.executed_lines == other.executed_lines
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMatch {
    BothNone,
    Match,
    PredictedOnly,
    ActualOnly,
    Mismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDiff {
    /// Jaccard index of predicted and executed lines; 1.0 when both empty.
    pub coverage_overlap: f64,
    pub error_match: ErrorMatch,
}

pub fn jaccard(a: &BTreeSet<u32>, b: &BTreeSet<u32>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

pub fn diff_prediction(prediction: &ExecutionPrediction, actual: &ActualOutcome) -> PredictionDiff {
    debug_assert_eq!(prediction.test_id, actual.test_id, "diffing different tests");
    let predicted = &prediction.predicted_errors;
    let raised = match (actual.exit_kind, &actual.exception_name) {
        (ExitKind::UncaughtException, Some(name)) => Some(name),
        _ => None,
    };
    let error_match = match raised {
        Some(name) if predicted.contains(name) => ErrorMatch::Match,
        Some(_) if predicted.is_empty() => ErrorMatch::ActualOnly,
        Some(_) => ErrorMatch::Mismatch,
        None if predicted.is_empty() => ErrorMatch::BothNone,
        None => ErrorMatch::PredictedOnly,
    };
    PredictionDiff {
        coverage_overlap: jaccard(&prediction.predicted_covered, &actual.executed_lines),
        error_match,
    }
}

fn default_python() -> String {
    "python3".into()
}
fn default_javac() -> String {
    "javac".into()
}
fn default_java() -> String {
    "java".into()
}
fn default_timeout() -> f64 {
    10.0
}
fn default_output_cap() -> usize {
    64 * 1024
}
fn default_stderr_tail() -> usize {
    4 * 1024
}
fn default_parallel() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierConfig {
    #[serde(default = "default_python")]
    pub python: String,
    #[serde(default = "default_javac")]
    pub javac: String,
    #[serde(default = "default_java")]
    pub java: String,
    /// Line-tracer shim for Python runs.
    #[serde(default)]
    pub shim_path: Option<PathBuf>,
    /// Per-execution budget in seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    /// Standard output beyond this many bytes is discarded.
    #[serde(default = "default_output_cap")]
    pub max_output_bytes: usize,
    #[serde(default = "default_stderr_tail")]
    pub stderr_tail_bytes: usize,
    /// Concurrent executions in [`Verifier::execute_many`].
    #[serde(default = "default_parallel")]
    pub max_parallel: usize,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        Self {
            python: default_python(),
            javac: default_javac(),
            java: default_java(),
            shim_path: None,
            timeout: default_timeout(),
            max_output_bytes: default_output_cap(),
            stderr_tail_bytes: default_stderr_tail(),
            max_parallel: default_parallel(),
        }
    }
}

/// Parsed shim report line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShimReport {
    pub executed_lines: BTreeSet<u32>,
    pub exception_name: String,
    pub kind: ShimKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShimKind {
    Clean,
    Exception,
    TimeoutKilled,
}

/// Parses `lines=1,2|exception=Name|kind=exception`.
pub fn parse_shim_report(text: &str) -> Result<ShimReport, VerifyError> {
    let line = text.strip_suffix('\n').unwrap_or(text);
    let bad = || VerifyError::ShimReport(line.to_string());
    let mut fields = line.split('|');
    let lines = fields.next().and_then(|f| f.strip_prefix("lines=")).ok_or_else(bad)?;
    let exception = fields
        .next()
        .and_then(|f| f.strip_prefix("exception="))
        .ok_or_else(bad)?;
    let kind = fields.next().and_then(|f| f.strip_prefix("kind=")).ok_or_else(bad)?;
    if fields.next().is_some() || line.contains('\n') {
        return Err(bad());
    }
    let executed_lines = if lines.is_empty() {
        BTreeSet::new()
    } else {
        lines
            .split(',')
            .map(|n| n.parse::<u32>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    let kind = match kind {
        "clean" => ShimKind::Clean,
        "exception" => ShimKind::Exception,
        "timeout-killed" => ShimKind::TimeoutKilled,
        _ => return Err(bad()),
    };
    if (kind == ShimKind::Exception) == exception.is_empty() {
        return Err(bad());
    }
    Ok(ShimReport {
        executed_lines,
        exception_name: exception.to_string(),
        kind,
    })
}

/// Name of the uncaught exception in JVM stderr output, if any.
pub fn parse_java_stack_trace(stderr: &str) -> Option<String> {
    for line in stderr.lines() {
        if line.contains("Exception in thread \"") {
            let name = normalize_exception_name(line);
            if !name.is_empty() {
                return Some(name);
            }
        }
    }
    stderr.lines().find_map(|line| {
        let head = line.trim_start().split([':', ' ']).next().unwrap_or("");
        let looks_qualified = head.contains('.')
            && (head.ends_with("Exception") || head.ends_with("Error"))
            && !line.starts_with(char::is_whitespace);
        looks_qualified.then(|| normalize_exception_name(head))
    })
}

const PY_BUILD_ERRORS: &[&str] = &["SyntaxError", "IndentationError", "TabError"];

struct RunResult {
    status: Option<ExitStatus>,
    stderr_tail: String,
    wall_time: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Verifier {
    config: VerifierConfig,
}

impl Verifier {
    pub fn new(config: VerifierConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &VerifierConfig {
        &self.config
    }

    /// Runs `snippet` (which must be complete) with `input` on stdin.
    pub fn execute_with_input(
        &self,
        snippet: &CodeSnippet,
        test_id: u32,
        input: &str,
    ) -> Result<ActualOutcome, VerifyError> {
        if snippet.completeness != Completeness::Complete {
            return Err(VerifyError::NotComplete(snippet.id.clone()));
        }
        match snippet.language {
            Language::Python => self.run_python(snippet, test_id, input),
            Language::Java => self.run_java(snippet, test_id, input),
        }
    }

    /// Runs several inputs against one program, at most `max_parallel` at a
    /// time. Results keep the order of `inputs`.
    pub fn execute_many(
        &self,
        snippet: &CodeSnippet,
        inputs: &[(u32, String)],
    ) -> Vec<Result<ActualOutcome, VerifyError>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.max_parallel.max(1))
            .build();
        match pool {
            Ok(pool) => pool.install(|| {
                inputs
                    .par_iter()
                    .map(|(id, input)| self.execute_with_input(snippet, *id, input))
                    .collect()
            }),
            Err(_) => inputs
                .iter()
                .map(|(id, input)| self.execute_with_input(snippet, *id, input))
                .collect(),
        }
    }

    fn run_python(
        &self,
        snippet: &CodeSnippet,
        test_id: u32,
        input: &str,
    ) -> Result<ActualOutcome, VerifyError> {
        let shim = self.config.shim_path.as_ref().ok_or_else(|| VerifyError::EnvironmentMissing {
            tool: "tracer shim".into(),
            message: "no shim path configured".into(),
        })?;
        let shim = std::fs::canonicalize(shim).map_err(|e| VerifyError::EnvironmentMissing {
            tool: "tracer shim".into(),
            message: format!("{}: {e}", shim.display()),
        })?;
        let dir = tempfile::tempdir()?;
        let target = dir.path().join("target.py");
        let input_file = dir.path().join("input.txt");
        let report_file = dir.path().join("report.txt");
        std::fs::write(&target, &snippet.source)?;
        std::fs::write(&input_file, input)?;

        let mut cmd = Command::new(&self.config.python);
        cmd.arg("-I")
            .arg(&shim)
            .arg(&target)
            .arg(&input_file)
            .arg(&report_file);
        let run = self.run(cmd, dir.path(), None, &self.config.python)?;

        let Some(status) = run.status else {
            return Ok(ActualOutcome {
                test_id,
                exit_kind: ExitKind::Timeout,
                exception_name: None,
                executed_lines: BTreeSet::new(),
                stderr_tail: run.stderr_tail,
                wall_time: run.wall_time,
            });
        };
        if status.code() == Some(2) || !report_file.exists() {
            return Err(VerifyError::Shim(format!(
                "exit {:?}: {}",
                status.code(),
                run.stderr_tail.trim()
            )));
        }
        let report = parse_shim_report(&std::fs::read_to_string(&report_file)?)?;
        let (exit_kind, exception_name) = match report.kind {
            ShimKind::Clean => (ExitKind::CleanExit, None),
            ShimKind::TimeoutKilled => (ExitKind::Timeout, None),
            ShimKind::Exception if PY_BUILD_ERRORS.contains(&report.exception_name.as_str())
                && report.executed_lines.is_empty() =>
            {
                (ExitKind::BuildFailure, None)
            }
            ShimKind::Exception => (
                ExitKind::UncaughtException,
                Some(normalize_exception_name(&report.exception_name)),
            ),
        };
        Ok(ActualOutcome {
            test_id,
            exit_kind,
            exception_name,
            executed_lines: report.executed_lines,
            stderr_tail: run.stderr_tail,
            wall_time: run.wall_time,
        })
    }

    fn run_java(
        &self,
        snippet: &CodeSnippet,
        test_id: u32,
        input: &str,
    ) -> Result<ActualOutcome, VerifyError> {
        let class = java_main_class(&snippet.source).unwrap_or_else(|| "Main".to_string());
        let dir = tempfile::tempdir()?;
        std::fs::write(dir.path().join(format!("{class}.java")), &snippet.source)?;

        let mut javac = Command::new(&self.config.javac);
        javac.arg(format!("{class}.java"));
        let build = self.run(javac, dir.path(), None, &self.config.javac)?;
        let build_ok = build.status.map(|s| s.success()).unwrap_or(false);
        if !build_ok {
            return Ok(ActualOutcome {
                test_id,
                exit_kind: ExitKind::BuildFailure,
                exception_name: None,
                executed_lines: BTreeSet::new(),
                stderr_tail: build.stderr_tail,
                wall_time: build.wall_time,
            });
        }

        let mut java = Command::new(&self.config.java);
        java.args(["-cp", "."]).arg(&class);
        let run = self.run(java, dir.path(), Some(input), &self.config.java)?;
        let (exit_kind, exception_name) = match run.status {
            None => (ExitKind::Timeout, None),
            Some(status) if status.success() => (ExitKind::CleanExit, None),
            Some(_) => match parse_java_stack_trace(&run.stderr_tail) {
                Some(name) => (ExitKind::UncaughtException, Some(name)),
                None => (ExitKind::CleanExit, None),
            },
        };
        Ok(ActualOutcome {
            test_id,
            exit_kind,
            exception_name,
            executed_lines: BTreeSet::new(),
            stderr_tail: run.stderr_tail,
            wall_time: run.wall_time,
        })
    }

    /// Spawns `cmd` in `dir` with a scrubbed environment and waits up to the
    /// configured timeout. `status` is `None` when the process was killed.
    fn run(
        &self,
        mut cmd: Command,
        dir: &Path,
        stdin: Option<&str>,
        tool: &str,
    ) -> Result<RunResult, VerifyError> {
        cmd.current_dir(dir)
            .env_clear()
            .env("PATH", std::env::var_os("PATH").unwrap_or_default())
            .env("HOME", dir)
            .env("TMPDIR", dir)
            .env("LANG", "C.UTF-8")
            .env("PYTHONIOENCODING", "utf-8")
            .stdin(if stdin.is_some() { Stdio::piped() } else { Stdio::null() })
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        let started = Instant::now();
        let mut child = cmd.spawn().map_err(|e| match e.kind() {
            io::ErrorKind::NotFound | io::ErrorKind::PermissionDenied => {
                VerifyError::EnvironmentMissing {
                    tool: tool.to_string(),
                    message: e.to_string(),
                }
            }
            _ => VerifyError::Io(e),
        })?;

        if let (Some(input), Some(mut pipe)) = (stdin, child.stdin.take()) {
            let input = input.to_string();
            thread::spawn(move || {
                use std::io::Write;
                // the program may exit without reading everything
                let _ = pipe.write_all(input.as_bytes());
            });
        }
        let stdout = child.stdout.take().map(|s| drain(s, self.config.max_output_bytes, false));
        let stderr = child
            .stderr
            .take()
            .map(|s| drain(s, self.config.stderr_tail_bytes, true));

        let status = wait_or_kill(&mut child, Duration::from_secs_f64(self.config.timeout))?;
        let wall_time = started.elapsed().as_secs_f64();
        if let Some(h) = stdout {
            let _ = h.join();
        }
        let stderr_tail = stderr
            .and_then(|h| h.join().ok())
            .map(|bytes| String::from_utf8_lossy(&bytes).into_owned())
            .unwrap_or_default();
        Ok(RunResult {
            status,
            stderr_tail,
            wall_time,
        })
    }
}

fn wait_or_kill(child: &mut Child, timeout: Duration) -> io::Result<Option<ExitStatus>> {
    match child.wait_timeout(timeout)? {
        Some(status) => Ok(Some(status)),
        None => {
            let _ = child.kill();
            child.wait()?;
            Ok(None)
        }
    }
}

/// Reads a pipe to the end on a helper thread, keeping at most `cap` bytes:
/// the head, or the tail when `keep_tail` is set.
fn drain<R: Read + Send + 'static>(
    mut reader: R,
    cap: usize,
    keep_tail: bool,
) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 8192];
        loop {
            match reader.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    kept.extend_from_slice(&buf[..n]);
                    if kept.len() > cap {
                        if keep_tail {
                            let excess = kept.len() - cap;
                            kept.drain(..excess);
                        } else {
                            kept.truncate(cap);
                        }
                    }
                }
            }
        }
        kept
    })
}

/// Public top-level class, else the first class declared.
fn java_main_class(source: &str) -> Option<String> {
    let words: Vec<&str> = source
        .split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '$'))
        .filter(|w| !w.is_empty())
        .collect();
    let after_class = |public_only: bool| {
        words.windows(3).find_map(|w| {
            let ok = if public_only {
                w[0] == "public" && w[1] == "class"
            } else {
                w[1] == "class"
            };
            ok.then(|| w[2].to_string())
        })
    };
    after_class(true).or_else(|| {
        words
            .iter()
            .position(|w| *w == "class")
            .and_then(|i| words.get(i + 1))
            .map(|w| w.to_string())
    })
}
