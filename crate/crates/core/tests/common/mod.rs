#![allow(dead_code)]

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use predexec_core::agents::ScriptedBackend;
use predexec_core::predictor::render_pe_response;
use predexec_core::{
    AgentConfig, AgentError, AgentRole, Agents, ChatBackend, CodeSnippet, Completeness, ExitKind,
    Language, SessionConfig,
};

pub fn shim_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/line_shim.py")
}

pub fn python(id: &str, source: &str) -> CodeSnippet {
    CodeSnippet::new(id, Language::Python, source, Some(Completeness::Complete)).unwrap()
}

/// Scripted backend that also logs every prompt it answers.
pub struct Capture {
    inner: ScriptedBackend,
    prompts: Mutex<Vec<(AgentRole, String)>>,
}

impl Capture {
    pub fn prompts(&self, role: AgentRole) -> Vec<String> {
        self.prompts
            .lock()
            .unwrap()
            .iter()
            .filter(|(r, _)| *r == role)
            .map(|(_, p)| p.clone())
            .collect()
    }

    pub fn all(&self) -> Vec<(AgentRole, String)> {
        self.prompts.lock().unwrap().clone()
    }
}

impl ChatBackend for Capture {
    fn complete(&self, config: &AgentConfig, prompt: &str) -> Result<String, AgentError> {
        self.prompts.lock().unwrap().push((config.role, prompt.to_string()));
        self.inner.complete(config, prompt)
    }

    fn kind(&self) -> &'static str {
        "scripted"
    }
}

pub fn capture_agents<G, P>(generator: G, executor: P) -> (Agents, Arc<Capture>)
where
    G: IntoIterator,
    G::Item: Into<String>,
    P: IntoIterator,
    P::Item: Into<String>,
{
    let capture = Arc::new(Capture {
        inner: ScriptedBackend::new()
            .with_queue(AgentRole::TestCaseGenerator, generator)
            .with_queue(AgentRole::PredictiveExecutor, executor),
        prompts: Mutex::new(Vec::new()),
    });
    (Agents::with_backend(capture.clone()), capture)
}

pub fn tcg(input: &str) -> String {
    format!("Test Case Input:\n{input}")
}

pub fn pe(lines: impl IntoIterator<Item = u32>, errors: &[&str]) -> String {
    let covered: BTreeSet<u32> = lines.into_iter().collect();
    let errors: BTreeSet<String> = errors.iter().map(|s| s.to_string()).collect();
    render_pe_response(&covered, &errors, "traced the statements in order")
}

/// Ten lines, every one coverable.
pub const TEN_LINES: &str = "n = int(input())
a = n + 1
b = n * 2
c = a - b
d = 100 // n
e = [1, 2, 3]
f = e[n]
g = int(\"x\" * n)
h = d + f
print(h)
";

pub fn ten_line_program() -> CodeSnippet {
    python("ten", TEN_LINES)
}

/// Generator and executor scripts of the ten-iteration control-flow
/// session: 30, 60, a duplicate, three stalls at 60, 80 under the
/// error-only prompt, 100, then two more error-only iterations.
pub fn control_flow_script() -> (Vec<String>, Vec<String>) {
    let generator = ["1", "2", "2 \r\n", "3", "4", "5", "0", "6", "7", "-1"]
        .map(tcg)
        .to_vec();
    let executor = vec![
        pe(1..=3, &[]),
        pe(1..=6, &[]),
        pe(1..=6, &[]),
        pe(1..=6, &[]),
        pe(1..=6, &[]),
        pe(1..=8, &["ZeroDivisionError"]),
        pe(1..=10, &[]),
        pe(1..=10, &["IndexError"]),
        pe(1..=10, &["ValueError"]),
    ];
    (generator, executor)
}

pub fn control_flow_config() -> SessionConfig {
    SessionConfig::iterations(10)
}

/// One hundred single-statement lines.
pub fn hundred_line_program() -> CodeSnippet {
    let src: String = (1..=100).map(|i| format!("v{i} = {i}\n")).collect();
    python("hundred", &src)
}

pub const PLATEAU_HISTORY: [u32; 8] = [12, 54, 55, 81, 81, 83, 83, 89];

/// Executor answers whose cumulative coverage follows [`PLATEAU_HISTORY`].
pub fn plateau_script() -> (Vec<String>, Vec<String>) {
    let generator = (1..=8).map(|i| tcg(&i.to_string())).collect();
    let executor = PLATEAU_HISTORY.iter().map(|&p| pe(1..=p, &[])).collect();
    (generator, executor)
}

/// A complete Python program with a known run on a given input.
pub struct MicroCase {
    pub name: &'static str,
    pub source: &'static str,
    pub input: &'static str,
    pub exit_kind: ExitKind,
    pub exception: Option<&'static str>,
}

pub fn micro_cases() -> Vec<MicroCase> {
    use ExitKind::*;
    let case = |name, source, input, exit_kind, exception| MicroCase {
        name,
        source,
        input,
        exit_kind,
        exception,
    };
    vec![
        case("div_zero", "a=int(input())\nprint(10//a)\n", "0", UncaughtException, Some("ZeroDivisionError")),
        case("div_ok", "a=int(input())\nprint(10//a)\n", "5", CleanExit, None),
        case("index_out", "xs=[1,2,3]\ni=int(input())\nprint(xs[i])\n", "5", UncaughtException, Some("IndexError")),
        case("index_ok", "xs=[1,2,3]\ni=int(input())\nprint(xs[i])\n", "1", CleanExit, None),
        case("parse_fail", "n=int(input())\nprint(n)\n", "abc", UncaughtException, Some("ValueError")),
        case(
            "else_not_taken",
            "x=int(input())\nif x>0:\n    print(\"pos\")\nelse:\n    print(\"neg\")\n",
            "3",
            CleanExit,
            None,
        ),
        case("key_missing", "d={'a':1}\nk=input()\nprint(d[k])\n", "b", UncaughtException, Some("KeyError")),
        case("str_plus_int", "a=input()\nprint(a+1)\n", "x", UncaughtException, Some("TypeError")),
        case(
            "loop_function",
            "def f(n):\n    t=0\n    for i in range(n):\n        t+=i\n    return t\nprint(f(int(input())))\n",
            "3",
            CleanExit,
            None,
        ),
        case("eof", "a=input()\nb=input()\nprint(a,b)\n", "1", UncaughtException, Some("EOFError")),
        case("sys_exit", "import sys\nsys.exit(3)\n", "", CleanExit, None),
        case(
            "handled_and_printed",
            "try:\n    1/0\nexcept Exception as e:\n    print(e)\n",
            "",
            CleanExit,
            None,
        ),
        case("two_line_clean", "a=int(input())\nb=int(input())\nprint(a*b)\n", "4\n5\n", CleanExit, None),
        case("syntax_error", "print(\n", "", BuildFailure, None),
        case("endless", "while True:\n    pass\n", "", Timeout, None),
    ]
}

/// Lines of `target.py` reported by the standard library's `trace` module
/// for a run on `input`: an independent brute-force line tracer.
pub fn trace_oracle(source: &str, input: &str) -> BTreeSet<u32> {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("target.py"), source).unwrap();
    let mut child = Command::new("python3")
        .args(["-I", "-m", "trace", "--trace", "target.py"])
        .current_dir(dir.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .expect("python3 available");
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter_map(|l| l.strip_prefix("target.py("))
        .filter_map(|l| l.split_once("):").and_then(|(n, _)| n.parse().ok()))
        .collect()
}

/// Per-name walk over the union of both sets.
pub fn brute_force_counts(pairs: &[(BTreeSet<String>, BTreeSet<String>)]) -> (u64, u64, u64) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (detected, truth) in pairs {
        let universe: BTreeSet<&String> = detected.iter().chain(truth.iter()).collect();
        for name in universe {
            match (detected.contains(name), truth.contains(name)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => unreachable!(),
            }
        }
    }
    (tp, fp, fn_)
}

/// Minimal chat-completions server on localhost. Generator requests get a
/// numbered test input; executor requests a fixed prediction. The first
/// `fail_first` requests are answered with HTTP 500.
pub struct StubProvider {
    pub base_url: String,
    pub requests: Arc<AtomicUsize>,
}

pub const STUB_GENERATOR_MODEL: &str = "stub-generator";

impl StubProvider {
    pub fn start(fail_first: usize) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}/v1", listener.local_addr().unwrap());
        let requests = Arc::new(AtomicUsize::new(0));
        let counter = requests.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let n = counter.fetch_add(1, Ordering::SeqCst);
                let _ = serve(stream, n, fail_first);
            }
        });
        Self { base_url, requests }
    }

    pub fn agent_config(&self, role: AgentRole) -> AgentConfig {
        let model = match role {
            AgentRole::TestCaseGenerator => STUB_GENERATOR_MODEL,
            AgentRole::PredictiveExecutor => "stub-executor",
        };
        AgentConfig {
            base_url: self.base_url.clone(),
            api_key_env: "PREDEXEC_TEST_UNSET_KEY".into(),
            backoff_base_ms: 1,
            request_timeout: 5.0,
            ..AgentConfig::new(role, model)
        }
    }
}

fn serve(stream: TcpStream, n: usize, fail_first: usize) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut length = 0;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body)?;
    let request: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
    let mut stream = stream;
    if n < fail_first {
        let msg = "overloaded";
        return write!(
            stream,
            "HTTP/1.1 500 Internal Server Error\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{msg}",
            msg.len()
        );
    }
    let model = request["model"].as_str().unwrap_or_default();
    let prompt = request["messages"][0]["content"].as_str().unwrap_or_default();
    let content = if model == STUB_GENERATOR_MODEL {
        format!("Test Case Input:\n{}", prompt.len() % 5)
    } else {
        let errors: &[&str] = if prompt.contains("<<<\n0\n>>>") { &["ZeroDivisionError"] } else { &[] };
        pe(1..=2, errors)
    };
    let reply = serde_json::json!({
        "id": "stub",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
    })
    .to_string();
    write!(
        stream,
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    )
}
