use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_predexec"));
    cmd.env_remove("PREDEXEC_SHIM").env_remove("RUST_LOG");
    cmd
}

fn shim() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/line_shim.py")
}

fn tcg(input: &str) -> String {
    format!("Test Case Input:\n{input}")
}

fn pe(last: u32, error: Option<&str>) -> String {
    let lines: Vec<String> = (1..=last).map(|l| l.to_string()).collect();
    format!(
        "Covered Lines: {}\nRuntime Errors: {}\nExplanation: stepped through",
        lines.join(", "),
        error.unwrap_or("None")
    )
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(generator: &[String], executor: &[String]) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let records = [
            json!({"id": "div", "language": "python", "source": "a=int(input())\nprint(10//a)\n",
                   "completeness": "complete", "ground_truth_errors": ["ZeroDivisionError"]}),
            json!({"id": "echo", "language": "python", "source": "a=input()\nprint(a)\n",
                   "completeness": "complete", "ground_truth_errors": []}),
        ];
        let corpus: String = records.iter().map(|r| format!("{r}\n")).collect();
        std::fs::write(dir.path().join("corpus.jsonl"), corpus).unwrap();
        let script = json!({"test_case_generator": generator, "predictive_executor": executor});
        std::fs::write(dir.path().join("script.json"), script.to_string()).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn command(&self, sub: &str) -> Command {
        let mut cmd = bin();
        cmd.arg(sub).arg("--corpus").arg(self.path("corpus.jsonl"));
        cmd
    }

    fn scripted(&self, sub: &str) -> Command {
        let mut cmd = self.command(sub);
        cmd.args(["--backend", "scripted", "--script"]).arg(self.dir.path());
        cmd
    }
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn default_script() -> (Vec<String>, Vec<String>) {
    (
        vec![tcg("5"), tcg("0"), tcg("hi"), tcg("there")],
        vec![pe(2, None), pe(2, Some("ZeroDivisionError")), pe(2, None), pe(2, None)],
    )
}

#[test]
fn run_prints_a_deterministic_report() {
    let (g, p) = default_script();
    let ws = Workspace::new(&g, &p);
    let once = || {
        run(ws
            .scripted("run")
            .args(["--snippet", "div", "--max-iterations", "2", "--csv"])
            .arg(ws.path("curve.csv")))
    };
    let first = once();
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let second = once();
    assert_eq!(first.stdout, second.stdout);

    let report: Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(report["snippet_id"], "div");
    assert_eq!(report["status"], "completed");
    assert_eq!(report["detected_errors"][0]["name"], "ZeroDivisionError");
    let csv = std::fs::read_to_string(ws.path("curve.csv")).unwrap();
    assert_eq!(csv, "test,predicted_percent\n1,100.00\n2,100.00\n");
}

#[test]
fn run_with_verification_adds_actual_column() {
    let (g, p) = default_script();
    let ws = Workspace::new(&g, &p);
    let out = run(ws
        .scripted("run")
        .args(["--snippet", "div", "--max-iterations", "2", "--verify", "--shim"])
        .arg(shim())
        .arg("--csv")
        .arg(ws.path("curve.csv")));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["verification"]["state"], "verified");
    let csv = std::fs::read_to_string(ws.path("curve.csv")).unwrap();
    assert!(csv.starts_with("test,predicted_percent,actual_percent\n"));
}

#[test]
fn exhausted_agent_exits_with_partial_report() {
    let ws = Workspace::new(&[tcg("5")], &[pe(2, None)]);
    let out = run(ws.scripted("run").args(["--snippet", "div", "--max-iterations", "3"]));
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["status"], "agent_unavailable");
    assert_eq!(report["iterations"].as_array().unwrap().len(), 1);
}

#[test]
fn missing_corpus_is_a_config_error() {
    let out = run(bin().args(["run", "--corpus", "/nonexistent/corpus.jsonl", "--snippet", "x"]));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("/nonexistent/corpus.jsonl"), "{}", stderr(&out));
}

#[test]
fn unknown_snippet_and_flags_are_config_errors() {
    let (g, p) = default_script();
    let ws = Workspace::new(&g, &p);
    let out = run(ws.scripted("run").args(["--snippet", "nope"]));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope"));

    let out = run(ws.scripted("run").args(["--snippet", "div", "--frobnicate"]));
    assert_eq!(out.status.code(), Some(2));

    let out = run(ws.command("run").args(["--snippet", "div", "--backend", "replay"]));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--transcript"));
}

#[test]
fn bad_config_file_names_its_path() {
    let (g, p) = default_script();
    let ws = Workspace::new(&g, &p);
    std::fs::write(ws.path("run.toml"), "[session]\nplateau_windw = 3\n").unwrap();
    let out = run(ws
        .scripted("run")
        .args(["--snippet", "div", "--config"])
        .arg(ws.path("run.toml")));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("run.toml"), "{}", stderr(&out));
}

#[test]
fn batch_then_metrics_and_verify() {
    let (g, p) = default_script();
    let ws = Workspace::new(&g, &p);
    let out_dir = ws.path("out");
    let out = run(ws
        .scripted("batch")
        .args(["--max-iterations", "2", "--concurrency", "1", "--mode", "so", "--out"])
        .arg(&out_dir));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(out_dir.join("batch.json").is_file());
    assert!(out_dir.join("sessions/div.json").is_file());
    assert!(out_dir.join("sessions/echo.json").is_file());

    let out = run(bin().args(["metrics", "--mode", "so", "--json", "--reports"]).arg(&out_dir));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let batch: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(batch["confusion"]["tp"], 1);
    assert_eq!(batch["confusion"]["tn"], 1);
    assert_eq!(batch["corpus_metrics"]["tp"], 1);

    let out = run(ws.command("verify").arg("--reports").arg(&out_dir).arg("--shim").arg(shim()));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("div verified"));
    assert!(text.contains("echo verified"));
    let stored: Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("sessions/div.json")).unwrap()).unwrap();
    assert_eq!(stored["verification"]["state"], "verified");
}
