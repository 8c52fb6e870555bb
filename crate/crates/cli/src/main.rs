use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing::{info, warn};
use tracing_subscriber::EnvFilter;

use predexec_core::agents::{LiveBackend, RecordingBackend, ReplayBackend, Script, ScriptedBackend};
use predexec_core::corpus::load_corpus;
use predexec_core::metrics::session_metrics;
use predexec_core::report::{
    emit_plateau_csv, load_reports, run_batch, verify_session, BatchOptions, BatchReport, Mode,
    SESSIONS_DIR,
};
use predexec_core::{
    run_session, AgentRole, Agents, Architecture, ChatBackend, Corpus, PromptTemplates, RunConfig,
    SessionStatus, Verifier,
};

#[derive(Parser)]
#[command(name = "predexec", version, about = "Execution-free runtime error detection with cooperating model agents")]
struct Cli {
    /// Log filter (overridden by RUST_LOG).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one detection session.
    Run(RunArgs),
    /// Run a session for every snippet of a corpus.
    Batch(BatchArgs),
    /// Re-verify stored session reports by executing their inputs.
    Verify(VerifyArgs),
    /// Recompute metrics from stored session reports.
    Metrics(MetricsArgs),
    /// Run sessions against a live provider and save the transcript.
    Record(RecordArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Live,
    Replay,
    Scripted,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Detect,
    So,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Detect => Mode::Detect,
            ModeArg::So => Mode::So,
        }
    }
}

#[derive(Args, Clone)]
struct SessionArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory overriding the built-in prompt templates.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Time budget per session, seconds.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    max_iterations: Option<u32>,
    /// No-gain iterations before switching to error-only prompts.
    #[arg(long)]
    plateau_window: Option<u32>,
    #[arg(long, value_parser = parse_architecture)]
    architecture: Option<Architecture>,
    #[arg(long)]
    generator_model: Option<String>,
    #[arg(long)]
    executor_model: Option<String>,
    /// Chat-completions base URL for both agents.
    #[arg(long)]
    base_url: Option<String>,
    /// Execute generated inputs after each session.
    #[arg(long)]
    verify: bool,
    /// Line-tracer shim for Python verification (default: $PREDEXEC_SHIM).
    #[arg(long)]
    shim: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "live")]
    backend: BackendKind,
    /// Transcript to replay.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Scripted responses (JSON file, or directory holding script.json).
    #[arg(long)]
    script: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    snippet: String,
    #[command(flatten)]
    session: SessionArgs,
    #[command(flatten)]
    backend: BackendArgs,
    /// Output directory; the report is printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the coverage curve as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BatchArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Restrict to these snippet ids.
    #[arg(long)]
    snippet: Vec<String>,
    #[command(flatten)]
    session: SessionArgs,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    out: PathBuf,
    /// Concurrent sessions (default: available cores).
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Directory of session reports, rewritten in place.
    #[arg(long)]
    reports: PathBuf,
    #[arg(long)]
    shim: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Directory of session reports (or a batch output directory).
    #[arg(long)]
    reports: PathBuf,
    #[arg(long, value_enum, default_value = "detect")]
    mode: ModeArg,
    /// Print the aggregate as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RecordArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    snippet: Vec<String>,
    #[command(flatten)]
    session: SessionArgs,
    /// Where to write the transcript.
    #[arg(long)]
    transcript: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_architecture(s: &str) -> Result<Architecture, String> {
    s.parse()
}

/// Error carrying its process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn config_error(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

fn runtime_error(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: error.into(),
    }
}

type CliResult = Result<ExitCode, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(&cli.log));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();

    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Batch(args) => cmd_batch(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Record(args) => cmd_record(args),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_run_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => RunConfig::load(p).map_err(config_error),
        None => Ok(RunConfig::default()),
    }
}

/// Config file values with CLI flags applied on top.
fn resolve(args: &SessionArgs) -> Result<(RunConfig, PromptTemplates), Failure> {
    let mut config = load_run_config(args.config.as_deref())?;
    let s = &mut config.session;
    if let Some(b) = args.budget {
        s.time_budget = Some(b);
    }
    if let Some(n) = args.max_iterations {
        s.max_iterations = Some(n);
    }
    if let Some(k) = args.plateau_window {
        s.plateau_window = k;
    }
    if let Some(a) = args.architecture {
        s.architecture = a;
    }
    if args.verify {
        s.verify_by_execution = true;
    }
    s.validate().map_err(config_error)?;
    if let Some(m) = &args.generator_model {
        config.generator.model_name = Some(m.clone());
    }
    if let Some(m) = &args.executor_model {
        config.executor.model_name = Some(m.clone());
    }
    if let Some(url) = &args.base_url {
        config.generator.base_url = Some(url.clone());
        config.executor.base_url = Some(url.clone());
    }
    if let Some(shim) = &args.shim {
        config.verifier.shim_path = Some(shim.clone());
    }
    apply_shim_env(&mut config);
    let templates = match &args.templates {
        Some(dir) => PromptTemplates::from_dir(dir).map_err(config_error)?,
        None => PromptTemplates::default(),
    };
    Ok((config, templates))
}

fn apply_shim_env(config: &mut RunConfig) {
    if config.verifier.shim_path.is_none() {
        config.verifier.shim_path = std::env::var_os("PREDEXEC_SHIM").map(PathBuf::from);
    }
}

fn build_agents(config: &RunConfig, backend: Arc<dyn ChatBackend>) -> Result<Agents, Failure> {
    Agents::new(
        backend,
        config.agent_config(AgentRole::TestCaseGenerator),
        config.agent_config(AgentRole::PredictiveExecutor),
    )
    .map_err(config_error)
}

fn make_backend(args: &BackendArgs) -> Result<Arc<dyn ChatBackend>, Failure> {
    Ok(match args.backend {
        BackendKind::Live => Arc::new(LiveBackend::new()),
        BackendKind::Replay => {
            let path = args
                .transcript
                .as_deref()
                .ok_or_else(|| config_error(anyhow!("--backend replay needs --transcript")))?;
            Arc::new(ReplayBackend::load(path).map_err(config_error)?)
        }
        BackendKind::Scripted => {
            let path = args
                .script
                .as_deref()
                .ok_or_else(|| config_error(anyhow!("--backend scripted needs --script")))?;
            let path = if path.is_dir() {
                path.join("script.json")
            } else {
                path.to_path_buf()
            };
            Arc::new(ScriptedBackend::from_script(
                Script::load(&path).map_err(config_error)?,
            ))
        }
    })
}

fn open_corpus(path: &Path) -> Result<Corpus, Failure> {
    load_corpus(path).map_err(config_error)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(runtime_error)?;
    }
    std::fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime_error)
}

fn status_code(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_run(args: RunArgs) -> CliResult {
    let (config, templates) = resolve(&args.session)?;
    let corpus = open_corpus(&args.corpus)?;
    let snippet = corpus
        .get(&args.snippet)
        .ok_or_else(|| config_error(anyhow!("snippet `{}` not in {}", args.snippet, args.corpus.display())))?;
    let agents = build_agents(&config, make_backend(&args.backend)?)?;

    let mut report = run_session(snippet, &config.session, &agents, &templates).map_err(config_error)?;
    if config.session.verify_by_execution {
        let verifier = Verifier::new(config.verifier.clone());
        verify_session(&mut report, &verifier, corpus.verification_target(snippet));
    }

    match &args.out {
        Some(dir) => {
            let path = report.save(&dir.join(SESSIONS_DIR)).map_err(runtime_error)?;
            info!(path = %path.display(), "report written");
            eprintln!("{}", path.display());
        }
        None => print!("{}", report.to_json()),
    }
    if let Some(csv) = &args.csv {
        write_file(csv, &emit_plateau_csv(&report))?;
    }
    if let Some(reason) = &report.failure {
        warn!(%reason, "session ended early");
    }
    Ok(status_code(report.status != SessionStatus::AgentUnavailable))
}

fn cmd_batch(args: BatchArgs) -> CliResult {
    let (config, templates) = resolve(&args.session)?;
    let corpus = open_corpus(&args.corpus)?;
    let agents = build_agents(&config, make_backend(&args.backend)?)?;
    let verifier = Verifier::new(config.verifier.clone());
    let mut options = BatchOptions {
        mode: args.mode.map(Mode::from).or(config.batch.mode).unwrap_or_default(),
        out_dir: Some(args.out.clone()),
        ..BatchOptions::default()
    };
    if let Some(n) = args.concurrency.or(config.batch.concurrency) {
        options.concurrency = n;
    }
    let only = (!args.snippet.is_empty()).then_some(args.snippet.as_slice());
    let outcome = run_batch(
        &corpus,
        only,
        &config.session,
        &agents,
        &templates,
        Some(&verifier),
        &options,
    )
    .map_err(|e| match e {
        predexec_core::Error::Corpus(_) | predexec_core::Error::Engine(_) => config_error(e),
        other => runtime_error(other),
    })?;
    print!("{}", outcome.report.summary());
    let ok = outcome.report.skipped.is_empty()
        && outcome
            .sessions
            .iter()
            .all(|s| s.status != SessionStatus::AgentUnavailable);
    Ok(status_code(ok))
}

fn cmd_verify(args: VerifyArgs) -> CliResult {
    let mut config = load_run_config(args.config.as_deref())?;
    if let Some(shim) = &args.shim {
        config.verifier.shim_path = Some(shim.clone());
    }
    apply_shim_env(&mut config);
    let corpus = open_corpus(&args.corpus)?;
    let reports = load_reports(&args.reports).map_err(config_error)?;
    let dir = if args.reports.join(SESSIONS_DIR).is_dir() {
        args.reports.join(SESSIONS_DIR)
    } else {
        args.reports.clone()
    };
    let verifier = Verifier::new(config.verifier.clone());
    let mut ok = true;
    for mut report in reports {
        let Some(snippet) = corpus.get(&report.snippet_id) else {
            warn!(snippet = %report.snippet_id, "not in corpus, skipped");
            ok = false;
            continue;
        };
        verify_session(&mut report, &verifier, corpus.verification_target(snippet));
        if !report.verification.is_verified() {
            ok = false;
        }
        let path = report.save(&dir).map_err(runtime_error)?;
        println!(
            "{} {}",
            report.snippet_id,
            if report.verification.is_verified() { "verified" } else { "unverified" }
        );
        info!(path = %path.display(), "report rewritten");
    }
    Ok(status_code(ok))
}

fn cmd_metrics(args: MetricsArgs) -> CliResult {
    let reports = load_reports(&args.reports).map_err(config_error)?;
    let mut ok = true;
    for r in &reports {
        if session_metrics(r) != r.metrics {
            warn!(snippet = %r.snippet_id, "stored metrics differ from recomputed metrics");
            ok = false;
        }
    }
    let stored = BatchReport::load(&args.reports.join("batch.json")).ok();
    let corpus_name = stored.as_ref().map_or_else(
        || {
            args.reports
                .file_name()
                .map_or_else(|| "reports".to_string(), |n| n.to_string_lossy().into_owned())
        },
        |b| b.corpus.clone(),
    );
    let skipped = stored.as_ref().map(|b| b.skipped.clone()).unwrap_or_default();
    let fingerprint = stored.and_then(|b| b.fingerprint);
    let batch = BatchReport::from_sessions(corpus_name, args.mode.into(), &reports, skipped, fingerprint);
    if args.json {
        print!("{}", batch.to_json());
    } else {
        print!("{}", batch.summary());
    }
    Ok(status_code(ok))
}

fn cmd_record(args: RecordArgs) -> CliResult {
    let (config, templates) = resolve(&args.session)?;
    let corpus = open_corpus(&args.corpus)?;
    let recorder = Arc::new(RecordingBackend::new(Arc::new(LiveBackend::new())));
    let agents = build_agents(&config, recorder.clone())?;
    let ids: Vec<String> = if args.snippet.is_empty() {
        corpus.snippets.iter().map(|s| s.id.clone()).collect()
    } else {
        args.snippet.clone()
    };
    let mut ok = true;
    for id in &ids {
        let snippet = corpus
            .get(id)
            .ok_or_else(|| config_error(anyhow!("snippet `{id}` not in {}", args.corpus.display())))?;
        let report = run_session(snippet, &config.session, &agents, &templates).map_err(config_error)?;
        if report.status == SessionStatus::AgentUnavailable {
            ok = false;
        }
        if let Some(dir) = &args.out {
            report.save(&dir.join(SESSIONS_DIR)).map_err(runtime_error)?;
        }
    }
    let transcript = recorder.transcript();
    transcript.save(&args.transcript).map_err(runtime_error)?;
    eprintln!("{} entries -> {}", transcript.len(), args.transcript.display());
    Ok(status_code(ok))
}
