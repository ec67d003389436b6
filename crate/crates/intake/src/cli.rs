//! Command-line entry points.
//!
//! Exit status: 0 on success, 1 when the data or the domain outcome is at
//! fault, 2 for bad usage or configuration.

use std::fs::{self, File};
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use intake_core::eval::{build_report, disagreement_report};
use intake_core::screener::{finalize, Action, ScreeningContext, SessionId, SessionState};
use intake_core::{DeterminationKind, ProgramId, Provider};

use crate::config::{ProvidersFile, ServiceConfig};
use crate::dataset::{load_dataset, load_results, write_results, SchemaError};
use crate::matrix::{run_matrix, MatrixInput};
use crate::providers::{build_all, record_mode, ProviderKind};
use crate::report::{render_disagreements, render_distribution, render_report, ReportFormat};
use crate::service::{self, AppState};

#[derive(Debug, Parser)]
#[command(name = "intake", version, about = "Legal-aid intake screening service and evaluation tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `listen_port` from the config.
        #[arg(long)]
        port: Option<u16>,
    },
    /// Evaluation runs and reports.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Dataset checks.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Interactive screening session on the terminal.
    Chat(ChatArgs),
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Run every dataset pair against every provider and write JSONL results.
    Run(RunArgs),
    /// Compute metrics from a results file.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub providers: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub parallelism: usize,
    /// Service config supplying programs; overrides `programs_config` in the providers file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Record every HTTP completion to this store for later replay.
    #[arg(long)]
    pub record: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "md")]
    pub format: ReportFormat,
    /// Append the disagreement listing (markdown only).
    #[arg(long)]
    pub disagreements: bool,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Check a dataset and print its label distribution.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub program: String,
    #[arg(long)]
    pub provider: String,
    /// Append the conversation to this JSONL file; defaults to the config's transcript log.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Data(_) => ExitCode::from(1),
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

// An unreadable file is a usage problem; a readable file with bad content is a data problem.
fn schema(e: SchemaError) -> CliError {
    match e {
        SchemaError::Io { .. } => usage(e),
        _ => data(e),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let stdout = io::stdout();
    match cli.command {
        Command::Serve { config, port } => serve(&config, port),
        Command::Eval(EvalCommand::Run(args)) => eval_run(&args),
        Command::Eval(EvalCommand::Report(args)) => eval_report(&args, &mut stdout.lock()),
        Command::Dataset(DatasetCommand::Validate { dataset }) => dataset_validate(&dataset, &mut stdout.lock()),
        Command::Chat(args) => chat(&args, io::stdin().lock(), &mut stdout.lock()),
    }
}

fn screening_provider(cfg: &ServiceConfig, name: Option<&str>) -> Result<Arc<dyn Provider>, CliError> {
    let name = name
        .or(cfg.screening_provider.as_deref())
        .ok_or_else(|| usage("config sets no screening_provider"))?;
    let p = cfg.provider(name).ok_or_else(|| usage(format!("no provider named `{name}` in config")))?;
    p.build().map_err(usage)
}

fn serve(config: &Path, port: Option<u16>) -> Result<(), CliError> {
    let cfg = ServiceConfig::load(config).map_err(usage)?;
    let provider = screening_provider(&cfg, None)?;
    let token = std::env::var(&cfg.admin_token_env).ok();
    if token.is_none() {
        tracing::warn!(var = %cfg.admin_token_env, "admin token not set; rules updates are disabled");
    }
    let state = Arc::new(AppState::new(&cfg, provider, token).map_err(usage)?);
    let addr = format!("{}:{}", cfg.listen_host, port.unwrap_or(cfg.listen_port));
    let rt = tokio::runtime::Runtime::new().map_err(usage)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| usage(format!("bind {addr}: {e}")))?;
        tracing::info!(%addr, programs = cfg.programs.len(), "listening");
        service::serve(listener, state).await.map_err(data)
    })
}

pub fn eval_run(args: &RunArgs) -> Result<(), CliError> {
    let dataset = load_dataset(&args.dataset).map_err(schema)?;
    let file = ProvidersFile::load(&args.providers).map_err(usage)?;
    let config_path = args
        .config
        .clone()
        .or(file.programs_config.clone())
        .ok_or_else(|| usage("no programs config: set programs_config in the providers file or pass --config"))?;
    let cfg = ServiceConfig::load(&config_path).map_err(usage)?;

    let mut configs = file.providers;
    if let Some(store) = &args.record {
        for c in configs.iter_mut().filter(|c| c.kind == ProviderKind::HttpChatCompletions) {
            *c = record_mode(c, store).map_err(usage)?;
        }
    }
    let providers = build_all(&configs).map_err(usage)?;
    let input =
        MatrixInput { dataset: &dataset, programs: &cfg.programs, instructions: &cfg.instructions, params: cfg.params };
    let results = run_matrix(&input, &providers, args.parallelism).map_err(usage)?;

    let out = File::create(&args.out).map_err(|e| usage(format!("{}: {e}", args.out.display())))?;
    write_results(BufWriter::new(out), &results).map_err(data)?;
    let failed = results.iter().filter(|r| r.error.is_some()).count();
    eprintln!("wrote {} results to {} ({failed} unscored)", results.len(), args.out.display());
    Ok(())
}

pub fn eval_report(args: &ReportArgs, out: &mut impl Write) -> Result<(), CliError> {
    let dataset = load_dataset(&args.dataset).map_err(schema)?;
    let results = load_results(&args.input).map_err(schema)?;
    let report = build_report(&results, &dataset).map_err(data)?;
    let mut text = render_report(&report, args.format);
    if args.disagreements && args.format == ReportFormat::Markdown {
        text.push('\n');
        text.push_str(&render_disagreements(&disagreement_report(&results, &dataset)));
    }
    out.write_all(text.as_bytes()).map_err(data)
}

pub fn dataset_validate(path: &Path, out: &mut impl Write) -> Result<(), CliError> {
    let dataset = load_dataset(path).map_err(|e| match e {
        SchemaError::Io { .. } => usage(e),
        _ => data(format!("{}: {e}", path.display())),
    })?;
    writeln!(out, "{}: {} records", path.display(), dataset.len()).map_err(data)?;
    out.write_all(render_distribution(&dataset).as_bytes()).map_err(data)
}

/// How an interactive session ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChatEnd {
    Closed(DeterminationKind),
    EndOfInput,
}

fn chat(args: &ChatArgs, input: impl BufRead, out: &mut impl Write) -> Result<(), CliError> {
    let cfg = ServiceConfig::load(&args.config).map_err(usage)?;
    let provider = screening_provider(&cfg, Some(&args.provider))?;
    let log_path = args.transcript.clone().or(cfg.transcript_log.clone());
    let log = match &log_path {
        Some(p) => Some(
            fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|e| usage(format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    run_chat(&cfg, &ProgramId::new(args.program.clone()), provider.as_ref(), input, out, log).map(|_| ())
}

/// Drives one screening conversation over line-oriented input.
pub fn run_chat(
    cfg: &ServiceConfig,
    program_id: &ProgramId,
    provider: &dyn Provider,
    mut input: impl BufRead,
    out: &mut impl Write,
    mut log: Option<File>,
) -> Result<ChatEnd, CliError> {
    let program = cfg.programs.get(program_id).ok_or_else(|| usage(format!("no program `{program_id}` in config")))?;
    let ctx = ScreeningContext { instructions: &cfg.instructions, program, params: cfg.params };
    let mut state = SessionState::new(SessionId("terminal".into()), program_id.clone());
    let w = |out: &mut dyn Write, s: &str| writeln!(out, "{s}").and_then(|_| out.flush()).map_err(data);

    w(out, &format!("{}\nDescribe your legal problem in a few sentences. Leave out names and addresses.", program.name))?;
    let mut line = String::new();
    loop {
        write!(out, "> ").and_then(|_| out.flush()).map_err(data)?;
        line.clear();
        if input.read_line(&mut line).map_err(data)? == 0 {
            w(out, "")?;
            if let Some(f) = log.as_mut() {
                f.flush().map_err(data)?;
            }
            return Ok(ChatEnd::EndOfInput);
        }
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let before = state.transcript().len();
        let action = state.advance(ctx, text, provider, crate::now()).map_err(data)?;
        if let Some(f) = log.as_mut() {
            for turn in &state.transcript().turns()[before..] {
                let ev = json!({"event": "turn", "program": program_id, "turn": turn});
                writeln!(f, "{ev}").and_then(|_| f.flush()).map_err(data)?;
            }
        }
        match action {
            Action::AskUser(q) => w(out, &q)?,
            Action::RetryLater(e) => {
                w(out, &format!("The screening service is unavailable ({e}). Enter your text again to retry."))?
            }
            Action::Close(kind) => {
                let d = finalize(&state, program).map_err(data)?;
                if let Some(f) = log.as_mut() {
                    let ev = json!({"event": "determination", "program": program_id, "determination": d});
                    writeln!(f, "{ev}").and_then(|_| f.flush()).map_err(data)?;
                }
                w(out, &format!("\n{}\n\n{}\n", d.message, d.explanation))?;
                w(out, &format!("Website: {}\nPhone: {}\n\n{}", d.referral.website, d.referral.phone, d.disclaimer))?;
                return Ok(ChatEnd::Closed(kind));
            }
        }
    }
}
