use std::io::{BufRead, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use erpchat_core::config::{env_overrides, load_models, AppConfig};
use erpchat_core::eval::{self, EvalModel};
use erpchat_core::events::{AgentEvent, EventEmitter, EventKind};
use erpchat_core::fixture;
use erpchat_core::orchestrator::ConversationState;
use erpchat_core::sandbox::{validate_select, Dialect, ExecutionOutcome};
use erpchat_core::service::{router, serve as serve_http, ChatService, SessionStore};
use tracing_subscriber::EnvFilter;

/// Chat with an ERP database in natural language.
#[derive(Parser)]
#[command(name = "erpchat", version)]
struct Cli {
    /// Configuration file. `ERPCHAT_*` environment variables override it.
    #[arg(long, global = true, env = "ERPCHAT_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP chat service.
    Serve {
        /// Listen address, overriding `service.bind`.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Answer one question without the service, printing each step.
    Ask {
        question: String,
        /// Print events as JSON lines.
        #[arg(long)]
        json: bool,
    },
    /// Inspect the schema document.
    #[command(subcommand)]
    Schema(SchemaCommand),
    /// Validate SQL against the read-only policy.
    #[command(subcommand)]
    Sql(SqlCommand),
    /// Measure accuracy over a question suite.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Subcommand)]
enum SchemaCommand {
    /// Write the schema document the agents receive.
    Render {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SqlCommand {
    /// Check whether statements pass the read-only validator.
    Check(CheckArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Expectation {
    Accept,
    Reject,
}

#[derive(Args)]
struct CheckArgs {
    /// File holding one statement, or `-` for stdin.
    file: PathBuf,
    /// Dialect name: sqlite or mssql. Defaults to the configured one.
    #[arg(long)]
    dialect: Option<String>,
    /// Treat the input as JSON lines, each a string or an object with `sql`.
    #[arg(long)]
    batch: bool,
    /// Exit non-zero unless every statement has this outcome.
    #[arg(long, value_enum)]
    expect: Option<Expectation>,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Run a question suite against a list of models.
    Run {
        /// Suite file; the bundled suite by default.
        #[arg(long)]
        suite: Option<PathBuf>,
        /// Model list with one `[[model]]` entry per configuration.
        #[arg(long)]
        models: PathBuf,
        /// Markdown report path; stdout by default.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-case verdicts as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    match runtime.block_on(run(cli)) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

async fn run(cli: Cli) -> Result<ExitCode> {
    let config = AppConfig::load(cli.config.as_deref(), env_overrides()).context("loading configuration")?;
    match cli.command {
        Command::Serve { bind } => serve(&config, bind).await,
        Command::Ask { question, json } => ask(&config, &question, json).await,
        Command::Schema(SchemaCommand::Render { out }) => {
            let db = config.open_database()?;
            let document = config.schema_document(&db)?;
            write_output(out.as_deref(), &document.rendered)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sql(SqlCommand::Check(args)) => sql_check(&config, &args),
        Command::Eval(EvalCommand::Run { suite, models, out, json }) => {
            eval_run(&config, suite.as_deref(), &models, out.as_deref(), json.as_deref()).await
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

async fn serve(config: &AppConfig, bind: Option<String>) -> Result<ExitCode> {
    let assistant = config.build_assistant()?;
    let store = SessionStore::open(&config.service.storage_dir)?;
    let service = ChatService::new(Arc::new(assistant), store);
    let app = router(service, config.service.ui_dir.clone());
    let bind = bind.unwrap_or_else(|| config.service.bind.clone());
    let listener = tokio::net::TcpListener::bind(&bind).await.with_context(|| format!("binding {bind}"))?;
    let addr = listener.local_addr()?;
    println!("erpchat listening on http://{addr}");
    std::io::stdout().flush()?;
    tracing::info!(%addr, storage = %config.service.storage_dir.display(), "serving");
    serve_http(listener, app).await?;
    Ok(ExitCode::SUCCESS)
}

fn summarize(event: &AgentEvent) -> String {
    let one_line = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
    match &event.kind {
        EventKind::IntentAssessed { decision, message, .. } => format!("{decision}: {message}"),
        EventKind::ClarificationRequested { question, .. } => question.clone(),
        EventKind::SqlAttempt { round, attempt, sql, note } => {
            let body = sql.as_deref().map(one_line).or_else(|| note.clone()).unwrap_or_default();
            format!("round {round} attempt {attempt}: {body}")
        }
        EventKind::ExecutionResult { outcome, .. } => match outcome {
            ExecutionOutcome::Success(preview) => {
                let more = if preview.truncated { "+" } else { "" };
                format!("ok, {}{more} rows", preview.rows.len())
            }
            ExecutionOutcome::Failure(failure) => format!("{}: {}", failure.failure_class.as_str(), failure.message),
        },
        EventKind::Critique { round, decision, issues } => format!("round {round}: {decision} ({} issues)", issues.len()),
        EventKind::FinalSql { sql, status, .. } => format!("{status}: {}", one_line(sql)),
        EventKind::Answer { .. } => "reply ready".into(),
        EventKind::Error { stage, message } => format!("{stage}: {message}"),
    }
}

async fn ask(config: &AppConfig, question: &str, json: bool) -> Result<ExitCode> {
    let assistant = config.build_assistant()?;
    let sink = move |event: &AgentEvent| {
        let line = if json {
            serde_json::to_string(event).unwrap_or_default()
        } else {
            format!("[{}] {:<24} {}", event.seq, event.kind_name(), summarize(event))
        };
        println!("{line}");
    };
    let events = EventEmitter::new(Arc::new(sink), 0);
    let mut state = ConversationState::new("cli");
    let report = assistant.handle_turn(&mut state, question, &events).await?;
    if !json {
        println!("\n{}", report.reply);
    }
    Ok(ExitCode::SUCCESS)
}

fn read_input(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut text = String::new();
        std::io::stdin().read_to_string(&mut text)?;
        return Ok(text);
    }
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn sql_check(config: &AppConfig, args: &CheckArgs) -> Result<ExitCode> {
    let dialect = match &args.dialect {
        Some(name) => Dialect::parse(name).with_context(|| format!("unknown dialect `{name}`"))?,
        None => config.database.dialect,
    };
    let text = read_input(&args.file)?;
    let statements: Vec<String> = if args.batch {
        let mut out = Vec::new();
        for (i, line) in text.as_bytes().lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value =
                serde_json::from_str(&line).with_context(|| format!("line {}: not JSON", i + 1))?;
            match value {
                serde_json::Value::String(sql) => out.push(sql),
                serde_json::Value::Object(obj) => match obj.get("sql") {
                    Some(serde_json::Value::String(sql)) => out.push(sql.clone()),
                    _ => bail!("line {}: object without a string `sql` field", i + 1),
                },
                _ => bail!("line {}: expected a string or an object", i + 1),
            }
        }
        out
    } else {
        vec![text]
    };

    let (mut accepted, mut mismatches) = (0usize, 0usize);
    let mut stdout = std::io::stdout().lock();
    for (index, sql) in statements.iter().enumerate() {
        let record = match validate_select(sql, dialect) {
            Ok(query) => {
                accepted += 1;
                serde_json::json!({"index": index, "accepted": true, "tables": query.tables(), "columns": query.output_columns()})
            }
            Err(err) => serde_json::json!({"index": index, "accepted": false, "reason": err, "message": err.to_string()}),
        };
        let ok = record["accepted"].as_bool() == Some(true);
        if let Some(expect) = args.expect {
            if ok != (expect == Expectation::Accept) {
                mismatches += 1;
            }
        }
        writeln!(stdout, "{record}")?;
    }
    stdout.flush()?;
    eprintln!(
        "checked {} statements: {accepted} accepted, {} rejected{}",
        statements.len(),
        statements.len() - accepted,
        if args.expect.is_some() { format!(", {mismatches} unexpected") } else { String::new() }
    );
    Ok(if mismatches == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

async fn eval_run(
    config: &AppConfig,
    suite: Option<&Path>,
    models: &Path,
    out: Option<&Path>,
    json: Option<&Path>,
) -> Result<ExitCode> {
    let suite = match suite {
        Some(path) => eval::load_suite(path)?,
        None => eval::parse_suite(fixture::EVAL_SUITE)?,
    };
    let mut entries = Vec::new();
    for entry in load_models(models)? {
        let assistant = config.for_model(&entry)?.build_assistant()?;
        entries.push(EvalModel { label: entry.label.clone(), assistant });
    }
    let report = eval::run_suite(&suite, &entries).await;
    if let Some(path) = json {
        std::fs::write(path, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", path.display()))?;
    }
    write_output(out, &eval::render_report(&report))?;
    Ok(ExitCode::SUCCESS)
}
