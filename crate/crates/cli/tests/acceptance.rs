//! End-to-end acceptance checks. Each check prints one PASS or FAIL line
//! with its runtime and limit; the process fails if any check fails.

use std::collections::BTreeMap;
use std::future::Future;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::pin::Pin;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use erpchat_core::agent::{AgentLimits, AgentStatus, SqlAgent};
use erpchat_core::db::Database;
use erpchat_core::eval::{self, EvalModel};
use erpchat_core::events::EventEmitter;
use erpchat_core::extract::{self, BlockChooser, ExtractionTarget, FencedBlock, SelectionMethod};
use erpchat_core::fixture;
use erpchat_core::llm::{Author, Gateway, LlmError, Role, RoleTable, ScriptedBackend};
use erpchat_core::orchestrator::{Assistant, ConversationState, TurnStatus};
use erpchat_core::prompts::PromptSet;
use erpchat_core::sandbox::corpus::non_select_statements;
use erpchat_core::sandbox::{validate_select, Dialect, Sandbox, SandboxConfig, SandboxSession};
use erpchat_core::schema::{IntrospectOptions, SchemaDocument};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type CheckResult = Result<String, String>;
type CheckFuture = Pin<Box<dyn Future<Output = CheckResult>>>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

struct Kit {
    db: Database,
    schema: Arc<SchemaDocument>,
}

impl Kit {
    fn new() -> Result<Self, String> {
        let db = fixture::database().map_err(|e| e.to_string())?;
        let schema = Arc::new(fixture::schema_document(&db, &IntrospectOptions::default()).map_err(|e| e.to_string())?);
        Ok(Kit { db, schema })
    }

    fn session(&self) -> SandboxSession {
        Sandbox::new(self.db.clone(), SandboxConfig::default()).session().expect("read-only session")
    }

    fn agent(&self, backend: &Arc<ScriptedBackend>, limits: AgentLimits) -> SqlAgent {
        let gateway = Gateway::new(backend.clone(), RoleTable::default());
        SqlAgent::new(gateway, Arc::new(PromptSet::builtin()), self.schema.clone(), limits).expect("agent")
    }

    fn assistant(&self, backend: ScriptedBackend) -> Assistant {
        Assistant::new(
            Gateway::new(Arc::new(backend), RoleTable::default()),
            Arc::new(PromptSet::builtin()),
            self.schema.clone(),
            Sandbox::new(self.db.clone(), SandboxConfig::default()),
            AgentLimits::default(),
        )
        .expect("assistant")
    }
}

fn sql_reply(sql: &str) -> String {
    format!("Reasoning about the tables first.\n\n```sql\n{sql}\n```\n")
}

const APPROVE: &str = "```json\n{\"decision\": \"approved\", \"issues\": []}\n```";
const REVISE: &str =
    "```json\n{\"decision\": \"revise\", \"issues\": [{\"category\": \"semantic\", \"detail\": \"filter is missing\"}]}\n```";
const GOOD: &str = "SELECT PartNumber, Description FROM T_A WHERE Status = 'ACTIVE'";
const TYPO: &str = "SELECT PartNumbr FROM T_A";

fn fixture_shape() -> CheckResult {
    let kit = Kit::new()?;
    let doc = &kit.schema;
    let counts: BTreeMap<&str, usize> = doc.tables.iter().map(|t| (t.name.as_str(), t.columns.len())).collect();
    let expected: BTreeMap<&str, usize> =
        [("T_A", 28), ("T_B", 77), ("T_C", 15), ("T_D", 37), ("T_E", 43), ("T_F", 67), ("T_G", 54)].into();
    ensure!(counts == expected, "column counts {counts:?}");
    ensure!(counts.values().sum::<usize>() == 321, "total columns");

    // recount straight from the engine catalog
    let conn = kit.db.connect_catalog().map_err(|e| e.to_string())?;
    for (table, n) in &expected {
        let actual: i64 = conn
            .query_row(&format!("SELECT COUNT(*) FROM pragma_table_info('{table}')"), [], |r| r.get(0))
            .map_err(|e| e.to_string())?;
        ensure!(actual as usize == *n, "{table}: catalog has {actual} columns");
    }

    let declared: Vec<_> = doc.relationships.iter().filter(|r| r.declared).collect();
    ensure!(declared.len() == 1, "{} declared foreign keys", declared.len());
    let fk = declared[0];
    let pair = (fk.source().table, fk.source().column, fk.target().table, fk.target().column);
    ensure!(pair == ("T_D".into(), "ID".into(), "T_F".into(), "PathID".into()), "foreign key {pair:?}");
    ensure!(doc.relationships.len() == 8, "{} relationships", doc.relationships.len());
    let described = doc.tables.iter().flat_map(|t| &t.columns).filter(|c| c.description.is_some()).count();
    ensure!(described == 119, "{described} described columns");
    Ok("7 tables, 321 columns, 1 declared key, 8 relationships, 119 descriptions".into())
}

fn read_only_safety() -> CheckResult {
    let kit = Kit::new()?;
    let corpus = non_select_statements();
    ensure!(corpus.len() >= 1000, "corpus has only {} statements", corpus.len());
    let before = kit.db.table_checksums().map_err(|e| e.to_string())?;
    let accepted: Vec<&String> = corpus.iter().filter(|sql| validate_select(sql, Dialect::Sqlite).is_ok()).collect();
    ensure!(accepted.is_empty(), "{} accepted, first: {}", accepted.len(), accepted[0]);

    // even bypassing the validator, the read-only connection refuses writes
    let conn = kit.db.connect_readonly().map_err(|e| e.to_string())?;
    for sql in &corpus {
        let _ = conn.execute_batch(sql);
    }
    let session = kit.session();
    for sql in ["SELECT COUNT(*) FROM T_A", "SELECT * FROM T_B LIMIT 5"] {
        let q = validate_select(sql, Dialect::Sqlite).map_err(|e| e.to_string())?;
        ensure!(session.execute_blocking(&q).is_success(), "{sql} failed");
    }
    let after = kit.db.table_checksums().map_err(|e| e.to_string())?;
    ensure!(before == after, "table checksums changed");
    Ok(format!("{} statements rejected, checksums unchanged", corpus.len()))
}

async fn loop_bounds() -> CheckResult {
    let kit = Kit::new()?;
    let session = kit.session();
    let mut notes = Vec::new();
    for (n, m) in [(5, 3), (2, 4), (1, 1)] {
        let limits = AgentLimits::new(n, m).map_err(|e| e.to_string())?;

        let backend = Arc::new(ScriptedBackend::new().with_repeat(Role::Reasoner, sql_reply(TYPO)));
        let result = kit.agent(&backend, limits).run("list parts", &session, &EventEmitter::detached()).await.map_err(|e| e.to_string())?;
        ensure!(result.status == AgentStatus::ExhaustedReasoner, "N={n} M={m}: status {:?}", result.status);
        ensure!(backend.calls(Role::Reasoner) == n as usize, "N={n}: {} reasoner calls", backend.calls(Role::Reasoner));
        ensure!(backend.calls(Role::Critic) == 0, "N={n}: critic was called");

        let backend = Arc::new(
            ScriptedBackend::new().with_repeat(Role::Reasoner, sql_reply(GOOD)).with_repeat(Role::Critic, REVISE),
        );
        let result = kit.agent(&backend, limits).run("list parts", &session, &EventEmitter::detached()).await.map_err(|e| e.to_string())?;
        ensure!(result.status == AgentStatus::ExhaustedCritic, "M={m}: status {:?}", result.status);
        ensure!(backend.calls(Role::Critic) == m as usize, "M={m}: {} critic calls", backend.calls(Role::Critic));
        ensure!(backend.calls(Role::Reasoner) <= (n * m) as usize, "reasoner calls above N*M");

        let backend = Arc::new(
            ScriptedBackend::new().with_script(Role::Reasoner, [sql_reply(GOOD)]).with_script(Role::Critic, [APPROVE]),
        );
        let result = kit.agent(&backend, limits).run("list parts", &session, &EventEmitter::detached()).await.map_err(|e| e.to_string())?;
        ensure!(result.status == AgentStatus::Answered, "happy path status {:?}", result.status);
        let calls = (backend.calls(Role::Reasoner), backend.calls(Role::Critic), backend.calls(Role::Extractor));
        ensure!(calls == (1, 1, 0), "happy path calls {calls:?}");
        notes.push(format!("N={n},M={m}"));
    }
    Ok(format!("exact call counts for {}", notes.join(" ")))
}

async fn self_debug_repair() -> CheckResult {
    let kit = Kit::new()?;
    let backend = Arc::new(
        ScriptedBackend::new()
            .with_script(Role::Reasoner, [sql_reply(TYPO), sql_reply(GOOD)])
            .with_script(Role::Critic, [APPROVE]),
    );
    let result = kit
        .agent(&backend, AgentLimits::default())
        .run("list active parts", &kit.session(), &EventEmitter::detached())
        .await
        .map_err(|e| e.to_string())?;
    ensure!(result.status == AgentStatus::Answered, "status {:?}", result.status);
    let candidate = result.candidate.as_ref().ok_or("no candidate")?;
    ensure!(candidate.attempt_index == 2, "answered on attempt {}", candidate.attempt_index);
    ensure!(candidate.sql == GOOD, "final sql {}", candidate.sql);

    let engine_error = kit
        .db
        .connect_readonly()
        .map_err(|e| e.to_string())?
        .prepare(TYPO)
        .map(|_| ())
        .expect_err("typo must not prepare")
        .to_string();
    let second_call = backend.call_log().into_iter().filter(|c| c.role == Role::Reasoner).nth(1).ok_or("one reasoner call")?;
    let fed_back = second_call.messages.last().ok_or("empty transcript")?;
    ensure!(fed_back.author == Author::User, "feedback author {:?}", fed_back.author);
    ensure!(fed_back.content.contains(&engine_error), "engine error `{engine_error}` not in feedback");
    ensure!(second_call.messages.iter().any(|m| m.author == Author::Assistant && m.content.contains(TYPO)), "first attempt missing");
    Ok(format!("repaired on attempt 2 after `{engine_error}`"))
}

async fn hitl_gate() -> CheckResult {
    let kit = Kit::new()?;
    let clarify = "```json\n{\"decision\": \"clarify\", \"clarification_question\": \"Which year?\", \"reason\": \"no period\"}\n```";
    let proceed = "```json\n{\"decision\": \"proceed\", \"normalized_intent\": \"units shipped per part in 2023\", \"reason\": \"clear\"}\n```";
    let backend = Arc::new(
        ScriptedBackend::new()
            .with_script(Role::Dialogue, [clarify, proceed, "Done."])
            .with_script(Role::Reasoner, [sql_reply(GOOD)])
            .with_script(Role::Critic, [APPROVE]),
    );
    let assistant = Assistant::new(
        Gateway::new(backend.clone(), RoleTable::default()),
        Arc::new(PromptSet::builtin()),
        kit.schema.clone(),
        Sandbox::new(kit.db.clone(), SandboxConfig::default()),
        AgentLimits::default(),
    )
    .map_err(|e| e.to_string())?;
    let mut state = ConversationState::new("gate");
    let first = EventEmitter::detached();
    let report = assistant.handle_turn(&mut state, "units shipped per part", &first).await.map_err(|e| e.to_string())?;
    ensure!(report.status == TurnStatus::Clarifying, "first turn {:?}", report.status);
    ensure!(first.kinds() == ["intent_assessed", "clarification_requested"], "events {:?}", first.kinds());
    let pending = state.pending_clarification.clone().ok_or("no pending clarification")?;
    ensure!(pending.question == "Which year?", "pending {pending:?}");
    ensure!(backend.calls(Role::Reasoner) == 0, "sql agent ran before clarification");

    let report = assistant.handle_turn(&mut state, "2023", &EventEmitter::detached()).await.map_err(|e| e.to_string())?;
    ensure!(report.status == TurnStatus::Answered, "second turn {:?}", report.status);
    let assess = backend.call_log().into_iter().filter(|c| c.role == Role::Dialogue).nth(1).ok_or("second assessment")?;
    let merged = "units shipped per part; clarified: 2023";
    ensure!(assess.messages.iter().any(|m| m.content.contains(merged)), "merged intent not assessed");
    let reasoner = backend.call_log().into_iter().find(|c| c.role == Role::Reasoner).ok_or("reasoner never ran")?;
    ensure!(reasoner.messages.iter().any(|m| m.content.contains("units shipped per part in 2023")), "restated intent missing");
    ensure!(backend.calls(Role::Reasoner) == 1 && state.pending_clarification.is_none(), "gate did not resolve");
    Ok("clarify, then merged intent reached the agent".into())
}

/// Refuses to pick, so the fallback rule decides; counts consultations.
struct CountingChooser(AtomicUsize);

#[async_trait]
impl BlockChooser for CountingChooser {
    async fn choose(&self, _: &ExtractionTarget, _: &[&FencedBlock], _: &str) -> Result<Option<usize>, LlmError> {
        self.0.fetch_add(1, Ordering::SeqCst);
        Ok(None)
    }
}

/// Line-oriented reference: a fence line opens a block, a bare fence line
/// closes it, tags are compared case-insensitively against the SQL aliases.
fn reference_pick(doc: &str) -> (String, bool) {
    let sqlish = ["sql", "sqlite", "tsql", "mssql"];
    let mut blocks: Vec<(String, Vec<&str>)> = Vec::new();
    let mut open: Option<(String, Vec<&str>)> = None;
    for line in doc.lines() {
        match open.take() {
            None => {
                if let Some(tag) = line.strip_prefix("```") {
                    open = Some((tag.trim().to_lowercase(), Vec::new()));
                }
            }
            Some((tag, mut body)) => {
                if line == "```" {
                    blocks.push((tag, body));
                } else {
                    body.push(line);
                    open = Some((tag, body));
                }
            }
        }
    }
    let matching: Vec<&(String, Vec<&str>)> = blocks.iter().filter(|(t, _)| sqlish.contains(&t.as_str())).collect();
    let chosen = matching.last().copied().or(blocks.last()).expect("corpus documents hold a block");
    (chosen.1.join("\n").trim().to_string(), matching.len() >= 2)
}

fn generated_document(rng: &mut StdRng) -> String {
    let tags = ["sql", "SQL", "sqlite", "json", "python", "", "text", "tsql"];
    let words = ["select", "the", "join", "parts", "orders", "units", "shipped", "total", "where", "we", "now"];
    let mut doc = String::new();
    for b in 0..rng.random_range(1..=5) {
        for _ in 0..rng.random_range(0..3) {
            let n = rng.random_range(3..10);
            let sentence: Vec<&str> = (0..n).map(|_| words[rng.random_range(0..words.len())]).collect();
            doc.push_str(&sentence.join(" "));
            doc.push_str(".\n");
        }
        let tag = tags[rng.random_range(0..tags.len())];
        doc.push_str(&format!("```{tag}\n"));
        for l in 0..rng.random_range(1..4) {
            doc.push_str(&format!("SELECT col{l} FROM block{b} WHERE x = {}\n", rng.random_range(0..100)));
        }
        doc.push_str("```\n");
    }
    doc
}

async fn extraction_determinism() -> CheckResult {
    let mut rng = StdRng::seed_from_u64(20_240_611);
    let target = ExtractionTarget::sql();
    let (mut consulted, mut multi) = (0, 0);
    for i in 0..50 {
        let doc = generated_document(&mut rng);
        let (want, needs_chooser) = reference_pick(&doc);
        let chooser = CountingChooser(AtomicUsize::new(0));
        let (selection, extracted) = extract::extract(&doc, &target, Some(&chooser)).await.map_err(|e| format!("doc {i}: {e}"))?;
        let got = extracted.as_text().ok_or("sql target yields text")?.to_string();
        ensure!(got == want, "doc {i}: picked {got:?}, reference {want:?}\n{doc}");
        let calls = chooser.0.load(Ordering::SeqCst);
        ensure!(calls == usize::from(needs_chooser), "doc {i}: extractor consulted {calls} times");
        if needs_chooser {
            multi += 1;
            ensure!(selection.method == SelectionMethod::Fallback, "doc {i}: method {:?}", selection.method);
        }
        consulted += calls;
    }
    ensure!(multi > 0, "corpus never produced two candidate blocks");
    Ok(format!("50 documents match the reference, extractor consulted {consulted} times for {multi} multi-candidate docs"))
}

const REPLAY_ROWS: [(&str, &[u32], &str); 9] = [
    ("Llama 3.1 8B FP16", &[2], "1/11"),
    ("Qwen 2.5 7B FP16", &[1, 5, 7], "3/11"),
    ("Qwen 2.5 32B Q4", &[1, 2, 4, 5, 6, 7, 8, 9, 11], "9/11"),
    ("Devstral 24B Q4", &[1, 2, 3, 4, 5, 6, 7, 8, 9, 11], "10/11"),
    ("Codestral 22B Q4", &[], "0/11"),
    ("Magistral 24B Q4", &[], "0/11"),
    ("Deepseek Coder 33B Q4", &[], "0/11"),
    ("Gemma 3 27B Q4", &[1, 7], "2/11"),
    ("Qwen 3 32B Q4", &[1, 2], "2/11"),
];

async fn accuracy_report_replay() -> CheckResult {
    let kit = Kit::new()?;
    let suite = eval::parse_suite(fixture::EVAL_SUITE).map_err(|e| e.to_string())?;
    ensure!(suite.cases.len() == 11, "suite has {} cases", suite.cases.len());
    let mut models = Vec::new();
    for (label, passes, _) in REPLAY_ROWS {
        let marks: Vec<bool> = suite.ids().iter().map(|id| passes.contains(id)).collect();
        let backend = eval::replay_backend(&suite, &marks).map_err(|e| e.to_string())?;
        models.push(EvalModel { label: label.to_string(), assistant: kit.assistant(backend) });
    }
    let report = eval::run_suite(&suite, &models).await;
    let rendered = eval::render_report(&report);
    for ((label, passes, accuracy), model) in REPLAY_ROWS.iter().zip(&report.models) {
        let recount = model.verdicts.iter().filter(|v| v.passed).count();
        ensure!(recount == passes.len(), "{label}: {recount} passes");
        ensure!(model.accuracy().to_string() == *accuracy, "{label}: accuracy {}", model.accuracy());
        let cells: String = (1..=11).map(|id| if passes.contains(&id) { " ✓ |" } else { " ✗ |" }).collect();
        let row = format!("| {label} |{cells} {accuracy} |");
        ensure!(rendered.lines().any(|l| l == row), "row missing from report: {row}\n{rendered}");
    }
    ensure!(eval::render_report(&report) == rendered, "report rendering is not deterministic");
    Ok(REPLAY_ROWS.iter().map(|r| r.2).collect::<Vec<_>>().join(" "))
}

struct Server {
    child: Child,
    base: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start_server(storage: &Path, scripts: &Path) -> Result<Server, String> {
    let mut child = Command::new(env!("CARGO_BIN_EXE_erpchat"))
        .args(["serve", "--bind", "127.0.0.1:0"])
        .env("ERPCHAT_LLM__BACKEND", "scripted")
        .env("ERPCHAT_LLM__SCRIPT_DIR", scripts)
        .env("ERPCHAT_SERVICE__STORAGE_DIR", storage)
        .env_remove("ERPCHAT_CONFIG")
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| format!("spawning erpchat: {e}"))?;
    let stdout = child.stdout.take().ok_or("no stdout")?;
    let mut line = String::new();
    BufReader::new(stdout).read_line(&mut line).map_err(|e| e.to_string())?;
    let base = line.trim().strip_prefix("erpchat listening on ").ok_or_else(|| format!("unexpected banner {line:?}"))?.to_string();
    Ok(Server { child, base })
}

fn write_scripts(dir: &Path) -> Result<(), String> {
    let files = [
        ("dialogue/01.md", "```json\n{\"decision\": \"proceed\", \"normalized_intent\": \"count active parts\", \"reason\": \"clear\"}\n```"),
        ("dialogue/02.md", "There are 21 active parts."),
        ("reasoner/01.md", "```sql\nSELECT COUNT(*) AS active FROM T_A WHERE Status = 'ACTIVE'\n```"),
        ("critic/01.md", APPROVE),
    ];
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::create_dir_all(path.parent().expect("nested")).map_err(|e| e.to_string())?;
        std::fs::write(path, text).map_err(|e| e.to_string())?;
    }
    Ok(())
}

async fn durability() -> CheckResult {
    let storage = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scripts = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_scripts(scripts.path())?;
    let http = reqwest::Client::new();
    let fail = |e: reqwest::Error| e.to_string();

    let server = start_server(storage.path(), scripts.path())?;
    let created: serde_json::Value =
        http.post(format!("{}/sessions", server.base)).send().await.map_err(fail)?.json().await.map_err(fail)?;
    let id = created["session_id"].as_str().ok_or("no session id")?.to_string();
    let report: serde_json::Value = http
        .post(format!("{}/sessions/{id}/messages?wait=true", server.base))
        .json(&serde_json::json!({"text": "how many active parts are there?"}))
        .send()
        .await
        .map_err(fail)?
        .json()
        .await
        .map_err(fail)?;
    ensure!(report["status"] == "answered", "turn report {report}");
    let before = http.get(format!("{}/sessions/{id}", server.base)).send().await.map_err(fail)?.bytes().await.map_err(fail)?;
    drop(server);

    let server = start_server(storage.path(), scripts.path())?;
    let after = http.get(format!("{}/sessions/{id}", server.base)).send().await.map_err(fail)?.bytes().await.map_err(fail)?;
    ensure!(before == after, "transcript changed across restart");
    let transcript: serde_json::Value = serde_json::from_slice(&after).map_err(|e| e.to_string())?;
    let events = transcript["events"].as_array().ok_or("no events")?.len();
    ensure!(events == 6, "{events} events persisted");
    ensure!(transcript["state"]["turns"][0]["reply"] == report["reply"], "reply differs");
    Ok(format!("{} bytes identical after restart, {events} events", after.len()))
}

fn main() {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().expect("runtime");
    let checks: Vec<(&str, u64, Box<dyn Fn() -> CheckFuture>)> = vec![
        ("fixture shape", 5, Box::new(|| Box::pin(async { fixture_shape() }))),
        ("read-only safety", 60, Box::new(|| Box::pin(async { read_only_safety() }))),
        ("loop-bound exactness", 5, Box::new(|| Box::pin(loop_bounds()))),
        ("self-debug repair", 5, Box::new(|| Box::pin(self_debug_repair()))),
        ("clarification gate", 5, Box::new(|| Box::pin(hitl_gate()))),
        ("extraction determinism", 10, Box::new(|| Box::pin(extraction_determinism()))),
        ("accuracy table replay", 10, Box::new(|| Box::pin(accuracy_report_replay()))),
        ("durability across restart", 30, Box::new(|| Box::pin(durability()))),
    ];
    let mut failed = 0;
    for (name, limit, check) in &checks {
        let started = Instant::now();
        let outcome = runtime.block_on(check());
        let elapsed = started.elapsed();
        let outcome = match outcome {
            Ok(note) if elapsed > Duration::from_secs(*limit) => Err(format!("took longer than {limit}s ({note})")),
            other => other,
        };
        match outcome {
            Ok(note) => println!("PASS  {name:<28} {:>8.2?} (limit {limit}s)  {note}", elapsed),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<28} {:>8.2?} (limit {limit}s)  {why}", elapsed);
            }
        }
    }
    println!("{} of {} acceptance checks passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
