//! Question suites, validators and accuracy reports for model comparisons.


use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use rusqlite::types::Value;
use serde::{Deserialize, Serialize};

use crate::events::EventEmitter;
use crate::llm::{Role, ScriptedBackend, ScriptedReply};
use crate::orchestrator::{Assistant, ConversationState};
use crate::sandbox::{validate_select, SandboxSession};

/// Largest result a validator will compare.
pub const MAX_COMPARE_ROWS: usize = 10_000;
const PASS_MARK: &str = "✓";
const FAIL_MARK: &str = "✗";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("malformed suite: {0}")]
    MalformedSuite(String),
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("case {0} has no reference query to replay")]
    MissingReference(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManualVerdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewedAnswer {
    pub verdict: ManualVerdict,
    pub sql: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum RawCell {
    Integer(i64),
    Float(f64),
    Boolean(bool),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawValidator {
    ExpectedRows {
        columns: Vec<String>,
        rows: Vec<Vec<RawCell>>,
        #[serde(default)]
        ordered: bool,
    },
    ExpectedSqlPredicate {
        #[serde(default)]
        required: Vec<String>,
        #[serde(default)]
        forbidden: Vec<String>,
    },
    Manual {
        reviewed: Vec<ReviewedAnswer>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCase {
    id: u32,
    question: String,
    reference_sql: Option<String>,
    validator: RawValidator,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSuite {
    #[serde(default)]
    case: Vec<RawCase>,
}

/// How a case's final query is judged. Expected rows hold normalized cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Validator {
    ExpectedRows { columns: Vec<String>, rows: Vec<Vec<String>>, ordered: bool },
    ExpectedSqlPredicate { required: Vec<String>, forbidden: Vec<String> },
    Manual { reviewed: Vec<ReviewedAnswer> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalCase {
    pub id: u32,
    pub question: String,
    /// A query known to satisfy the validator.
    pub reference_sql: Option<String>,
    pub validator: Validator,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suite {
    pub cases: Vec<EvalCase>,
}

impl Suite {
    pub fn ids(&self) -> Vec<u32> {
        self.cases.iter().map(|c| c.id).collect()
    }
}

pub fn load_suite(path: &Path) -> Result<Suite, EvalError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EvalError::Read { path: path.display().to_string(), message: e.to_string() })?;
    parse_suite(&text)
}

pub fn parse_suite(text: &str) -> Result<Suite, EvalError> {
    let raw: RawSuite = toml::from_str(text).map_err(|e| EvalError::MalformedSuite(e.to_string()))?;
    if raw.case.is_empty() {
        return Err(EvalError::MalformedSuite("suite has no cases".into()));
    }
    let mut seen = BTreeSet::new();
    let mut cases = Vec::with_capacity(raw.case.len());
    for case in raw.case {
        let bad = |msg: String| EvalError::MalformedSuite(format!("case {}: {msg}", case.id));
        if !seen.insert(case.id) {
            return Err(bad("duplicate id".into()));
        }
        if case.question.trim().is_empty() {
            return Err(bad("empty question".into()));
        }
        let validator = match case.validator {
            RawValidator::ExpectedRows { columns, rows, ordered } => {
                if columns.is_empty() {
                    return Err(bad("expected_rows needs at least one column".into()));
                }
                if let Some(i) = rows.iter().position(|r| r.len() != columns.len()) {
                    return Err(bad(format!("row {i} has {} cells for {} columns", rows[i].len(), columns.len())));
                }
                let rows = rows.into_iter().map(|r| r.iter().map(normalize_expected).collect()).collect();
                Validator::ExpectedRows { columns, rows, ordered }
            }
            RawValidator::ExpectedSqlPredicate { required, forbidden } => {
                if required.is_empty() && forbidden.is_empty() {
                    return Err(bad("expected_sql_predicate needs required or forbidden fragments".into()));
                }
                Validator::ExpectedSqlPredicate { required, forbidden }
            }
            RawValidator::Manual { reviewed } => {
                if reviewed.is_empty() {
                    return Err(bad("manual validator has no reviewed answers".into()));
                }
                Validator::Manual { reviewed }
            }
        };
        cases.push(EvalCase { id: case.id, question: case.question, reference_sql: case.reference_sql, validator });
    }
    Ok(Suite { cases })
}

/// Renders a real with at most four decimals and no trailing zeros;
/// integral values print without a fraction.
pub fn normalize_real(value: f64) -> String {
    if value.is_finite() && value.fract() == 0.0 && value.abs() < 1e15 {
        return format!("{}", value as i64);
    }
    let text = format!("{value:.4}");
    let text = text.trim_end_matches('0').trim_end_matches('.');
    if text == "-0" {
        "0".into()
    } else {
        text.to_string()
    }
}

fn normalize_expected(cell: &RawCell) -> String {
    match cell {
        RawCell::Integer(i) => i.to_string(),
        RawCell::Float(f) => normalize_real(*f),
        RawCell::Boolean(b) => i64::from(*b).to_string(),
        RawCell::Text(t) => t.trim().to_string(),
    }
}

pub fn normalize_cell(value: &Value) -> String {
    match value {
        Value::Null => "NULL".into(),
        Value::Integer(i) => i.to_string(),
        Value::Real(f) => normalize_real(*f),
        Value::Text(t) => t.trim().to_string(),
        Value::Blob(b) => format!("x'{}'", hex::encode(b)),
    }
}

/// Uppercases and collapses whitespace so fragments match regardless of
/// layout.
fn normalize_sql(sql: &str) -> String {
    sql.trim().trim_end_matches(';').split_whitespace().collect::<Vec<_>>().join(" ").to_uppercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgement {
    pub passed: bool,
    pub detail: String,
}

impl Judgement {
    fn pass(detail: impl Into<String>) -> Self {
        Judgement { passed: true, detail: detail.into() }
    }

    fn fail(detail: impl Into<String>) -> Self {
        Judgement { passed: false, detail: detail.into() }
    }
}

/// Finds, for each expected column, a distinct actual column so that the
/// projected rows equal the expected rows. Column names are ignored.
pub fn match_columns(expected: &[Vec<String>], width: usize, actual: &[Vec<String>], ordered: bool) -> Option<Vec<usize>> {
    if expected.len() != actual.len() {
        return None;
    }
    if actual.is_empty() {
        return Some((0..width).collect());
    }
    let column = |rows: &[Vec<String>], c: usize| -> Vec<String> { rows.iter().map(|r| r[c].clone()).collect() };
    let signature = |mut values: Vec<String>| {
        if !ordered {
            values.sort();
        }
        values
    };
    let actual_width = actual.first().map_or(0, Vec::len);
    let candidates: Vec<Vec<usize>> = (0..width)
        .map(|j| {
            let want = signature(column(expected, j));
            (0..actual_width).filter(|&c| signature(column(actual, c)) == want).collect()
        })
        .collect();

    fn search(
        j: usize,
        candidates: &[Vec<usize>],
        chosen: &mut Vec<usize>,
        accept: &dyn Fn(&[usize]) -> bool,
    ) -> bool {
        if j == candidates.len() {
            return accept(chosen);
        }
        for &c in &candidates[j] {
            if chosen.contains(&c) {
                continue;
            }
            chosen.push(c);
            if search(j + 1, candidates, chosen, accept) {
                return true;
            }
            chosen.pop();
        }
        false
    }

    let accept = |mapping: &[usize]| {
        let mut projected: Vec<Vec<String>> =
            actual.iter().map(|r| mapping.iter().map(|&c| r[c].clone()).collect()).collect();
        if ordered {
            projected == expected
        } else {
            let mut want = expected.to_vec();
            want.sort();
            projected.sort();
            projected == want
        }
    };
    let mut chosen = Vec::with_capacity(width);
    search(0, &candidates, &mut chosen, &accept).then_some(chosen)
}

/// Applies a case's validator to a final query.
pub fn judge(case: &EvalCase, sql: &str, session: &SandboxSession) -> Judgement {
    match &case.validator {
        Validator::ExpectedRows { columns, rows, ordered } => {
            let query = match validate_select(sql, session.config().dialect) {
                Ok(q) => q,
                Err(e) => return Judgement::fail(format!("query rejected: {e}")),
            };
            let result = match session.collect_blocking(&query, MAX_COMPARE_ROWS) {
                Ok(r) => r,
                Err(e) => return Judgement::fail(format!("query failed: {}", e.message)),
            };
            if result.truncated {
                return Judgement::fail(format!("result exceeds {MAX_COMPARE_ROWS} rows"));
            }
            let actual: Vec<Vec<String>> = result.rows.iter().map(|r| r.iter().map(normalize_cell).collect()).collect();
            if actual.len() != rows.len() {
                return Judgement::fail(format!("expected {} rows, got {}", rows.len(), actual.len()));
            }
            if result.columns.len() < columns.len() {
                return Judgement::fail(format!(
                    "expected {} columns, got {}",
                    columns.len(),
                    result.columns.len()
                ));
            }
            match match_columns(rows, columns.len(), &actual, *ordered) {
                Some(mapping) => {
                    let names: Vec<&str> = mapping.iter().map(|&c| result.columns[c].name.as_str()).collect();
                    Judgement::pass(format!("rows match on columns {}", names.join(", ")))
                }
                None => Judgement::fail("result rows differ from the expected rows"),
            }
        }
        Validator::ExpectedSqlPredicate { required, forbidden } => {
            let text = normalize_sql(sql);
            let missing: Vec<&str> =
                required.iter().filter(|f| !text.contains(&normalize_sql(f))).map(String::as_str).collect();
            let present: Vec<&str> =
                forbidden.iter().filter(|f| text.contains(&normalize_sql(f))).map(String::as_str).collect();
            if missing.is_empty() && present.is_empty() {
                Judgement::pass("all required fragments present")
            } else {
                let mut detail = Vec::new();
                if !missing.is_empty() {
                    detail.push(format!("missing {}", missing.join(", ")));
                }
                if !present.is_empty() {
                    detail.push(format!("forbidden {}", present.join(", ")));
                }
                Judgement::fail(detail.join("; "))
            }
        }
        Validator::Manual { reviewed } => {
            let text = normalize_sql(sql);
            match reviewed.iter().find(|r| normalize_sql(&r.sql) == text) {
                Some(r) if r.verdict == ManualVerdict::Pass => Judgement::pass("matches an approved reviewed answer"),
                Some(_) => Judgement::fail("matches a rejected reviewed answer"),
                None => Judgement::fail("no recorded expert verdict for this query"),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseVerdict {
    pub case_id: u32,
    pub passed: bool,
    pub timed_out: bool,
    pub detail: String,
    pub final_sql: Option<String>,
    pub runtime_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl std::fmt::Display for Accuracy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.correct, self.total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub label: String,
    pub verdicts: Vec<CaseVerdict>,
}

impl ModelReport {
    pub fn accuracy(&self) -> Accuracy {
        Accuracy { correct: self.verdicts.iter().filter(|v| v.passed).count(), total: self.verdicts.len() }
    }

    pub fn marks(&self) -> Vec<bool> {
        self.verdicts.iter().map(|v| v.passed).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub case_ids: Vec<u32>,
    pub models: Vec<ModelReport>,
}

/// Markdown table with one row per model and one column per case.
pub fn render_report(report: &EvalReport) -> String {
    let mut out = String::from("| Model |");
    for id in &report.case_ids {
        let _ = write!(out, " {id} |");
    }
    out.push_str(" Accuracy |\n|---|");
    for _ in &report.case_ids {
        out.push_str(":-:|");
    }
    out.push_str(":-:|\n");
    for model in &report.models {
        let _ = write!(out, "| {} |", model.label.replace('|', "\\|"));
        for id in &report.case_ids {
            let mark = match model.verdicts.iter().find(|v| v.case_id == *id) {
                Some(v) if v.passed => PASS_MARK,
                _ => FAIL_MARK,
            };
            let _ = write!(out, " {mark} |");
        }
        let _ = writeln!(out, " {} |", model.accuracy());
    }
    let timeouts: Vec<String> = report
        .models
        .iter()
        .filter_map(|m| {
            let ids: Vec<String> = m.verdicts.iter().filter(|v| v.timed_out).map(|v| v.case_id.to_string()).collect();
            (!ids.is_empty()).then(|| format!("- {}: {}", m.label, ids.join(", ")))
        })
        .collect();
    if !timeouts.is_empty() {
        out.push_str("\nTimed out (counted as incorrect):\n\n");
        out.push_str(&timeouts.join("\n"));
        out.push('\n');
    }
    out
}

pub struct EvalModel {
    pub label: String,
    pub assistant: Assistant,
}

/// Wall-clock allowance for one case: the slowest role timeout times the
/// worst-case number of model calls in a turn.
pub fn case_budget(assistant: &Assistant) -> Duration {
    let limits = assistant.limits();
    let slowest = Role::ALL.iter().map(|r| assistant.gateway().config(*r).request_timeout).max().unwrap_or_default();
    slowest * (limits.n_reasoner_attempts * limits.m_critic_rounds + 2)
}

/// Runs one case as a fresh single-turn conversation.
pub async fn run_case(case: &EvalCase, model: &EvalModel, budget: Duration) -> CaseVerdict {
    let started = Instant::now();
    let mut state = ConversationState::new(format!("eval-{}", case.id));
    let events = EventEmitter::detached();
    let turn = tokio::time::timeout(budget, model.assistant.handle_turn(&mut state, &case.question, &events)).await;
    let verdict = |passed, timed_out, detail: String, final_sql| CaseVerdict {
        case_id: case.id,
        passed,
        timed_out,
        detail,
        final_sql,
        runtime_ms: started.elapsed().as_millis() as u64,
    };
    let report = match turn {
        Err(_) => return verdict(false, true, format!("case budget of {}s exceeded", budget.as_secs()), None),
        Ok(Err(e)) => return verdict(false, false, e.to_string(), None),
        Ok(Ok(report)) => report,
    };
    let Some(sql) = report.final_sql.clone() else {
        let status = report.agent_status.map_or_else(|| format!("{:?}", report.status).to_lowercase(), |s| s.as_str().to_string());
        return verdict(false, report.timed_out, format!("no final query ({status})"), None);
    };
    let session = match model.assistant.sandbox().session() {
        Ok(s) => s,
        Err(e) => return verdict(false, false, format!("sandbox unavailable: {e}"), Some(sql)),
    };
    let owned = case.clone();
    let query = sql.clone();
    let judgement = tokio::task::spawn_blocking(move || judge(&owned, &query, &session))
        .await
        .unwrap_or_else(|e| Judgement::fail(format!("validator crashed: {e}")));
    verdict(judgement.passed, false, judgement.detail, Some(sql))
}

/// Runs every case against every model. Cases of one model run in order.
pub async fn run_suite(suite: &Suite, models: &[EvalModel]) -> EvalReport {
    let mut reports = Vec::with_capacity(models.len());
    for model in models {
        let budget = case_budget(&model.assistant);
        let mut verdicts = Vec::with_capacity(suite.cases.len());
        for case in &suite.cases {
            let v = run_case(case, model, budget).await;
            tracing::info!(model = %model.label, case = case.id, passed = v.passed, "eval case");
            verdicts.push(v);
        }
        reports.push(ModelReport { label: model.label.clone(), verdicts });
    }
    EvalReport { case_ids: suite.ids(), models: reports }
}

/// Query a replayed model answers with when it is meant to miss a case.
pub const REPLAY_MISS_SQL: &str = "SELECT 'unanswered' AS result";

/// A scripted model that answers case `i` with its reference query when
/// `passes[i]` holds, and with [`REPLAY_MISS_SQL`] otherwise.
pub fn replay_backend(suite: &Suite, passes: &[bool]) -> Result<ScriptedBackend, EvalError> {
    let mut dialogue = Vec::new();
    let mut reasoner = Vec::new();
    let mut critic = Vec::new();
    for (case, &pass) in suite.cases.iter().zip(passes) {
        let sql = if pass {
            case.reference_sql.clone().ok_or(EvalError::MissingReference(case.id))?
        } else {
            REPLAY_MISS_SQL.to_string()
        };
        let intent = serde_json::json!({"decision": "proceed", "normalized_intent": case.question, "reason": "answerable"});
        dialogue.push(ScriptedReply::text(format!("```json\n{intent}\n```")));
        dialogue.push(ScriptedReply::text(format!("Answer for question {}.", case.id)));
        reasoner.push(ScriptedReply::text(format!("```sql\n{sql}\n```")));
        critic.push(ScriptedReply::text("```json\n{\"decision\": \"approved\", \"issues\": []}\n```"));
    }
    Ok(ScriptedBackend::new()
        .with_script(Role::Dialogue, dialogue)
        .with_script(Role::Reasoner, reasoner)
        .with_script(Role::Critic, critic))
}
