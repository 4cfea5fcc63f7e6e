use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rusqlite::types::{Value, ValueRef};
use rusqlite::{Connection, ErrorCode};
use serde::{Deserialize, Serialize};

use super::{classify_failure, validate_select, Dialect, ValidatedSelect, ValidationError};
use crate::db::{render_cell, Database, DatabaseError};

/// Longest rendered cell in a preview.
pub const CELL_DISPLAY_LIMIT: usize = 120;

const PROGRESS_STEPS: i32 = 1_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub data_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultPreview {
    pub columns: Vec<ColumnMeta>,
    pub rows: Vec<Vec<String>>,
    pub truncated: bool,
}

impl ResultPreview {
    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    /// Renders the preview as a markdown table.
    pub fn to_markdown(&self) -> String {
        let escape = |cell: &str| cell.replace('|', "\\|").replace('\n', " ");
        let mut out = String::new();
        let header: Vec<String> = self.columns.iter().map(|c| escape(&c.name)).collect();
        out.push_str(&format!("| {} |\n", header.join(" | ")));
        out.push_str(&format!("|{}\n", "---|".repeat(self.columns.len().max(1))));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| escape(c)).collect();
            out.push_str(&format!("| {} |\n", cells.join(" | ")));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureClass {
    Syntax,
    UnknownIdentifier,
    TypeMismatch,
    Timeout,
    Other,
}

impl FailureClass {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureClass::Syntax => "syntax",
            FailureClass::UnknownIdentifier => "unknown_identifier",
            FailureClass::TypeMismatch => "type_mismatch",
            FailureClass::Timeout => "timeout",
            FailureClass::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionFailure {
    pub failure_class: FailureClass,
    pub message: String,
}

impl ExecutionFailure {
    pub fn from_validation(err: &ValidationError) -> Self {
        let failure_class = match err {
            ValidationError::ParseError { .. } => FailureClass::Syntax,
            _ => FailureClass::Other,
        };
        ExecutionFailure { failure_class, message: err.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ExecutionOutcome {
    Success(ResultPreview),
    Failure(ExecutionFailure),
}

impl ExecutionOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, ExecutionOutcome::Success(_))
    }

    pub fn preview(&self) -> Option<&ResultPreview> {
        match self {
            ExecutionOutcome::Success(preview) => Some(preview),
            ExecutionOutcome::Failure(_) => None,
        }
    }

    pub fn failure(&self) -> Option<&ExecutionFailure> {
        match self {
            ExecutionOutcome::Failure(failure) => Some(failure),
            ExecutionOutcome::Success(_) => None,
        }
    }
}

/// Full result values, used where exact comparison matters.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRows {
    pub columns: Vec<ColumnMeta>,
    pub rows: Vec<Vec<Value>>,
    pub truncated: bool,
}

/// Runs `query` and returns at most `preview_limit` rendered rows.
pub fn execute_readonly(
    conn: &Connection,
    query: &ValidatedSelect,
    preview_limit: usize,
    timeout: Duration,
) -> ExecutionOutcome {
    let limit = preview_limit.max(1);
    let outcome = run(conn, query, limit, timeout, |value| render_cell(value, CELL_DISPLAY_LIMIT));
    match outcome {
        Ok((columns, rows, truncated)) => ExecutionOutcome::Success(ResultPreview { columns, rows, truncated }),
        Err(failure) => ExecutionOutcome::Failure(failure),
    }
}

/// Runs `query` and returns up to `max_rows` rows with their original values.
pub fn collect_rows(
    conn: &Connection,
    query: &ValidatedSelect,
    max_rows: usize,
    timeout: Duration,
) -> Result<QueryRows, ExecutionFailure> {
    let (columns, rows, truncated) = run(conn, query, max_rows.max(1), timeout, owned_value)?;
    Ok(QueryRows { columns, rows, truncated })
}

type RunOutput<T> = (Vec<ColumnMeta>, Vec<Vec<T>>, bool);

fn run<T>(
    conn: &Connection,
    query: &ValidatedSelect,
    limit: usize,
    timeout: Duration,
    convert: impl Fn(ValueRef<'_>) -> T,
) -> Result<RunOutput<T>, ExecutionFailure> {
    let deadline = Instant::now() + timeout;
    let installed = conn.progress_handler(PROGRESS_STEPS, Some(move || Instant::now() >= deadline));
    if let Err(err) = installed {
        return Err(ExecutionFailure { failure_class: FailureClass::Other, message: err.to_string() });
    }
    let result = run_inner(conn, query, limit, convert);
    let _ = conn.progress_handler(0, None::<fn() -> bool>);
    result.map_err(|err| failure_from(query.dialect(), err))
}

fn run_inner<T>(
    conn: &Connection,
    query: &ValidatedSelect,
    limit: usize,
    convert: impl Fn(ValueRef<'_>) -> T,
) -> rusqlite::Result<RunOutput<T>> {
    let mut stmt = conn.prepare(query.sql())?;
    let declared: Vec<(String, Option<String>)> = stmt
        .columns()
        .iter()
        .map(|c| (c.name().to_string(), c.decl_type().map(str::to_string)))
        .collect();
    let width = declared.len();
    let mut observed: Vec<Option<&'static str>> = vec![None; width];
    let mut rows = Vec::new();
    let mut truncated = false;
    let mut cursor = stmt.query([])?;
    while let Some(row) = cursor.next()? {
        if rows.len() == limit {
            truncated = true;
            break;
        }
        let mut cells = Vec::with_capacity(width);
        for (i, seen) in observed.iter_mut().enumerate() {
            let value = row.get_ref(i)?;
            if seen.is_none() {
                *seen = storage_class(value);
            }
            cells.push(convert(value));
        }
        rows.push(cells);
    }
    let columns = declared
        .into_iter()
        .zip(observed)
        .map(|((name, decl), seen)| ColumnMeta {
            name,
            data_type: decl.or_else(|| seen.map(str::to_string)).unwrap_or_default(),
        })
        .collect();
    Ok((columns, rows, truncated))
}

fn owned_value(value: ValueRef<'_>) -> Value {
    match value {
        ValueRef::Null => Value::Null,
        ValueRef::Integer(i) => Value::Integer(i),
        ValueRef::Real(f) => Value::Real(f),
        ValueRef::Text(t) => Value::Text(String::from_utf8_lossy(t).into_owned()),
        ValueRef::Blob(b) => Value::Blob(b.to_vec()),
    }
}

fn storage_class(value: ValueRef<'_>) -> Option<&'static str> {
    match value {
        ValueRef::Null => None,
        ValueRef::Integer(_) => Some("INTEGER"),
        ValueRef::Real(_) => Some("REAL"),
        ValueRef::Text(_) => Some("TEXT"),
        ValueRef::Blob(_) => Some("BLOB"),
    }
}

fn failure_from(dialect: Dialect, err: rusqlite::Error) -> ExecutionFailure {
    if let rusqlite::Error::SqliteFailure(code, _) = &err {
        if code.code == ErrorCode::OperationInterrupted {
            return ExecutionFailure {
                failure_class: FailureClass::Timeout,
                message: "statement timeout exceeded; execution was interrupted".to_string(),
            };
        }
    }
    let message = err.to_string();
    ExecutionFailure { failure_class: classify_failure(dialect, &message, true), message }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandboxConfig {
    pub dialect: Dialect,
    pub preview_limit: usize,
    #[serde(with = "crate::llm::duration_secs")]
    pub statement_timeout: Duration,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig { dialect: Dialect::Sqlite, preview_limit: 10, statement_timeout: Duration::from_secs(30) }
    }
}

/// A database together with the execution limits applied to it.
#[derive(Debug, Clone)]
pub struct Sandbox {
    db: Database,
    config: SandboxConfig,
}

impl Sandbox {
    pub fn new(db: Database, config: SandboxConfig) -> Self {
        Sandbox { db, config }
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    pub fn database(&self) -> &Database {
        &self.db
    }

    pub fn validate(&self, sql: &str) -> Result<ValidatedSelect, ValidationError> {
        validate_select(sql, self.config.dialect)
    }

    /// Opens a dedicated read-only connection.
    pub fn session(&self) -> Result<SandboxSession, DatabaseError> {
        Ok(SandboxSession { conn: Arc::new(Mutex::new(self.db.connect_readonly()?)), config: self.config })
    }
}

#[derive(Clone)]
pub struct SandboxSession {
    conn: Arc<Mutex<Connection>>,
    config: SandboxConfig,
}

impl SandboxSession {
    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    pub fn execute_blocking(&self, query: &ValidatedSelect) -> ExecutionOutcome {
        let conn = self.conn.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
        execute_readonly(&conn, query, self.config.preview_limit, self.config.statement_timeout)
    }

    pub async fn execute(&self, query: &ValidatedSelect) -> ExecutionOutcome {
        let session = self.clone();
        let query = query.clone();
        match tokio::task::spawn_blocking(move || session.execute_blocking(&query)).await {
            Ok(outcome) => outcome,
            Err(err) => ExecutionOutcome::Failure(ExecutionFailure {
                failure_class: FailureClass::Other,
                message: format!("execution task failed: {err}"),
            }),
        }
    }

    pub fn collect_blocking(&self, query: &ValidatedSelect, max_rows: usize) -> Result<QueryRows, ExecutionFailure> {
        let conn = self.conn.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
        collect_rows(&conn, query, max_rows, self.config.statement_timeout)
    }
}
