//! Validation and read-only execution of generated SQL.
//!
//! A query reaches the database only as a [`ValidatedSelect`], which can be
//! obtained solely through [`validate_select`].

mod classify;
pub mod corpus;
mod exec;

use std::collections::BTreeSet;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};
use sqlparser::ast::{Expr, ObjectName, Query, Select, SelectItem, SetExpr, Statement, Visit, Visitor};
use sqlparser::dialect::{Dialect as ParserDialect, MsSqlDialect, SQLiteDialect};
use sqlparser::parser::{Parser, ParserError};

pub use classify::classify_failure;
pub use exec::{
    collect_rows, execute_readonly, ColumnMeta, ExecutionFailure, ExecutionOutcome, FailureClass,
    QueryRows, ResultPreview, Sandbox, SandboxConfig, SandboxSession, CELL_DISPLAY_LIMIT,
};

/// SQL dialect of the target engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    #[default]
    Sqlite,
    MsSql,
}

impl Dialect {
    fn parser(self) -> Box<dyn ParserDialect> {
        match self {
            Dialect::Sqlite => Box::new(SQLiteDialect {}),
            Dialect::MsSql => Box::new(MsSqlDialect {}),
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "sqlite" => Some(Dialect::Sqlite),
            "mssql" | "sqlserver" | "tsql" => Some(Dialect::MsSql),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ValidationError {
    #[error("only SELECT statements are allowed, found {kind}")]
    NotSelect { kind: String },
    #[error("exactly one statement is allowed, found {count}")]
    MultipleStatements { count: usize },
    #[error("parse error at line {line}, column {column}: {detail}")]
    ParseError { line: u64, column: u64, detail: String },
}

/// A single SELECT statement that passed validation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidatedSelect {
    sql: String,
    dialect: Dialect,
    tables: BTreeSet<String>,
    columns: Vec<String>,
}

impl ValidatedSelect {
    /// The query text exactly as submitted.
    pub fn sql(&self) -> &str {
        &self.sql
    }

    pub fn dialect(&self) -> Dialect {
        self.dialect
    }

    /// Base tables referenced anywhere in the query, excluding CTE names.
    pub fn tables(&self) -> &BTreeSet<String> {
        &self.tables
    }

    /// Output columns as written in the outermost projection.
    pub fn output_columns(&self) -> &[String] {
        &self.columns
    }
}

const FORBIDDEN_FUNCTIONS: &[&str] = &[
    "load_extension",
    "writefile",
    "readfile",
    "edit",
    "fts3_tokenizer",
    "xp_cmdshell",
    "openrowset",
    "opendatasource",
    "openquery",
];

pub fn validate_select(sql: &str, dialect: Dialect) -> Result<ValidatedSelect, ValidationError> {
    let parser_dialect = dialect.parser();
    let statements = Parser::parse_sql(parser_dialect.as_ref(), sql).map_err(parse_error)?;
    let statement = match statements.as_slice() {
        [] => {
            return Err(ValidationError::ParseError {
                line: 1,
                column: 1,
                detail: "no statement found".to_string(),
            })
        }
        [one] => one,
        many => return Err(ValidationError::MultipleStatements { count: many.len() }),
    };
    let query = match statement {
        Statement::Query(query) => query,
        other => return Err(ValidationError::NotSelect { kind: statement_kind(other) }),
    };
    let Some(select) = leftmost_select(&query.body) else {
        return Err(ValidationError::NotSelect { kind: set_expr_kind(&query.body) });
    };

    let mut check = ReadOnlyCheck::default();
    if let ControlFlow::Break(kind) = statement.visit(&mut check) {
        return Err(ValidationError::NotSelect { kind });
    }
    let tables = check
        .relations
        .into_iter()
        .filter(|name| !check.cte_names.contains(&name.to_ascii_lowercase()))
        .collect();
    let columns = select.projection.iter().map(projection_name).collect();

    Ok(ValidatedSelect { sql: sql.to_string(), dialect, tables, columns })
}

fn parse_error(err: ParserError) -> ValidationError {
    let raw = match err {
        ParserError::TokenizerError(msg) | ParserError::ParserError(msg) => msg,
        ParserError::RecursionLimitExceeded => "nesting too deep".to_string(),
    };
    let (detail, line, column) = split_location(&raw);
    ValidationError::ParseError { line, column, detail }
}

fn split_location(message: &str) -> (String, u64, u64) {
    let Some(at) = message.rfind(" at Line: ") else {
        return (message.to_string(), 1, 1);
    };
    let location = &message[at + " at Line: ".len()..];
    let mut parts = location.splitn(2, ", Column: ");
    let line = parts.next().and_then(|s| s.trim().parse().ok());
    let column = parts.next().and_then(|s| s.trim().parse().ok());
    match (line, column) {
        (Some(line), Some(column)) => (message[..at].to_string(), line, column),
        _ => (message.to_string(), 1, 1),
    }
}

fn statement_kind(statement: &Statement) -> String {
    let text = statement.to_string();
    let mut words = text.split_whitespace().take(2).map(str::to_ascii_uppercase);
    let first = words.next().unwrap_or_else(|| "UNKNOWN".to_string());
    match first.as_str() {
        "CREATE" | "DROP" | "ALTER" | "TRUNCATE" => match words.next() {
            Some(second) => format!("{first} {second}"),
            None => first,
        },
        _ => first,
    }
}

fn set_expr_kind(body: &SetExpr) -> String {
    match body {
        SetExpr::Select(_) => "SELECT".into(),
        SetExpr::Query(q) => set_expr_kind(&q.body),
        SetExpr::SetOperation { left, .. } => set_expr_kind(left),
        SetExpr::Values(_) => "VALUES".into(),
        SetExpr::Insert(s) | SetExpr::Update(s) | SetExpr::Delete(s) | SetExpr::Merge(s) => statement_kind(s),
        SetExpr::Table(_) => "TABLE".into(),
    }
}

fn leftmost_select(body: &SetExpr) -> Option<&Select> {
    match body {
        SetExpr::Select(select) => Some(select),
        SetExpr::Query(query) => leftmost_select(&query.body),
        SetExpr::SetOperation { left, .. } => leftmost_select(left),
        _ => None,
    }
}

fn projection_name(item: &SelectItem) -> String {
    match item {
        SelectItem::UnnamedExpr(Expr::Identifier(ident)) => ident.value.clone(),
        SelectItem::UnnamedExpr(Expr::CompoundIdentifier(idents)) => {
            idents.last().map(|i| i.value.clone()).unwrap_or_default()
        }
        SelectItem::UnnamedExpr(expr) => expr.to_string(),
        SelectItem::ExprWithAlias { alias, .. } => alias.value.clone(),
        other => other.to_string(),
    }
}

#[derive(Default)]
struct ReadOnlyCheck {
    seen_root: bool,
    relations: BTreeSet<String>,
    cte_names: BTreeSet<String>,
}

impl Visitor for ReadOnlyCheck {
    type Break = String;

    fn pre_visit_statement(&mut self, statement: &Statement) -> ControlFlow<String> {
        if self.seen_root {
            return ControlFlow::Break(statement_kind(statement));
        }
        self.seen_root = true;
        ControlFlow::Continue(())
    }

    fn pre_visit_query(&mut self, query: &Query) -> ControlFlow<String> {
        if !query.locks.is_empty() {
            return ControlFlow::Break("SELECT ... FOR UPDATE".into());
        }
        if let Some(with) = &query.with {
            for cte in &with.cte_tables {
                self.cte_names.insert(cte.alias.name.value.to_ascii_lowercase());
            }
        }
        match query.body.as_ref() {
            SetExpr::Insert(s) | SetExpr::Update(s) | SetExpr::Delete(s) | SetExpr::Merge(s) => {
                ControlFlow::Break(statement_kind(s))
            }
            _ => ControlFlow::Continue(()),
        }
    }

    fn pre_visit_select(&mut self, select: &Select) -> ControlFlow<String> {
        if select.into.is_some() {
            return ControlFlow::Break("SELECT INTO".into());
        }
        ControlFlow::Continue(())
    }

    fn pre_visit_relation(&mut self, relation: &ObjectName) -> ControlFlow<String> {
        let name = relation
            .0
            .last()
            .map(|part| part.to_string())
            .unwrap_or_default()
            .trim_matches(|c| c == '"' || c == '`' || c == '[' || c == ']')
            .to_string();
        self.relations.insert(name);
        ControlFlow::Continue(())
    }

    fn pre_visit_expr(&mut self, expr: &Expr) -> ControlFlow<String> {
        if let Expr::Function(function) = expr {
            let name = function.name.to_string().to_ascii_lowercase();
            let base = name.rsplit('.').next().unwrap_or(&name);
            if FORBIDDEN_FUNCTIONS.contains(&base) {
                return ControlFlow::Break(format!("call to {base}"));
            }
        }
        ControlFlow::Continue(())
    }
}
