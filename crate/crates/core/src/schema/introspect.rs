use std::collections::{HashMap, HashSet};

use regex::Regex;
use rusqlite::{Connection, ErrorCode};

use super::{Cardinality, ColumnInfo, ColumnRef, Linking, Relationship, SchemaError, TableInfo};
use crate::db::render_literal;

/// Distinct sample values rendered per column.
pub const DEFAULT_SAMPLE_LIMIT: usize = 3;
const SAMPLE_MAX_CHARS: usize = 40;

#[derive(Debug, Clone)]
pub struct IntrospectOptions {
    pub sample_limit: usize,
    /// Columns whose name matches any pattern get no sample values.
    pub sensitive_columns: Vec<Regex>,
    pub row_counts: bool,
}

impl Default for IntrospectOptions {
    fn default() -> Self {
        IntrospectOptions { sample_limit: DEFAULT_SAMPLE_LIMIT, sensitive_columns: Vec::new(), row_counts: true }
    }
}

impl IntrospectOptions {
    pub fn with_sensitive_patterns<I, S>(mut self, patterns: I) -> Result<Self, regex::Error>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.sensitive_columns = patterns.into_iter().map(|p| Regex::new(p.as_ref())).collect::<Result<_, _>>()?;
        Ok(self)
    }

    fn is_sensitive(&self, column: &str) -> bool {
        self.sensitive_columns.iter().any(|re| re.is_match(column))
    }
}

/// Dialect adapter for catalog introspection.
pub trait Introspector {
    /// One [`TableInfo`] per base table, plus the relationships backed by
    /// declared foreign keys.
    fn introspect(&self, options: &IntrospectOptions) -> Result<(Vec<TableInfo>, Vec<Relationship>), SchemaError>;
}

pub struct SqliteIntrospector<'c> {
    conn: &'c Connection,
}

impl<'c> SqliteIntrospector<'c> {
    pub fn new(conn: &'c Connection) -> Self {
        SqliteIntrospector { conn }
    }
}

/// Introspects a SQLite connection with [`SqliteIntrospector`].
pub fn introspect(conn: &Connection, options: &IntrospectOptions) -> Result<(Vec<TableInfo>, Vec<Relationship>), SchemaError> {
    SqliteIntrospector::new(conn).introspect(options)
}

fn map_err(e: rusqlite::Error) -> SchemaError {
    match e.sqlite_error_code() {
        Some(ErrorCode::AuthorizationForStatementDenied | ErrorCode::PermissionDenied) => {
            SchemaError::PermissionDenied(e.to_string())
        }
        _ => SchemaError::ConnectionFailed(e.to_string()),
    }
}

fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

/// Column comments written as `name TYPE, -- text` in the CREATE statement.
fn column_comments(create_sql: &str) -> HashMap<String, String> {
    let mut out = HashMap::new();
    for line in create_sql.lines() {
        let Some((def, comment)) = line.split_once("--") else { continue };
        let comment = comment.trim();
        if comment.is_empty() {
            continue;
        }
        let def = def.trim().trim_start_matches('(').trim_start();
        let name: String = def
            .split_whitespace()
            .next()
            .unwrap_or_default()
            .trim_matches(|c| matches!(c, '"' | '`' | '[' | ']' | ','))
            .to_string();
        if !name.is_empty() {
            out.insert(name.to_ascii_lowercase(), comment.to_string());
        }
    }
    out
}

impl Introspector for SqliteIntrospector<'_> {
    fn introspect(&self, options: &IntrospectOptions) -> Result<(Vec<TableInfo>, Vec<Relationship>), SchemaError> {
        let conn = self.conn;
        let mut stmt = conn
            .prepare(
                "SELECT name, COALESCE(sql, '') FROM sqlite_master \
                 WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY name",
            )
            .map_err(map_err)?;
        let tables: Vec<(String, String)> = stmt
            .query_map([], |r| Ok((r.get(0)?, r.get(1)?)))
            .map_err(map_err)?
            .collect::<Result<_, _>>()
            .map_err(map_err)?;

        let mut infos = Vec::with_capacity(tables.len());
        let mut relationships = Vec::new();
        for (table, create_sql) in &tables {
            let comments = column_comments(create_sql);
            let qt = quote_ident(table);

            let mut cols_stmt = conn.prepare(&format!("PRAGMA table_info({qt})")).map_err(map_err)?;
            let raw: Vec<(String, String, bool)> = cols_stmt
                .query_map([], |r| Ok((r.get::<_, String>(1)?, r.get::<_, String>(2)?, r.get::<_, i64>(5)? > 0)))
                .map_err(map_err)?
                .collect::<Result<_, _>>()
                .map_err(map_err)?;

            let mut fk_stmt = conn.prepare(&format!("PRAGMA foreign_key_list({qt})")).map_err(map_err)?;
            // (referenced table, local column, referenced column)
            let fks: Vec<(String, String, String)> = fk_stmt
                .query_map([], |r| Ok((r.get(2)?, r.get(3)?, r.get(4)?)))
                .map_err(map_err)?
                .collect::<Result<_, _>>()
                .map_err(map_err)?;

            let unique = unique_columns(conn, table)?;
            let single_pk = raw.iter().filter(|c| c.2).count() == 1;

            let mut columns = Vec::with_capacity(raw.len());
            for (name, data_type, pk) in raw {
                let fk = fks.iter().find(|f| f.1.eq_ignore_ascii_case(&name));
                let withheld = options.is_sensitive(&name);
                let sample_values = if withheld || options.sample_limit == 0 {
                    Vec::new()
                } else {
                    samples(conn, &qt, &name, options.sample_limit)?
                };
                columns.push(ColumnInfo {
                    description: comments.get(&name.to_ascii_lowercase()).cloned(),
                    sample_values,
                    samples_withheld: withheld,
                    is_primary_key: pk,
                    foreign_key_target: fk.map(|f| ColumnRef { table: f.0.clone(), column: f.2.clone() }),
                    data_type,
                    name,
                });
            }

            for (parent, local, referenced) in &fks {
                let local_unique = unique.contains(&local.to_ascii_lowercase())
                    || (single_pk && columns.iter().any(|c| c.is_primary_key && c.name.eq_ignore_ascii_case(local)));
                relationships.push(Relationship {
                    source_table: parent.clone(),
                    target_table: table.clone(),
                    cardinality: if local_unique { Cardinality::OneToOne } else { Cardinality::OneToMany },
                    declared: true,
                    linking: Linking { source_column: referenced.clone(), target_column: local.clone() },
                    comment: None,
                });
            }

            let row_count = if options.row_counts {
                let n: i64 = conn
                    .query_row(&format!("SELECT COUNT(*) FROM {qt}"), [], |r| r.get(0))
                    .map_err(map_err)?;
                Some(n as u64)
            } else {
                None
            };
            infos.push(TableInfo { name: table.clone(), columns, row_count });
        }
        Ok((infos, relationships))
    }
}

fn samples(conn: &Connection, qt: &str, column: &str, limit: usize) -> Result<Vec<String>, SchemaError> {
    let qc = quote_ident(column);
    let mut stmt = conn
        .prepare(&format!("SELECT DISTINCT {qc} FROM {qt} WHERE {qc} IS NOT NULL ORDER BY 1 LIMIT ?1"))
        .map_err(map_err)?;
    let mut rows = stmt.query([limit as i64]).map_err(map_err)?;
    let mut out = Vec::new();
    while let Some(row) = rows.next().map_err(map_err)? {
        out.push(render_literal(row.get_ref(0).map_err(map_err)?, SAMPLE_MAX_CHARS));
    }
    Ok(out)
}

/// Columns covered by a single-column unique index.
fn unique_columns(conn: &Connection, table: &str) -> Result<HashSet<String>, SchemaError> {
    let mut out = HashSet::new();
    let mut stmt = conn.prepare(&format!("PRAGMA index_list({})", quote_ident(table))).map_err(map_err)?;
    let indexes: Vec<(String, bool)> = stmt
        .query_map([], |r| Ok((r.get(1)?, r.get::<_, i64>(2)? != 0)))
        .map_err(map_err)?
        .collect::<Result<_, _>>()
        .map_err(map_err)?;
    for (index, is_unique) in indexes.into_iter().filter(|i| i.1) {
        let mut info = conn.prepare(&format!("PRAGMA index_info({})", quote_ident(&index))).map_err(map_err)?;
        let cols: Vec<String> = info
            .query_map([], |r| r.get(2))
            .map_err(map_err)?
            .collect::<Result<_, _>>()
            .map_err(map_err)?;
        if is_unique && cols.len() == 1 {
            out.insert(cols[0].to_ascii_lowercase());
        }
    }
    Ok(out)
}
