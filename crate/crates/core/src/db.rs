//! Handle to the SQLite database the agents query.
//!
//! Connections handed to generated SQL are opened read-only, with
//! `query_only` set and an authorizer that refuses anything but reads.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rusqlite::hooks::{AuthAction, AuthContext, Authorization};
use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatabaseError {
    #[error("cannot open database {path}: {message}")]
    ConnectionFailed { path: String, message: String },
    #[error("seeding database failed: {0}")]
    Seed(String),
    #[error("database query failed: {0}")]
    Query(String),
}

/// Functions generated SQL may never call.
const FORBIDDEN_FUNCTIONS: &[&str] = &["load_extension", "writefile", "readfile", "edit", "fts3_tokenizer"];

/// Cheap-to-clone handle. Each caller opens its own connection.
#[derive(Debug, Clone)]
pub struct Database {
    path: PathBuf,
    // Keeps a materialized temporary copy alive for as long as any handle exists.
    _temp: Option<Arc<tempfile::TempDir>>,
}

impl Database {
    /// Opens an existing database file.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, DatabaseError> {
        let path = path.as_ref().to_path_buf();
        if !path.is_file() {
            return Err(DatabaseError::ConnectionFailed {
                path: path.display().to_string(),
                message: "no such file".into(),
            });
        }
        let db = Database { path, _temp: None };
        db.connect_readonly()?;
        Ok(db)
    }

    /// Creates `path` from a seed script. Fails if the file already exists.
    pub fn materialize(seed_sql: &str, path: impl AsRef<Path>) -> Result<Self, DatabaseError> {
        let path = path.as_ref().to_path_buf();
        if path.exists() {
            return Err(DatabaseError::Seed(format!("{} already exists", path.display())));
        }
        let conn = Connection::open(&path).map_err(|e| DatabaseError::ConnectionFailed {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        conn.execute_batch(seed_sql).map_err(|e| DatabaseError::Seed(e.to_string()))?;
        drop(conn);
        Ok(Database { path, _temp: None })
    }

    /// Opens `path`, seeding it first when it does not exist yet.
    pub fn open_or_seed(seed_sql: &str, path: impl AsRef<Path>) -> Result<Self, DatabaseError> {
        if path.as_ref().exists() {
            Self::open(path)
        } else {
            if let Some(parent) = path.as_ref().parent() {
                std::fs::create_dir_all(parent).map_err(|e| DatabaseError::Seed(e.to_string()))?;
            }
            Self::materialize(seed_sql, path)
        }
    }

    /// Seeds a private temporary copy, removed when the last handle drops.
    pub fn temporary(seed_sql: &str) -> Result<Self, DatabaseError> {
        let dir = tempfile::tempdir().map_err(|e| DatabaseError::Seed(e.to_string()))?;
        let mut db = Self::materialize(seed_sql, dir.path().join("erp.sqlite"))?;
        db._temp = Some(Arc::new(dir));
        Ok(db)
    }

    /// Temporary copy of the bundled ERP fixture.
    pub fn fixture() -> Result<Self, DatabaseError> {
        Self::temporary(crate::fixture::SEED)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn open_flags() -> OpenFlags {
        OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX | OpenFlags::SQLITE_OPEN_URI
    }

    /// Read-only connection for catalog introspection.
    pub fn connect_catalog(&self) -> Result<Connection, DatabaseError> {
        let conn = Connection::open_with_flags(&self.path, Self::open_flags()).map_err(|e| {
            DatabaseError::ConnectionFailed { path: self.path.display().to_string(), message: e.to_string() }
        })?;
        conn.pragma_update(None, "query_only", true)
            .map_err(|e| DatabaseError::Query(e.to_string()))?;
        Ok(conn)
    }

    /// Read-only connection for generated SQL: catalog connection plus an
    /// authorizer that only admits reads.
    pub fn connect_readonly(&self) -> Result<Connection, DatabaseError> {
        let conn = self.connect_catalog()?;
        conn.authorizer(Some(read_only_authorizer))
            .map_err(|e| DatabaseError::Query(e.to_string()))?;
        Ok(conn)
    }

    /// SHA-256 of every row of every base table, keyed by table name.
    pub fn table_checksums(&self) -> Result<BTreeMap<String, String>, DatabaseError> {
        let conn = self.connect_catalog()?;
        let q = |e: rusqlite::Error| DatabaseError::Query(e.to_string());
        let mut stmt = conn
            .prepare("SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY name")
            .map_err(q)?;
        let tables: Vec<String> = stmt.query_map([], |r| r.get(0)).map_err(q)?.collect::<Result<_, _>>().map_err(q)?;
        let mut out = BTreeMap::new();
        for table in tables {
            let mut hasher = Sha256::new();
            let mut stmt = conn.prepare(&format!("SELECT * FROM \"{table}\" ORDER BY rowid")).map_err(q)?;
            let n = stmt.column_count();
            let mut rows = stmt.query([]).map_err(q)?;
            while let Some(row) = rows.next().map_err(q)? {
                for i in 0..n {
                    let v = row.get_ref(i).map_err(q)?;
                    hasher.update(format!("{v:?}").as_bytes());
                    hasher.update([0x1f]);
                }
                hasher.update([0x1e]);
            }
            out.insert(table, hex::encode(hasher.finalize()));
        }
        Ok(out)
    }
}

/// Renders a value as plain text for prompts and previews, capped at
/// `max_chars` characters (an ellipsis marks the cut).
pub fn render_cell(value: ValueRef<'_>, max_chars: usize) -> String {
    let text = match value {
        ValueRef::Null => return "NULL".to_string(),
        ValueRef::Integer(i) => i.to_string(),
        ValueRef::Real(f) => f.to_string(),
        ValueRef::Text(t) => String::from_utf8_lossy(t).into_owned(),
        ValueRef::Blob(b) => return format!("<blob {} bytes>", b.len()),
    };
    cap_chars(text, max_chars)
}

/// Renders a value as a SQL literal (text quoted), capped like [`render_cell`].
pub fn render_literal(value: ValueRef<'_>, max_chars: usize) -> String {
    match value {
        ValueRef::Text(t) => {
            let inner = cap_chars(String::from_utf8_lossy(t).replace('\'', "''"), max_chars);
            format!("'{inner}'")
        }
        other => render_cell(other, max_chars),
    }
}

fn cap_chars(text: String, max_chars: usize) -> String {
    if text.chars().count() <= max_chars {
        return text;
    }
    let mut out: String = text.chars().take(max_chars.saturating_sub(1)).collect();
    out.push('…');
    out
}

fn read_only_authorizer(ctx: AuthContext<'_>) -> Authorization {
    match ctx.action {
        AuthAction::Select | AuthAction::Read { .. } | AuthAction::Recursive => Authorization::Allow,
        AuthAction::Function { function_name } => {
            if FORBIDDEN_FUNCTIONS.iter().any(|f| f.eq_ignore_ascii_case(function_name)) {
                Authorization::Deny
            } else {
                Authorization::Allow
            }
        }
        _ => Authorization::Deny,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn readonly_connection_refuses_writes() {
        let db = Database::fixture().unwrap();
        let before = db.table_checksums().unwrap();
        let conn = db.connect_readonly().unwrap();
        for sql in [
            "DELETE FROM T_A",
            "UPDATE T_B SET Quantity = 0",
            "CREATE TABLE x (a)",
            "DROP TABLE T_C",
            "PRAGMA query_only = OFF",
            "ATTACH DATABASE ':memory:' AS other",
        ] {
            assert!(conn.execute_batch(sql).is_err(), "{sql} should fail");
        }
        let n: i64 = conn.query_row("SELECT COUNT(*) FROM T_A", [], |r| r.get(0)).unwrap();
        assert_eq!(n, 40);
        assert_eq!(db.table_checksums().unwrap(), before);
    }

    #[test]
    fn cells_render_and_cap() {
        assert_eq!(render_cell(ValueRef::Null, 10), "NULL");
        assert_eq!(render_cell(ValueRef::Integer(42), 10), "42");
        assert_eq!(render_cell(ValueRef::Real(2.5), 10), "2.5");
        assert_eq!(render_cell(ValueRef::Text(b"abcdef"), 4), "abc…");
        assert_eq!(render_cell(ValueRef::Text(b"abcd"), 4), "abcd");
        assert_eq!(render_literal(ValueRef::Text(b"O'Neil"), 20), "'O''Neil'");
        assert_eq!(render_literal(ValueRef::Integer(7), 20), "7");
    }

    #[test]
    fn open_missing_file_fails() {
        assert!(matches!(
            Database::open("/nonexistent/erp.sqlite"),
            Err(DatabaseError::ConnectionFailed { .. })
        ));
    }

    #[test]
    fn open_or_seed_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db").join("erp.sqlite");
        let a = Database::open_or_seed("CREATE TABLE t (x); INSERT INTO t VALUES (1);", &path).unwrap();
        let b = Database::open_or_seed("garbage that would fail", &path).unwrap();
        assert_eq!(a.table_checksums().unwrap(), b.table_checksums().unwrap());
    }
}
