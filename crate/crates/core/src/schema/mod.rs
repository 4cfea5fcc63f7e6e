//! The two-layer markdown schema document injected into agent prompts.
//!
//! The first layer is the expert-written semantic description
//! ([`load_semantic`]); the second is enumerated from the live catalog
//! ([`introspect`]). [`build_document`] validates one against the other and
//! renders both, semantic layer first.

mod introspect;
mod render;
mod semantic;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use introspect::{introspect, Introspector, IntrospectOptions, SqliteIntrospector, DEFAULT_SAMPLE_LIMIT};
pub use render::{parse_column_bullets, AUTOGENERATED_HEADING, COLUMN_BULLET, DESCRIPTION_LINE, SEMANTIC_HEADING};
pub use semantic::{load_semantic, REQUIRED_SECTIONS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("cannot connect to database: {0}")]
    ConnectionFailed(String),
    #[error("permission denied reading the catalog: {0}")]
    PermissionDenied(String),
    #[error("semantic description is missing the \"{0}\" section")]
    MissingSection(String),
    #[error("semantic description section \"{0}\" is empty")]
    EmptySection(String),
    #[error("semantic description refers to unknown table {0}")]
    UnknownTable(String),
    #[error("semantic description refers to unknown column {table}.{column}")]
    UnknownColumn { table: String, column: String },
    #[error("table {0} appears more than once in the catalog")]
    DuplicateTable(String),
    #[error("table {table} has no columns or a repeated column name")]
    InvalidTable { table: String },
    #[error("line {line}: malformed relationship entry: {reason}")]
    MalformedRelationship { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub name: String,
    pub data_type: String,
    pub description: Option<String>,
    pub sample_values: Vec<String>,
    /// True when samples were withheld because the name matched a sensitive pattern.
    #[serde(default)]
    pub samples_withheld: bool,
    pub is_primary_key: bool,
    pub foreign_key_target: Option<ColumnRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableInfo {
    pub name: String,
    pub columns: Vec<ColumnInfo>,
    pub row_count: Option<u64>,
}

impl TableInfo {
    pub fn column(&self, name: &str) -> Option<&ColumnInfo> {
        self.columns.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cardinality {
    OneToOne,
    OneToMany,
}

impl Cardinality {
    pub fn notation(self) -> &'static str {
        match self {
            Cardinality::OneToOne => "1:1",
            Cardinality::OneToMany => "1:N",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Linking {
    pub source_column: String,
    pub target_column: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Relationship {
    pub source_table: String,
    pub target_table: String,
    pub cardinality: Cardinality,
    /// True only for relationships backed by a real foreign-key constraint.
    pub declared: bool,
    pub linking: Linking,
    pub comment: Option<String>,
}

impl Relationship {
    pub fn source(&self) -> ColumnRef {
        ColumnRef { table: self.source_table.clone(), column: self.linking.source_column.clone() }
    }

    pub fn target(&self) -> ColumnRef {
        ColumnRef { table: self.target_table.clone(), column: self.linking.target_column.clone() }
    }

    fn same_link(&self, other: &Relationship) -> bool {
        self.source().eq_ignore_case(&other.source()) && self.target().eq_ignore_case(&other.target())
    }
}

impl ColumnRef {
    fn eq_ignore_case(&self, other: &ColumnRef) -> bool {
        self.table.eq_ignore_ascii_case(&other.table) && self.column.eq_ignore_ascii_case(&other.column)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticDescription {
    pub introduction: String,
    pub concepts: String,
    pub table_summaries: BTreeMap<String, String>,
    pub high_level_relationships: Vec<Relationship>,
}

/// Immutable once built; share it behind an `Arc`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaDocument {
    pub semantic: SemanticDescription,
    pub tables: Vec<TableInfo>,
    pub relationships: Vec<Relationship>,
    pub rendered: String,
}

impl SchemaDocument {
    pub fn table(&self, name: &str) -> Option<&TableInfo> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn table_names(&self) -> Vec<&str> {
        self.tables.iter().map(|t| t.name.as_str()).collect()
    }

    pub fn column_count(&self) -> usize {
        self.tables.iter().map(|t| t.columns.len()).sum()
    }
}

/// Validates the semantic layer against the catalog and renders the document.
///
/// Tables are sorted by name; columns keep catalog order. Undeclared
/// relationships that duplicate a declared one are dropped.
pub fn build_document(
    semantic: SemanticDescription,
    mut tables: Vec<TableInfo>,
    declared: Vec<Relationship>,
) -> Result<SchemaDocument, SchemaError> {
    let mut seen = BTreeSet::new();
    for t in &tables {
        if !seen.insert(t.name.to_ascii_lowercase()) {
            return Err(SchemaError::DuplicateTable(t.name.clone()));
        }
        let mut cols = BTreeSet::new();
        if t.columns.is_empty() || !t.columns.iter().all(|c| cols.insert(c.name.to_ascii_lowercase())) {
            return Err(SchemaError::InvalidTable { table: t.name.clone() });
        }
    }
    tables.sort_by(|a, b| a.name.cmp(&b.name));

    let find = |name: &str| tables.iter().find(|t| t.name.eq_ignore_ascii_case(name));
    for name in semantic.table_summaries.keys() {
        if find(name).is_none() {
            return Err(SchemaError::UnknownTable(name.clone()));
        }
    }
    let check_ref = |r: ColumnRef| -> Result<(), SchemaError> {
        let table = find(&r.table).ok_or_else(|| SchemaError::UnknownTable(r.table.clone()))?;
        table
            .column(&r.column)
            .map(|_| ())
            .ok_or(SchemaError::UnknownColumn { table: r.table, column: r.column })
    };
    for rel in declared.iter().chain(&semantic.high_level_relationships) {
        check_ref(rel.source())?;
        check_ref(rel.target())?;
    }

    let mut relationships: Vec<Relationship> = declared.into_iter().map(|r| Relationship { declared: true, ..r }).collect();
    for rel in &semantic.high_level_relationships {
        if !relationships.iter().any(|r| r.same_link(rel)) {
            relationships.push(Relationship { declared: false, ..rel.clone() });
        }
    }

    let rendered = render::render(&semantic, &tables, &relationships);
    Ok(SchemaDocument { semantic, tables, relationships, rendered })
}
