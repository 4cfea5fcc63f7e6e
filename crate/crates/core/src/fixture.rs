//! The bundled synthetic ERP: seed script, semantic description and
//! evaluation suite, compiled into the library.

use crate::db::{Database, DatabaseError};
use crate::schema::{self, IntrospectOptions, SchemaDocument, SchemaError};

/// Seven tables, 321 columns (119 of them commented), one declared foreign key.
pub const SEED: &str = include_str!("../../../fixtures/erp_seed.sql");
pub const SEMANTIC: &str = include_str!("../../../fixtures/erp_semantic.md");
pub const EVAL_SUITE: &str = include_str!("../../../fixtures/eval_suite.toml");

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error(transparent)]
    Database(#[from] DatabaseError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// Private temporary copy of the fixture database.
pub fn database() -> Result<Database, DatabaseError> {
    Database::fixture()
}

/// Builds the schema document of `db` with the bundled semantic layer.
pub fn schema_document(db: &Database, options: &IntrospectOptions) -> Result<SchemaDocument, FixtureError> {
    document_from(db, SEMANTIC, options)
}

/// Introspects `db` and combines it with the given semantic description.
pub fn document_from(db: &Database, semantic: &str, options: &IntrospectOptions) -> Result<SchemaDocument, FixtureError> {
    let conn = db.connect_catalog()?;
    let (tables, declared) = schema::introspect(&conn, options)?;
    let semantic = schema::load_semantic(semantic)?;
    Ok(schema::build_document(semantic, tables, declared)?)
}
