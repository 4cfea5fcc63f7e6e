//! Generated non-SELECT statements for exercising the validator.

const TABLES: &[(&str, &str)] = &[
    ("T_A", "idA"),
    ("T_B", "idB"),
    ("T_C", "idC"),
    ("T_D", "ID"),
    ("T_E", "idE"),
    ("T_F", "idF"),
    ("T_G", "idG"),
];

const TABLE_TEMPLATES: &[&str] = &[
    "INSERT INTO {t} ({c}) VALUES (999999)",
    "INSERT INTO {t} SELECT * FROM {t}",
    "INSERT OR REPLACE INTO {t} ({c}) VALUES (1)",
    "REPLACE INTO {t} ({c}) VALUES (1)",
    "INSERT INTO {t} ({c}) VALUES (1) ON CONFLICT DO NOTHING",
    "UPDATE {t} SET {c} = {c} + 1",
    "UPDATE {t} SET {c} = 0 WHERE {c} IN (SELECT {c} FROM {t})",
    "DELETE FROM {t}",
    "DELETE FROM {t} WHERE {c} > 0",
    "DROP TABLE {t}",
    "DROP TABLE IF EXISTS {t}",
    "DROP VIEW IF EXISTS v_{t}",
    "DROP INDEX IF EXISTS ix_{t}",
    "CREATE TABLE copy_{t} AS SELECT * FROM {t}",
    "CREATE TEMP TABLE tmp_{t} AS SELECT {c} FROM {t}",
    "CREATE VIEW v_{t} AS SELECT * FROM {t}",
    "CREATE INDEX ix_{t} ON {t} ({c})",
    "CREATE UNIQUE INDEX ux_{t} ON {t} ({c})",
    "CREATE TRIGGER tr_{t} AFTER INSERT ON {t} BEGIN DELETE FROM {t}; END",
    "ALTER TABLE {t} ADD COLUMN extra TEXT",
    "ALTER TABLE {t} RENAME TO renamed_{t}",
    "ALTER TABLE {t} RENAME COLUMN {c} TO {c}_old",
    "ALTER TABLE {t} DROP COLUMN {c}",
    "TRUNCATE TABLE {t}",
    "WITH src AS (SELECT * FROM {t}) INSERT INTO {t} SELECT * FROM src",
    "WITH doomed AS (SELECT {c} FROM {t}) DELETE FROM {t} WHERE {c} IN (SELECT {c} FROM doomed)",
    "WITH s AS (SELECT 1) UPDATE {t} SET {c} = 1",
    "SELECT * INTO backup_{t} FROM {t}",
    "MERGE INTO {t} USING {t} AS s ON {t}.{c} = s.{c} WHEN MATCHED THEN DELETE",
    "GRANT SELECT ON {t} TO PUBLIC",
    "REVOKE SELECT ON {t} FROM PUBLIC",
    "LOCK TABLE {t} IN EXCLUSIVE MODE",
    "ANALYZE {t}",
    "REINDEX {t}",
    "SELECT * FROM {t} FOR UPDATE",
    "EXPLAIN SELECT * FROM {t}",
    "SELECT writefile('/tmp/{t}.out', {c}) FROM {t}",
];

const GLOBAL_TEMPLATES: &[&str] = &[
    "ATTACH DATABASE '/tmp/other.db' AS other",
    "DETACH DATABASE other",
    "PRAGMA writable_schema = 1",
    "PRAGMA query_only = 0",
    "PRAGMA journal_mode = DELETE",
    "VACUUM",
    "VACUUM INTO '/tmp/copy.db'",
    "BEGIN TRANSACTION",
    "COMMIT",
    "ROLLBACK",
    "SAVEPOINT sp1",
    "RELEASE SAVEPOINT sp1",
    "SELECT load_extension('/tmp/evil.so')",
    "SELECT readfile('/etc/passwd')",
    "EXEC sp_configure 'show advanced options', 1",
    "EXECUTE xp_cmdshell 'dir'",
    "CALL refresh_all()",
    "SET ROWCOUNT 0",
    "DECLARE @n INT",
    "USE master",
    "VALUES (1, 2, 3)",
    "SHOW TABLES",
    "CREATE DATABASE scratch",
    "DROP DATABASE scratch",
];

const WRAPPERS: &[&str] = &[
    "{s}",
    "{s};",
    "SELECT 1; {s}",
    "{s}; SELECT 1",
    "SELECT * FROM T_A;\n{s};",
    "/* report */ {s}",
    "-- SELECT count(*) FROM T_A\n{s}",
    "SELECT 1; -- trailing note\n{s}",
    "\n\t  {s}  \n",
    "SELECT 1 /* ; */; {s}",
];

/// Deterministic list of inputs the validator must reject.
pub fn non_select_statements() -> Vec<String> {
    let mut bases = Vec::new();
    for (table, column) in TABLES {
        for template in TABLE_TEMPLATES {
            bases.push(template.replace("{t}", table).replace("{c}", column));
        }
    }
    bases.extend(GLOBAL_TEMPLATES.iter().map(|s| s.to_string()));

    let mut out = Vec::with_capacity(bases.len() * (WRAPPERS.len() + 1));
    for (i, base) in bases.iter().enumerate() {
        for wrapper in WRAPPERS {
            out.push(wrapper.replace("{s}", base));
        }
        let cased = if i % 2 == 0 { base.to_ascii_lowercase() } else { alternate_case(base) };
        out.push(cased);
    }
    out
}

fn alternate_case(text: &str) -> String {
    text.chars()
        .enumerate()
        .map(|(i, c)| if i % 2 == 0 { c.to_ascii_lowercase() } else { c.to_ascii_uppercase() })
        .collect()
}
