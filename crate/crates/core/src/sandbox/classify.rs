use super::{Dialect, FailureClass};

const SQLITE_PATTERNS: &[(&str, FailureClass)] = &[
    ("no such column", FailureClass::UnknownIdentifier),
    ("no such table", FailureClass::UnknownIdentifier),
    ("no such function", FailureClass::UnknownIdentifier),
    ("no such collation", FailureClass::UnknownIdentifier),
    ("ambiguous column name", FailureClass::UnknownIdentifier),
    ("syntax error", FailureClass::Syntax),
    ("incomplete input", FailureClass::Syntax),
    ("unrecognized token", FailureClass::Syntax),
    ("datatype mismatch", FailureClass::TypeMismatch),
    ("type mismatch", FailureClass::TypeMismatch),
    ("interrupted", FailureClass::Timeout),
];

const MSSQL_PATTERNS: &[(&str, FailureClass)] = &[
    ("invalid column name", FailureClass::UnknownIdentifier),
    ("invalid object name", FailureClass::UnknownIdentifier),
    ("is not a recognized built-in function", FailureClass::UnknownIdentifier),
    ("could not be bound", FailureClass::UnknownIdentifier),
    ("ambiguous column name", FailureClass::UnknownIdentifier),
    ("incorrect syntax near", FailureClass::Syntax),
    ("unclosed quotation mark", FailureClass::Syntax),
    ("conversion failed", FailureClass::TypeMismatch),
    ("operand type clash", FailureClass::TypeMismatch),
    ("error converting data type", FailureClass::TypeMismatch),
    ("are incompatible", FailureClass::TypeMismatch),
    ("query timeout expired", FailureClass::Timeout),
    ("execution timeout expired", FailureClass::Timeout),
];

/// Maps an engine error message to a failure class.
///
/// `parsed` tells whether the statement already passed the parser; engine
/// syntax complaints about such a statement are classed as `Other`.
pub fn classify_failure(dialect: Dialect, message: &str, parsed: bool) -> FailureClass {
    let lower = message.to_ascii_lowercase();
    let patterns = match dialect {
        Dialect::Sqlite => SQLITE_PATTERNS,
        Dialect::MsSql => MSSQL_PATTERNS,
    };
    let class = patterns
        .iter()
        .find(|(needle, _)| lower.contains(needle))
        .map(|(_, class)| *class)
        .unwrap_or(FailureClass::Other);
    if class == FailureClass::Syntax && parsed {
        FailureClass::Other
    } else {
        class
    }
}
