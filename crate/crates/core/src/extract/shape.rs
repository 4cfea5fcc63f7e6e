use serde_json::Value;

use super::ExtractionError;

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    RawText,
    Fields(Vec<FieldSpec>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    pub required: bool,
}

impl FieldSpec {
    pub fn required(name: &str, kind: FieldKind) -> Self {
        FieldSpec { name: name.into(), kind, required: true }
    }

    pub fn optional(name: &str, kind: FieldKind) -> Self {
        FieldSpec { name: name.into(), kind, required: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldKind {
    Text,
    Integer,
    Boolean,
    Enum(Vec<String>),
    List(Vec<FieldSpec>),
}

impl FieldKind {
    pub fn one_of(values: &[&str]) -> Self {
        FieldKind::Enum(values.iter().map(|v| v.to_string()).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Extracted {
    Text(String),
    Record(Value),
}

impl Extracted {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            Extracted::Text(t) => Some(t),
            Extracted::Record(_) => None,
        }
    }

    pub fn into_record(self) -> Option<Value> {
        match self {
            Extracted::Record(v) => Some(v),
            Extracted::Text(_) => None,
        }
    }
}

/// Parses block content according to `shape`.
pub fn parse_into(content: &str, shape: &Shape) -> Result<Extracted, ExtractionError> {
    match shape {
        Shape::RawText => Ok(Extracted::Text(content.trim().to_string())),
        Shape::Fields(fields) => {
            let value: Value = serde_json::from_str(content.trim()).map_err(|e| ExtractionError::InvalidJson(e.to_string()))?;
            check_record(&value, fields, "")?;
            Ok(Extracted::Record(value))
        }
    }
}

fn check_record(value: &Value, fields: &[FieldSpec], prefix: &str) -> Result<(), ExtractionError> {
    let Some(object) = value.as_object() else {
        return Err(ExtractionError::ShapeViolation {
            field: if prefix.is_empty() { "$".into() } else { prefix.into() },
            reason: "expected an object".into(),
        });
    };
    for spec in fields {
        let path = if prefix.is_empty() { spec.name.clone() } else { format!("{prefix}.{}", spec.name) };
        match object.get(&spec.name) {
            None | Some(Value::Null) if spec.required => {
                return Err(ExtractionError::ShapeViolation { field: path, reason: "missing".into() })
            }
            None | Some(Value::Null) => {}
            Some(v) => check_kind(v, &spec.kind, &path)?,
        }
    }
    Ok(())
}

fn check_kind(value: &Value, kind: &FieldKind, path: &str) -> Result<(), ExtractionError> {
    let violation = |reason: String| ExtractionError::ShapeViolation { field: path.to_string(), reason };
    match kind {
        FieldKind::Text if value.is_string() => Ok(()),
        FieldKind::Text => Err(violation("expected a string".into())),
        FieldKind::Integer if value.is_i64() || value.is_u64() => Ok(()),
        FieldKind::Integer => Err(violation("expected an integer".into())),
        FieldKind::Boolean if value.is_boolean() => Ok(()),
        FieldKind::Boolean => Err(violation("expected a boolean".into())),
        FieldKind::Enum(allowed) => match value.as_str() {
            Some(s) if allowed.iter().any(|a| a == s) => Ok(()),
            Some(s) => Err(violation(format!("`{s}` is not one of {}", allowed.join(", ")))),
            None => Err(violation("expected a string".into())),
        },
        FieldKind::List(item) => {
            let Some(items) = value.as_array() else {
                return Err(violation("expected a list".into()));
            };
            for (i, entry) in items.iter().enumerate() {
                check_record(entry, item, &format!("{path}[{i}]"))?;
            }
            Ok(())
        }
    }
}
