use std::fmt::Write;

use super::{ColumnInfo, ColumnRef, Relationship, SemanticDescription, TableInfo};

pub const SEMANTIC_HEADING: &str = "# Semantic Description";
pub const AUTOGENERATED_HEADING: &str = "# Autogenerated Schema";
const RELATIONSHIPS_HEADING: &str = "# Relationships";
/// Prefix of every per-column bullet in the autogenerated layer.
pub const COLUMN_BULLET: &str = "- **Column:** ";
/// Prefix of the description line under a column bullet.
pub const DESCRIPTION_LINE: &str = "  - **Description:** ";

pub(super) fn render(semantic: &SemanticDescription, tables: &[TableInfo], relationships: &[Relationship]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{SEMANTIC_HEADING}\n");
    let _ = writeln!(out, "## Introduction\n\n{}\n", semantic.introduction.trim());
    let _ = writeln!(out, "## Concepts\n\n{}\n", semantic.concepts.trim());
    let _ = writeln!(out, "## Table Summaries\n");
    for (table, summary) in &semantic.table_summaries {
        let _ = writeln!(out, "### {table}\n\n{}\n", summary.trim());
    }
    let _ = writeln!(out, "## High-Level Relationships\n");
    for rel in &semantic.high_level_relationships {
        let _ = writeln!(out, "{}", relationship_line(rel));
    }
    out.push('\n');

    let _ = writeln!(out, "{AUTOGENERATED_HEADING}\n");
    for table in tables {
        let _ = writeln!(out, "## {}\n", table.name);
        if let Some(n) = table.row_count {
            let _ = writeln!(out, "Rows: {n}\n");
        }
        for column in &table.columns {
            render_column(&mut out, table, column, relationships);
        }
        out.push('\n');
    }

    let _ = writeln!(out, "{RELATIONSHIPS_HEADING}\n");
    for rel in relationships {
        let _ = writeln!(out, "{}", relationship_line(rel));
    }
    out
}

fn relationship_line(rel: &Relationship) -> String {
    let mut line = format!("- {} -> {} | {}", rel.source(), rel.target(), rel.cardinality.notation());
    if rel.declared {
        line.push_str(" | declared foreign key");
    }
    if let Some(comment) = rel.comment.as_deref().filter(|c| !c.trim().is_empty()) {
        let _ = write!(line, " | {}", comment.trim());
    }
    line
}

fn render_column(out: &mut String, table: &TableInfo, column: &ColumnInfo, relationships: &[Relationship]) {
    let data_type = if column.data_type.is_empty() { "ANY" } else { column.data_type.as_str() };
    let _ = write!(out, "{COLUMN_BULLET}`{}` | **Type:** {data_type}", column.name);
    let mut keys = Vec::new();
    if column.is_primary_key {
        keys.push("primary key".to_string());
    }
    if let Some(target) = &column.foreign_key_target {
        keys.push(format!("foreign key -> {target}"));
    }
    if !keys.is_empty() {
        let _ = write!(out, " | **Key:** {}", keys.join(", "));
    }
    out.push('\n');

    if let Some(desc) = column.description.as_deref().filter(|d| !d.trim().is_empty()) {
        let _ = writeln!(out, "{DESCRIPTION_LINE}{}", desc.trim());
    }
    if column.samples_withheld {
        let _ = writeln!(out, "  - **Samples:** (withheld)");
    } else if !column.sample_values.is_empty() {
        let _ = writeln!(out, "  - **Samples:** {}", column.sample_values.join(", "));
    }

    let here = ColumnRef { table: table.name.clone(), column: column.name.clone() };
    let links: Vec<String> = relationships
        .iter()
        .filter_map(|r| {
            let kind = if r.declared { "declared" } else { "documented" };
            if r.source().eq_ignore_case(&here) {
                Some(format!("-> {} ({}, {kind})", r.target(), r.cardinality.notation()))
            } else if r.target().eq_ignore_case(&here) {
                Some(format!("<- {} ({}, {kind})", r.source(), r.cardinality.notation()))
            } else {
                None
            }
        })
        .collect();
    if !links.is_empty() {
        let _ = writeln!(out, "  - **Relationships:** {}", links.join("; "));
    }
}

/// Reads the `(table, column)` pairs back out of a rendered document's
/// autogenerated layer, in document order.
pub fn parse_column_bullets(rendered: &str) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    let mut in_layer = false;
    let mut table: Option<String> = None;
    for line in rendered.lines() {
        if line.starts_with("# ") {
            in_layer = line == AUTOGENERATED_HEADING;
            table = None;
            continue;
        }
        if !in_layer {
            continue;
        }
        if let Some(name) = line.strip_prefix("## ") {
            table = Some(name.trim().to_string());
        } else if let (Some(t), Some(rest)) = (&table, line.strip_prefix(COLUMN_BULLET)) {
            if let Some(name) = rest.strip_prefix('`').and_then(|r| r.split('`').next()) {
                pairs.push((t.clone(), name.to_string()));
            }
        }
    }
    pairs
}
