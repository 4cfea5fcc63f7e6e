use std::collections::BTreeMap;

use super::{Cardinality, Linking, Relationship, SchemaError, SemanticDescription};

/// Headings the semantic description must contain, in rendering order.
pub const REQUIRED_SECTIONS: [&str; 4] = ["Introduction", "Concepts", "Table Summaries", "High-Level Relationships"];

struct Heading<'a> {
    level: usize,
    title: &'a str,
    line: usize,
}

fn heading(line: &str) -> Option<(usize, &str)> {
    let hashes = line.chars().take_while(|&c| c == '#').count();
    if hashes == 0 || hashes > 6 {
        return None;
    }
    let rest = &line[hashes..];
    if !rest.starts_with(' ') {
        return None;
    }
    Some((hashes, rest.trim().trim_end_matches('#').trim()))
}

/// Parses the expert-authored semantic layer.
///
/// The four [`REQUIRED_SECTIONS`] may appear at any heading level. Table
/// summaries are sub-headings (one per table) under "Table Summaries".
/// High-level relationships are bullets of the form
/// `- T_A.idA -> T_B.idA | 1:N | optional comment`; other lines in that
/// section are ignored. Table names are not checked here, only when the
/// document is built against the catalog.
pub fn load_semantic(source: &str) -> Result<SemanticDescription, SchemaError> {
    let lines: Vec<&str> = source.lines().collect();
    let headings: Vec<Heading<'_>> = lines
        .iter()
        .enumerate()
        .filter_map(|(i, l)| heading(l).map(|(level, title)| Heading { level, title, line: i }))
        .collect();

    // Body of a section: lines until the next heading at the same or a higher level.
    let section = |name: &str| -> Result<(usize, usize, usize), SchemaError> {
        let (idx, h) = headings
            .iter()
            .enumerate()
            .find(|(_, h)| h.title.eq_ignore_ascii_case(name))
            .ok_or_else(|| SchemaError::MissingSection(name.to_string()))?;
        let end = headings[idx + 1..]
            .iter()
            .find(|n| n.level <= h.level)
            .map_or(lines.len(), |n| n.line);
        Ok((h.line + 1, end, h.level))
    };
    let body = |start: usize, end: usize| lines[start..end].join("\n").trim().to_string();

    let (s, e, _) = section("Introduction")?;
    let introduction = body(s, e);
    if introduction.is_empty() {
        return Err(SchemaError::EmptySection("Introduction".into()));
    }
    let (s, e, _) = section("Concepts")?;
    let concepts = body(s, e);
    if concepts.is_empty() {
        return Err(SchemaError::EmptySection("Concepts".into()));
    }

    let (s, e, level) = section("Table Summaries")?;
    let mut table_summaries = BTreeMap::new();
    let subs: Vec<&Heading<'_>> = headings.iter().filter(|h| h.line >= s && h.line < e && h.level > level).collect();
    for (i, h) in subs.iter().enumerate() {
        let end = subs[i + 1..].iter().find(|n| n.level <= h.level).map_or(e, |n| n.line);
        let name = h.title.trim_matches('`').to_string();
        table_summaries.insert(name, body(h.line + 1, end));
    }
    if table_summaries.is_empty() {
        return Err(SchemaError::EmptySection("Table Summaries".into()));
    }

    let (s, e, _) = section("High-Level Relationships")?;
    let mut high_level_relationships = Vec::new();
    for (offset, line) in lines[s..e].iter().enumerate() {
        let trimmed = line.trim();
        let Some(item) = trimmed.strip_prefix("- ").or_else(|| trimmed.strip_prefix("* ")) else {
            continue;
        };
        high_level_relationships.push(parse_relationship(item, s + offset + 1)?);
    }
    if high_level_relationships.is_empty() {
        return Err(SchemaError::EmptySection("High-Level Relationships".into()));
    }

    Ok(SemanticDescription { introduction, concepts, table_summaries, high_level_relationships })
}

fn parse_relationship(item: &str, line: usize) -> Result<Relationship, SchemaError> {
    let bad = |reason: &str| SchemaError::MalformedRelationship { line, reason: reason.to_string() };
    let mut parts = item.splitn(3, '|').map(str::trim);
    let link = parts.next().unwrap_or_default();
    let card = parts.next().ok_or_else(|| bad("expected `source -> target | cardinality`"))?;
    let comment = parts.next().filter(|c| !c.is_empty()).map(str::to_string);

    let (src, dst) = link.split_once("->").ok_or_else(|| bad("missing `->`"))?;
    let column_ref = |s: &str| -> Result<(String, String), SchemaError> {
        let s = s.trim().trim_matches('`');
        let (t, c) = s.split_once('.').ok_or_else(|| bad("columns must be written as Table.Column"))?;
        if t.is_empty() || c.is_empty() {
            return Err(bad("empty table or column name"));
        }
        Ok((t.to_string(), c.to_string()))
    };
    let (source_table, source_column) = column_ref(src)?;
    let (target_table, target_column) = column_ref(dst)?;
    let cardinality = match card.to_ascii_lowercase().replace(' ', "").as_str() {
        "1:1" | "1to1" | "one_to_one" => Cardinality::OneToOne,
        "1:n" | "1ton" | "one_to_many" => Cardinality::OneToMany,
        other => return Err(bad(&format!("unknown cardinality `{other}`"))),
    };
    Ok(Relationship {
        source_table,
        target_table,
        cardinality,
        declared: false,
        linking: Linking { source_column, target_column },
        comment,
    })
}
