//! Picking the relevant fenced block out of a model response and checking
//! its content against the expected shape.

mod fences;
mod shape;

use async_trait::async_trait;
use regex::Regex;
use serde::{Deserialize, Serialize};

pub use fences::{parse_fences, FencedBlock};
pub use shape::{parse_into, Extracted, FieldKind, FieldSpec, Shape};

use crate::llm::{ChatMessage, Gateway, LlmError, Role};
use crate::prompts::PromptTemplate;

/// Characters of each candidate shown to the extractor.
pub const CANDIDATE_PREVIEW_CHARS: usize = 200;
/// Characters of trailing text shown to the extractor.
pub const TAIL_CHARS: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractionError {
    #[error("response contains no fenced block")]
    NoBlocks,
    #[error("block content is not valid JSON: {0}")]
    InvalidJson(String),
    #[error("field `{field}`: {reason}")]
    ShapeViolation { field: String, reason: String },
}

/// Describes what a caller wants out of a response.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionTarget {
    pub name: String,
    pub expected_tag: String,
    pub aliases: Vec<String>,
    pub shape: Shape,
    /// Treat an unfenced response as a single untagged block.
    pub allow_bare: bool,
}

impl ExtractionTarget {
    pub fn matches(&self, block: &FencedBlock) -> bool {
        block.has_tag(&self.expected_tag) || self.aliases.iter().any(|a| block.has_tag(a))
    }

    /// A single SQL query.
    pub fn sql() -> Self {
        ExtractionTarget {
            name: "SQL query".into(),
            expected_tag: "sql".into(),
            aliases: vec!["sqlite".into(), "tsql".into(), "mssql".into()],
            shape: Shape::RawText,
            allow_bare: false,
        }
    }

    /// The critic's verdict record.
    pub fn critique() -> Self {
        let issue = vec![
            FieldSpec::required(
                "category",
                FieldKind::one_of(&["syntactic", "semantic", "readability", "efficiency", "result_conformance"]),
            ),
            FieldSpec::required("detail", FieldKind::Text),
        ];
        ExtractionTarget {
            name: "review verdict".into(),
            expected_tag: "json".into(),
            aliases: vec![],
            shape: Shape::Fields(vec![
                FieldSpec::required("decision", FieldKind::one_of(&["approved", "revise"])),
                FieldSpec::required("issues", FieldKind::List(issue)),
            ]),
            allow_bare: true,
        }
    }

    /// The intent assessment record.
    pub fn intent() -> Self {
        ExtractionTarget {
            name: "intent decision".into(),
            expected_tag: "json".into(),
            aliases: vec![],
            shape: Shape::Fields(vec![
                FieldSpec::required("decision", FieldKind::one_of(&["proceed", "clarify", "out_of_scope"])),
                FieldSpec::optional("normalized_intent", FieldKind::Text),
                FieldSpec::optional("clarification_question", FieldKind::Text),
                FieldSpec::optional("reason", FieldKind::Text),
            ]),
            allow_bare: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    /// Exactly one block carried the expected tag.
    Unique,
    /// No block carried the tag; the last block was taken.
    LastBlock,
    /// The extractor model chose among several candidates.
    Extractor,
    /// The extractor gave no usable answer; the last candidate was taken.
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub block: FencedBlock,
    pub method: SelectionMethod,
    pub extractor_calls: usize,
}

/// Chooses one block among several candidates.
#[async_trait]
pub trait BlockChooser: Send + Sync {
    async fn choose(
        &self,
        target: &ExtractionTarget,
        candidates: &[&FencedBlock],
        tail: &str,
    ) -> Result<Option<usize>, LlmError>;
}

/// Asks the extractor role to pick a block.
pub struct ModelChooser {
    gateway: Gateway,
    template: PromptTemplate,
}

impl ModelChooser {
    pub fn new(gateway: Gateway, template: PromptTemplate) -> Self {
        ModelChooser { gateway, template }
    }
}

#[async_trait]
impl BlockChooser for ModelChooser {
    async fn choose(
        &self,
        target: &ExtractionTarget,
        candidates: &[&FencedBlock],
        tail: &str,
    ) -> Result<Option<usize>, LlmError> {
        let listing = render_candidates(candidates);
        let prompt = self
            .template
            .render("select", &[("target", &target.name), ("tail", tail), ("candidates", &listing)])
            .map_err(|e| LlmError::InvalidRequest(e.to_string()))?;
        let reply = self.gateway.complete(Role::Extractor, &[ChatMessage::user(prompt)]).await?;
        Ok(parse_ordinal(&reply.text))
    }
}

pub fn render_candidates(candidates: &[&FencedBlock]) -> String {
    candidates
        .iter()
        .map(|b| format!("{}: {}", b.ordinal, truncate_chars(&b.content, CANDIDATE_PREVIEW_CHARS)))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Reads `{"ordinal": N}` from an extractor reply; a bare `ordinal N` is also
/// understood.
pub fn parse_ordinal(reply: &str) -> Option<usize> {
    if let (Some(start), Some(end)) = (reply.find('{'), reply.rfind('}')) {
        if start < end {
            if let Ok(value) = serde_json::from_str::<serde_json::Value>(&reply[start..=end]) {
                return value.get("ordinal")?.as_u64().map(|n| n as usize);
            }
        }
    }
    let pattern = Regex::new(r#"(?i)ordinal"?\s*[:=]?\s*(\d+)"#).expect("valid pattern");
    pattern.captures(reply)?.get(1)?.as_str().parse().ok()
}

fn truncate_chars(text: &str, max: usize) -> &str {
    match text.char_indices().nth(max) {
        Some((idx, _)) => &text[..idx],
        None => text,
    }
}

fn last_chars(text: &str, max: usize) -> &str {
    let count = text.chars().count();
    if count <= max {
        return text;
    }
    let skip = count - max;
    let idx = text.char_indices().nth(skip).map(|(i, _)| i).unwrap_or(0);
    &text[idx..]
}

/// Picks the block holding `target` out of `doc`.
///
/// The chooser is consulted only when two or more blocks match the target.
pub async fn select_block(
    doc: &str,
    target: &ExtractionTarget,
    chooser: Option<&dyn BlockChooser>,
) -> Result<Selection, ExtractionError> {
    let (mut blocks, tail_at) = fences::scan(doc);
    if blocks.is_empty() {
        if target.allow_bare && !doc.trim().is_empty() {
            blocks.push(FencedBlock { ordinal: 0, tag: None, content: doc.trim().to_string(), terminated: true });
        } else {
            return Err(ExtractionError::NoBlocks);
        }
    }
    let candidates: Vec<&FencedBlock> = blocks.iter().filter(|b| target.matches(b)).collect();
    match candidates.as_slice() {
        [] => {
            let last = blocks.last().cloned().ok_or(ExtractionError::NoBlocks)?;
            Ok(Selection { block: last, method: SelectionMethod::LastBlock, extractor_calls: 0 })
        }
        [one] => Ok(Selection { block: (*one).clone(), method: SelectionMethod::Unique, extractor_calls: 0 }),
        many => {
            let fallback = (*many.last().expect("non-empty")).clone();
            let Some(chooser) = chooser else {
                return Ok(Selection { block: fallback, method: SelectionMethod::Fallback, extractor_calls: 0 });
            };
            let tail = last_chars(&doc[tail_at.min(doc.len())..], TAIL_CHARS);
            let choice = chooser.choose(target, many, tail).await;
            let picked = match choice {
                Ok(Some(ordinal)) => many.iter().find(|b| b.ordinal == ordinal).map(|b| (*b).clone()),
                Ok(None) => None,
                Err(err) => {
                    tracing::warn!(error = %err, "extractor call failed");
                    None
                }
            };
            Ok(match picked {
                Some(block) => Selection { block, method: SelectionMethod::Extractor, extractor_calls: 1 },
                None => Selection { block: fallback, method: SelectionMethod::Fallback, extractor_calls: 1 },
            })
        }
    }
}

/// Selects and parses in one step.
pub async fn extract(
    doc: &str,
    target: &ExtractionTarget,
    chooser: Option<&dyn BlockChooser>,
) -> Result<(Selection, Extracted), ExtractionError> {
    let selection = select_block(doc, target, chooser).await?;
    let parsed = parse_into(&selection.block.content, &target.shape)?;
    Ok((selection, parsed))
}

#[cfg(test)]
mod tests;
