//! Versioned prompt templates with named slots.
//!
//! A template file is markdown split into sections by marker lines of the
//! form `<!-- section: name -->`. Inside a section, `{{slot}}` is replaced at
//! render time. The files shipped in `prompts/` are compiled in as defaults;
//! a prompt directory from configuration overrides them file by file.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("prompt {template}: missing section `{section}`")]
    MissingSection { template: String, section: String },
    #[error("prompt {template}/{section}: unknown slot `{{{{{slot}}}}}`")]
    UnknownSlot { template: String, section: String, slot: String },
    #[error("prompt {template}/{section}: no value for slot `{slot}`")]
    UnfilledSlot { template: String, section: String, slot: String },
    #[error("reading prompt {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    name: String,
    sections: BTreeMap<String, String>,
}

const SECTION_OPEN: &str = "<!-- section:";

impl PromptTemplate {
    pub fn parse(name: &str, text: &str) -> Self {
        let mut sections = BTreeMap::new();
        let mut current: Option<(String, String)> = None;
        for line in text.lines() {
            let trimmed = line.trim();
            if let Some(rest) = trimmed.strip_prefix(SECTION_OPEN).and_then(|r| r.strip_suffix("-->")) {
                if let Some((n, body)) = current.take() {
                    sections.insert(n, body.trim_matches('\n').to_string());
                }
                current = Some((rest.trim().to_string(), String::new()));
            } else if let Some((_, body)) = current.as_mut() {
                body.push_str(line);
                body.push('\n');
            }
        }
        if let Some((n, body)) = current {
            sections.insert(n, body.trim_matches('\n').to_string());
        }
        PromptTemplate { name: name.to_string(), sections }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn section(&self, section: &str) -> Option<&str> {
        self.sections.get(section).map(String::as_str)
    }

    /// Checks that each `(section, allowed slots)` pair exists and that the
    /// section only references allowed slots.
    pub fn check(&self, required: &[(&str, &[&str])]) -> Result<(), PromptError> {
        for (section, allowed) in required {
            let body = self.section(section).ok_or_else(|| PromptError::MissingSection {
                template: self.name.clone(),
                section: section.to_string(),
            })?;
            for slot in slots_in(body) {
                if !allowed.contains(&slot) {
                    return Err(PromptError::UnknownSlot {
                        template: self.name.clone(),
                        section: section.to_string(),
                        slot: slot.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn render(&self, section: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
        let body = self.section(section).ok_or_else(|| PromptError::MissingSection {
            template: self.name.clone(),
            section: section.to_string(),
        })?;
        let mut out = String::with_capacity(body.len());
        let mut rest = body;
        while let Some(start) = rest.find("{{") {
            let after = &rest[start + 2..];
            match after.find("}}") {
                Some(end) if is_slot_name(&after[..end]) => {
                    let slot = &after[..end];
                    let value = values.iter().find(|(k, _)| *k == slot).map(|(_, v)| *v).ok_or_else(|| {
                        PromptError::UnfilledSlot {
                            template: self.name.clone(),
                            section: section.to_string(),
                            slot: slot.to_string(),
                        }
                    })?;
                    out.push_str(&rest[..start]);
                    out.push_str(value);
                    rest = &after[end + 2..];
                }
                _ => {
                    out.push_str(&rest[..start + 2]);
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

fn is_slot_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c == '_')
}

fn slots_in(body: &str) -> Vec<&str> {
    let mut slots = Vec::new();
    let mut rest = body;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) if is_slot_name(&after[..end]) => {
                slots.push(&after[..end]);
                rest = &after[end + 2..];
            }
            _ => rest = after,
        }
    }
    slots
}

const REASONER_SLOTS: &[(&str, &[&str])] = &[
    ("system", &["schema"]),
    ("task", &["intent"]),
    ("execution_error", &["sql", "error"]),
    ("missing_block", &[]),
    ("critic_feedback", &["sql", "review", "feedback"]),
    ("critic_approved", &["review"]),
];
const CRITIC_SLOTS: &[(&str, &[&str])] = &[
    ("system", &["schema"]),
    ("review", &["intent", "sql", "columns", "preview"]),
];
const EXTRACTOR_SLOTS: &[(&str, &[&str])] = &[("select", &["target", "tail", "candidates"])];
const INTENT_SLOTS: &[(&str, &[&str])] = &[("system", &["schema"]), ("assess", &["history", "message"])];
const ANSWER_SLOTS: &[(&str, &[&str])] = &[
    ("system", &[]),
    ("compose", &["intent", "sql", "columns", "preview", "row_note"]),
];

/// The five templates the agents use.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    pub reasoner: PromptTemplate,
    pub critic: PromptTemplate,
    pub extractor: PromptTemplate,
    pub intent: PromptTemplate,
    pub answer: PromptTemplate,
}

impl PromptSet {
    pub fn builtin() -> Self {
        let set = PromptSet {
            reasoner: PromptTemplate::parse("reasoner.md", include_str!("../../../prompts/reasoner.md")),
            critic: PromptTemplate::parse("critic.md", include_str!("../../../prompts/critic.md")),
            extractor: PromptTemplate::parse("extractor.md", include_str!("../../../prompts/extractor.md")),
            intent: PromptTemplate::parse("intent.md", include_str!("../../../prompts/intent.md")),
            answer: PromptTemplate::parse("answer.md", include_str!("../../../prompts/answer.md")),
        };
        set.check().expect("built-in prompts are well-formed");
        set
    }

    /// Loads templates from `dir`, falling back to the built-in copy for any
    /// file that is absent.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let builtin = Self::builtin();
        let load = |name: &str, fallback: PromptTemplate| -> Result<PromptTemplate, PromptError> {
            let path = dir.join(name);
            if !path.exists() {
                return Ok(fallback);
            }
            let text = std::fs::read_to_string(&path).map_err(|e| PromptError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            Ok(PromptTemplate::parse(name, &text))
        };
        let set = PromptSet {
            reasoner: load("reasoner.md", builtin.reasoner)?,
            critic: load("critic.md", builtin.critic)?,
            extractor: load("extractor.md", builtin.extractor)?,
            intent: load("intent.md", builtin.intent)?,
            answer: load("answer.md", builtin.answer)?,
        };
        set.check()?;
        Ok(set)
    }

    pub fn check(&self) -> Result<(), PromptError> {
        self.reasoner.check(REASONER_SLOTS)?;
        self.critic.check(CRITIC_SLOTS)?;
        self.extractor.check(EXTRACTOR_SLOTS)?;
        self.intent.check(INTENT_SLOTS)?;
        self.answer.check(ANSWER_SLOTS)
    }
}
