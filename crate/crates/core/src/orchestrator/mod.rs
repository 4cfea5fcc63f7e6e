//! Turn handling: intent assessment, clarification, delegation to the SQL
//! agent and answer synthesis.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentError, AgentLimits, AgentStatus, SqlAgent};
use crate::events::{AgentEvent, EventEmitter, EventKind};
use crate::extract::{extract, ExtractionTarget, ModelChooser};
use crate::llm::{ChatMessage, Gateway, LlmError, Role};
use crate::prompts::{PromptError, PromptSet};
use crate::sandbox::{ResultPreview, Sandbox};
use crate::schema::SchemaDocument;

/// Delimiter placed between an intent and the user's clarification.
pub const CLARIFICATION_DELIMITER: &str = "; clarified: ";

pub const GENERIC_CLARIFICATION: &str =
    "Could you describe more precisely what you want to see, for example which records, filters or time range?";

pub const TRUNCATION_NOTICE: &str = "Note: the result was truncated; only the first rows are shown.";

const HISTORY_TURNS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum IntentAssessment {
    Proceed { normalized_intent: String, reason: String },
    Clarify { clarification_question: String, reason: String },
    OutOfScope { reason: String },
}

impl IntentAssessment {
    pub fn decision(&self) -> &'static str {
        match self {
            IntentAssessment::Proceed { .. } => "proceed",
            IntentAssessment::Clarify { .. } => "clarify",
            IntentAssessment::OutOfScope { .. } => "out_of_scope",
        }
    }

    pub fn reason(&self) -> &str {
        match self {
            IntentAssessment::Proceed { reason, .. }
            | IntentAssessment::Clarify { reason, .. }
            | IntentAssessment::OutOfScope { reason } => reason,
        }
    }

    /// Builds an assessment from a record matching the intent shape.
    pub fn from_record(record: &serde_json::Value, merged_message: &str) -> Option<Self> {
        let text = |key: &str| record.get(key).and_then(|v| v.as_str()).map(str::trim).filter(|s| !s.is_empty());
        let reason = text("reason").unwrap_or_default().to_string();
        match record.get("decision")?.as_str()? {
            "proceed" => Some(IntentAssessment::Proceed {
                normalized_intent: text("normalized_intent").unwrap_or(merged_message).to_string(),
                reason,
            }),
            "clarify" => Some(IntentAssessment::Clarify {
                clarification_question: text("clarification_question").unwrap_or(GENERIC_CLARIFICATION).to_string(),
                reason,
            }),
            "out_of_scope" => Some(IntentAssessment::OutOfScope { reason }),
            _ => None,
        }
    }

    fn unparsable() -> Self {
        IntentAssessment::Clarify {
            clarification_question: GENERIC_CLARIFICATION.to_string(),
            reason: "the assessment could not be read".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingClarification {
    pub original_intent: String,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub user_message: String,
    pub events: Vec<AgentEvent>,
    pub reply: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConversationState {
    pub session_id: String,
    pub turns: Vec<Turn>,
    pub pending_clarification: Option<PendingClarification>,
}

impl ConversationState {
    pub fn new(session_id: impl Into<String>) -> Self {
        ConversationState { session_id: session_id.into(), ..Default::default() }
    }

    /// Text the assessor sees: the message, merged with a pending intent.
    pub fn merged_message(&self, message: &str) -> String {
        match &self.pending_clarification {
            Some(pending) => format!("{}{CLARIFICATION_DELIMITER}{message}", pending.original_intent),
            None => message.to_string(),
        }
    }

    fn history(&self) -> String {
        let start = self.turns.len().saturating_sub(HISTORY_TURNS);
        let lines: Vec<String> = self.turns[start..]
            .iter()
            .map(|t| format!("User: {}\nAssistant: {}", t.user_message, t.reply))
            .collect();
        if lines.is_empty() {
            "(none)".to_string()
        } else {
            lines.join("\n")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnStatus {
    Answered,
    Clarifying,
    OutOfScope,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnReport {
    pub status: TurnStatus,
    pub reply: String,
    pub assessment: Option<IntentAssessment>,
    pub agent_status: Option<AgentStatus>,
    pub final_sql: Option<String>,
    pub approved: bool,
    pub timed_out: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Everything needed to answer questions about one database.
pub struct Assistant {
    gateway: Gateway,
    prompts: Arc<PromptSet>,
    schema: Arc<SchemaDocument>,
    sandbox: Sandbox,
    agent: SqlAgent,
}

impl Assistant {
    pub fn new(
        gateway: Gateway,
        prompts: Arc<PromptSet>,
        schema: Arc<SchemaDocument>,
        sandbox: Sandbox,
        limits: AgentLimits,
    ) -> Result<Self, OrchestratorError> {
        let agent = SqlAgent::new(gateway.clone(), prompts.clone(), schema.clone(), limits)?;
        Ok(Assistant { gateway, prompts, schema, sandbox, agent })
    }

    pub fn schema(&self) -> &SchemaDocument {
        &self.schema
    }

    pub fn sandbox(&self) -> &Sandbox {
        &self.sandbox
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn limits(&self) -> AgentLimits {
        self.agent.limits()
    }

    /// Assesses `message` in the context of `state`. Also returns the merged
    /// text that was assessed.
    pub async fn assess_intent(
        &self,
        message: &str,
        state: &ConversationState,
    ) -> Result<(IntentAssessment, String), LlmError> {
        let merged = state.merged_message(message);
        let render = |section: &str, values: &[(&str, &str)]| {
            self.prompts.intent.render(section, values).map_err(|e| LlmError::InvalidRequest(e.to_string()))
        };
        let system = render("system", &[("schema", &self.schema.rendered)])?;
        let assess = render("assess", &[("history", &state.history()), ("message", &merged)])?;
        let reply = self.gateway.complete(Role::Dialogue, &[ChatMessage::system(system), ChatMessage::user(assess)]).await?;
        let chooser = ModelChooser::new(self.gateway.clone(), self.prompts.extractor.clone());
        let assessment = match extract(&reply.text, &ExtractionTarget::intent(), Some(&chooser)).await {
            Ok((_, parsed)) => parsed
                .into_record()
                .and_then(|record| IntentAssessment::from_record(&record, &merged))
                .unwrap_or_else(IntentAssessment::unparsable),
            Err(_) => IntentAssessment::unparsable(),
        };
        Ok((assessment, merged))
    }

    /// Processes one user message. Always produces exactly one reply and
    /// records the turn in `state`.
    pub async fn handle_turn(
        &self,
        state: &mut ConversationState,
        message: &str,
        events: &EventEmitter,
    ) -> Result<TurnReport, OrchestratorError> {
        let first_event = events.events().len();
        let report = self.turn_inner(state, message, events).await?;
        let turn_events = events.events().split_off(first_event);
        state.turns.push(Turn { user_message: message.to_string(), events: turn_events, reply: report.reply.clone() });
        Ok(report)
    }

    async fn turn_inner(
        &self,
        state: &mut ConversationState,
        message: &str,
        events: &EventEmitter,
    ) -> Result<TurnReport, OrchestratorError> {
        let (assessment, merged) = match self.assess_intent(message, state).await {
            Ok(pair) => pair,
            Err(error) => {
                events.emit(EventKind::Error { stage: "intent".into(), message: error.to_string() });
                let reply = format!("Sorry, I could not process your message right now ({error}). Please try again.");
                events.emit(EventKind::Answer { text: reply.clone() });
                return Ok(failed(reply, None, None, error.is_timeout()));
            }
        };
        events.emit(EventKind::IntentAssessed {
            decision: assessment.decision().to_string(),
            message: merged.clone(),
            normalized_intent: match &assessment {
                IntentAssessment::Proceed { normalized_intent, .. } => Some(normalized_intent.clone()),
                _ => None,
            },
            clarification_question: match &assessment {
                IntentAssessment::Clarify { clarification_question, .. } => Some(clarification_question.clone()),
                _ => None,
            },
            reason: assessment.reason().to_string(),
        });

        let intent = match &assessment {
            IntentAssessment::Clarify { clarification_question, .. } => {
                state.pending_clarification =
                    Some(PendingClarification { original_intent: merged.clone(), question: clarification_question.clone() });
                events.emit(EventKind::ClarificationRequested {
                    question: clarification_question.clone(),
                    original_intent: merged,
                });
                return Ok(TurnReport {
                    status: TurnStatus::Clarifying,
                    reply: clarification_question.clone(),
                    assessment: Some(assessment.clone()),
                    agent_status: None,
                    final_sql: None,
                    approved: false,
                    timed_out: false,
                });
            }
            IntentAssessment::OutOfScope { reason } => {
                state.pending_clarification = None;
                let reply = self.refusal(reason);
                events.emit(EventKind::Answer { text: reply.clone() });
                return Ok(TurnReport {
                    status: TurnStatus::OutOfScope,
                    reply,
                    assessment: Some(assessment.clone()),
                    agent_status: None,
                    final_sql: None,
                    approved: false,
                    timed_out: false,
                });
            }
            IntentAssessment::Proceed { normalized_intent, .. } => {
                state.pending_clarification = None;
                normalized_intent.clone()
            }
        };

        let session = match self.sandbox.session() {
            Ok(session) => session,
            Err(error) => {
                events.emit(EventKind::Error { stage: "database".into(), message: error.to_string() });
                let reply = "Sorry, the database is not reachable at the moment.".to_string();
                events.emit(EventKind::Answer { text: reply.clone() });
                return Ok(failed(reply, Some(assessment), None, false));
            }
        };
        let result = self.agent.run(&intent, &session, events).await?;
        tracing::info!(status = result.status.as_str(), rounds = result.rounds_used, "sql agent finished");

        let (Some(query), Some(preview)) = (result.final_query.as_ref(), result.preview()) else {
            let detail = result.last_error.clone().unwrap_or_default();
            events.emit(EventKind::Error {
                stage: "sql_agent".into(),
                message: format!("{}: {detail}", result.status.as_str()),
            });
            let reply = failure_reply(result.status, &detail);
            events.emit(EventKind::Answer { text: reply.clone() });
            return Ok(failed(reply, Some(assessment), Some(result.status), result.timed_out));
        };

        events.emit(EventKind::FinalSql {
            sql: query.sql().to_string(),
            approved: result.approved,
            status: result.status.as_str().to_string(),
        });
        let mut reply = self.synthesize_answer(&intent, query.sql(), preview).await;
        if !result.approved {
            reply.push_str("\n\nThis query was not confirmed by the review step, so please double-check the figures.");
        }
        events.emit(EventKind::Answer { text: reply.clone() });
        Ok(TurnReport {
            status: TurnStatus::Answered,
            reply,
            assessment: Some(assessment),
            agent_status: Some(result.status),
            final_sql: Some(query.sql().to_string()),
            approved: result.approved,
            timed_out: result.timed_out,
        })
    }

    /// Writes the reply for a successful query. Falls back to a plain table
    /// when the model cannot be reached.
    pub async fn synthesize_answer(&self, intent: &str, sql: &str, preview: &ResultPreview) -> String {
        let reply = match self.compose(intent, sql, preview).await {
            Ok(text) if !text.trim().is_empty() => text.trim().to_string(),
            Ok(_) => fallback_answer(sql, preview),
            Err(error) => {
                tracing::warn!(%error, "answer synthesis failed");
                fallback_answer(sql, preview)
            }
        };
        ensure_truncation_notice(reply, preview)
    }

    async fn compose(&self, intent: &str, sql: &str, preview: &ResultPreview) -> Result<String, LlmError> {
        let row_note = if preview.truncated {
            format!("first {} rows, more rows exist", preview.rows.len())
        } else {
            format!("all {} rows", preview.rows.len())
        };
        let columns = preview.column_names().join(", ");
        let render = |section: &str, values: &[(&str, &str)]| {
            self.prompts.answer.render(section, values).map_err(|e| LlmError::InvalidRequest(e.to_string()))
        };
        let system = render("system", &[])?;
        let compose = render(
            "compose",
            &[
                ("intent", intent),
                ("sql", sql),
                ("columns", &columns),
                ("preview", &preview.to_markdown()),
                ("row_note", &row_note),
            ],
        )?;
        let reply = self.gateway.complete(Role::Dialogue, &[ChatMessage::system(system), ChatMessage::user(compose)]).await?;
        Ok(reply.text)
    }

    fn refusal(&self, reason: &str) -> String {
        let tables = self.schema.table_names().join(", ");
        let mut reply = format!(
            "I can only answer questions that can be looked up in this ERP database (tables {tables}), \
             and this request falls outside of it."
        );
        if !reason.is_empty() {
            reply.push_str(&format!(" {reason}"));
        }
        reply
    }
}

fn failed(reply: String, assessment: Option<IntentAssessment>, agent_status: Option<AgentStatus>, timed_out: bool) -> TurnReport {
    TurnReport {
        status: TurnStatus::Failed,
        reply,
        assessment,
        agent_status,
        final_sql: None,
        approved: false,
        timed_out,
    }
}

fn failure_reply(status: AgentStatus, detail: &str) -> String {
    let reason = match status {
        AgentStatus::ExhaustedReasoner => "I could not produce a query that runs against the database",
        AgentStatus::PolicyViolation => "the generated statement tried to modify data, which is not allowed",
        AgentStatus::GatewayFailure => "the language model did not respond in time",
        AgentStatus::ExhaustedCritic | AgentStatus::Answered => "no usable query result was produced",
    };
    if detail.is_empty() {
        format!("Sorry, {reason}.")
    } else {
        format!("Sorry, {reason}. Last error: {detail}")
    }
}

/// Plain rendering of a query result used when no model reply is available.
pub fn fallback_answer(sql: &str, preview: &ResultPreview) -> String {
    let mut out = String::from("I could not write a summary, but the query returned these rows:\n\n");
    out.push_str(&preview.to_markdown());
    out.push_str("\n```sql\n");
    out.push_str(sql.trim_end());
    out.push_str("\n```");
    out
}

fn ensure_truncation_notice(mut reply: String, preview: &ResultPreview) -> String {
    if preview.truncated && !reply.to_lowercase().contains("truncat") {
        reply.push_str("\n\n");
        reply.push_str(TRUNCATION_NOTICE);
    }
    reply
}
