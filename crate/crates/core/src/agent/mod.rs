//! The reasoner and critic loop that turns an intent into an executed query.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::events::{EventEmitter, EventKind, IssueRecord};
use crate::extract::{extract, select_block, BlockChooser, ExtractionError, ExtractionTarget, ModelChooser};
use crate::llm::{ChatMessage, Gateway, LlmError, Role};
use crate::prompts::{PromptError, PromptSet};
use crate::sandbox::{
    validate_select, ExecutionFailure, ExecutionOutcome, ResultPreview, SandboxSession, ValidatedSelect, ValidationError,
};
use crate::schema::SchemaDocument;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentLimits {
    pub n_reasoner_attempts: u32,
    pub m_critic_rounds: u32,
}

impl Default for AgentLimits {
    fn default() -> Self {
        AgentLimits { n_reasoner_attempts: 5, m_critic_rounds: 3 }
    }
}

impl AgentLimits {
    pub fn new(n_reasoner_attempts: u32, m_critic_rounds: u32) -> Result<Self, AgentError> {
        let limits = AgentLimits { n_reasoner_attempts, m_critic_rounds };
        limits.validate()?;
        Ok(limits)
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.n_reasoner_attempts == 0 || self.m_critic_rounds == 0 {
            return Err(AgentError::InvalidLimits(*self));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("attempt and round limits must be at least 1, got {0:?}")]
    InvalidLimits(AgentLimits),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, thiserror::Error)]
pub enum ReasonError {
    #[error("completion contained no extractable SQL block")]
    NoSqlBlockFound { completion: String },
    #[error(transparent)]
    Gateway(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlCandidate {
    pub sql: String,
    pub attempt_index: u32,
    pub round_index: u32,
    /// The full reasoner completion the query came from.
    pub rationale: String,
    pub source_block: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueCategory {
    Syntactic,
    Semantic,
    Readability,
    Efficiency,
    ResultConformance,
}

impl IssueCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueCategory::Syntactic => "syntactic",
            IssueCategory::Semantic => "semantic",
            IssueCategory::Readability => "readability",
            IssueCategory::Efficiency => "efficiency",
            IssueCategory::ResultConformance => "result_conformance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CritiqueIssue {
    pub category: IssueCategory,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Approved,
    Revise,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CritiqueVerdict {
    decision: Decision,
    issues: Vec<CritiqueIssue>,
}

/// Detail attached when the critic's reply could not be read.
pub const UNPARSABLE_VERDICT_DETAIL: &str =
    "The review could not be read. Re-check that the query answers the request and uses the right tables and filters.";

impl CritiqueVerdict {
    pub fn approved() -> Self {
        CritiqueVerdict { decision: Decision::Approved, issues: Vec::new() }
    }

    /// A revise verdict; `None` when `issues` is empty.
    pub fn revise(issues: Vec<CritiqueIssue>) -> Option<Self> {
        if issues.is_empty() {
            None
        } else {
            Some(CritiqueVerdict { decision: Decision::Revise, issues })
        }
    }

    pub fn unparsable() -> Self {
        CritiqueVerdict {
            decision: Decision::Revise,
            issues: vec![CritiqueIssue { category: IssueCategory::Semantic, detail: UNPARSABLE_VERDICT_DETAIL.into() }],
        }
    }

    pub fn decision(&self) -> Decision {
        self.decision
    }

    pub fn issues(&self) -> &[CritiqueIssue] {
        &self.issues
    }

    pub fn is_approved(&self) -> bool {
        self.decision == Decision::Approved
    }

    /// Builds a verdict from a record that already matched the critique shape.
    pub fn from_record(record: &serde_json::Value) -> Option<Self> {
        #[derive(Deserialize)]
        struct Raw {
            decision: Decision,
            issues: Vec<CritiqueIssue>,
        }
        let raw: Raw = serde_json::from_value(record.clone()).ok()?;
        match raw.decision {
            Decision::Approved if raw.issues.is_empty() => Some(Self::approved()),
            Decision::Approved => None,
            Decision::Revise => Self::revise(raw.issues),
        }
    }

    pub fn feedback_text(&self) -> String {
        self.issues.iter().map(|i| format!("- [{}] {}", i.category.as_str(), i.detail)).collect::<Vec<_>>().join("\n")
    }

    fn issue_records(&self) -> Vec<IssueRecord> {
        self.issues
            .iter()
            .map(|i| IssueRecord { category: i.category.as_str().into(), detail: i.detail.clone() })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentStatus {
    Answered,
    ExhaustedReasoner,
    ExhaustedCritic,
    PolicyViolation,
    GatewayFailure,
}

impl AgentStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentStatus::Answered => "answered",
            AgentStatus::ExhaustedReasoner => "exhausted_reasoner",
            AgentStatus::ExhaustedCritic => "exhausted_critic",
            AgentStatus::PolicyViolation => "policy_violation",
            AgentStatus::GatewayFailure => "gateway_failure",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SqlAgentResult {
    pub status: AgentStatus,
    pub final_query: Option<ValidatedSelect>,
    pub outcome: Option<ExecutionOutcome>,
    pub candidate: Option<SqlCandidate>,
    /// True only when the critic approved `final_query`.
    pub approved: bool,
    pub transcript: Vec<ChatMessage>,
    pub rounds_used: u32,
    pub attempts_used_per_round: Vec<u32>,
    pub last_error: Option<String>,
    pub timed_out: bool,
}

impl SqlAgentResult {
    pub fn preview(&self) -> Option<&ResultPreview> {
        self.outcome.as_ref().and_then(ExecutionOutcome::preview)
    }
}

enum DebugOutcome {
    Success { candidate: SqlCandidate, query: ValidatedSelect, outcome: ExecutionOutcome, attempts: u32 },
    Exhausted { attempts: u32, last_error: String },
    PolicyViolation { attempts: u32, message: String },
    Gateway { attempts: u32, error: LlmError },
}

/// Runs the reasoner and critic against one database session.
pub struct SqlAgent {
    gateway: Gateway,
    prompts: Arc<PromptSet>,
    schema: Arc<SchemaDocument>,
    limits: AgentLimits,
    chooser: Arc<dyn BlockChooser>,
}

impl SqlAgent {
    pub fn new(
        gateway: Gateway,
        prompts: Arc<PromptSet>,
        schema: Arc<SchemaDocument>,
        limits: AgentLimits,
    ) -> Result<Self, AgentError> {
        limits.validate()?;
        let chooser = Arc::new(ModelChooser::new(gateway.clone(), prompts.extractor.clone()));
        Ok(SqlAgent { gateway, prompts, schema, limits, chooser })
    }

    pub fn limits(&self) -> AgentLimits {
        self.limits
    }

    pub fn initial_transcript(&self, intent: &str) -> Result<Vec<ChatMessage>, PromptError> {
        let system = self.prompts.reasoner.render("system", &[("schema", &self.schema.rendered)])?;
        let task = self.prompts.reasoner.render("task", &[("intent", intent)])?;
        Ok(vec![ChatMessage::system(system), ChatMessage::user(task)])
    }

    /// One reasoner call; the completion is appended to `transcript`.
    pub async fn reason_step(
        &self,
        transcript: &mut Vec<ChatMessage>,
        round: u32,
        attempt: u32,
    ) -> Result<SqlCandidate, ReasonError> {
        let completion = self.gateway.complete(Role::Reasoner, transcript).await?;
        transcript.push(ChatMessage::assistant(completion.text.clone()));
        let target = ExtractionTarget::sql();
        let selection = match select_block(&completion.text, &target, Some(self.chooser.as_ref())).await {
            Ok(selection) => selection,
            Err(ExtractionError::NoBlocks) => return Err(ReasonError::NoSqlBlockFound { completion: completion.text }),
            Err(other) => unreachable!("raw text selection cannot fail with {other}"),
        };
        let sql = selection.block.content.trim().to_string();
        if sql.is_empty() {
            return Err(ReasonError::NoSqlBlockFound { completion: completion.text });
        }
        Ok(SqlCandidate {
            sql,
            attempt_index: attempt,
            round_index: round,
            rationale: completion.text,
            source_block: selection.block.content,
        })
    }

    async fn self_debug(
        &self,
        transcript: &mut Vec<ChatMessage>,
        session: &SandboxSession,
        round: u32,
        events: &EventEmitter,
    ) -> Result<DebugOutcome, PromptError> {
        let mut last_error = String::new();
        for attempt in 1..=self.limits.n_reasoner_attempts {
            let candidate = match self.reason_step(transcript, round, attempt).await {
                Ok(candidate) => candidate,
                Err(ReasonError::NoSqlBlockFound { .. }) => {
                    last_error = "no SQL block found in the completion".to_string();
                    events.emit(EventKind::SqlAttempt { round, attempt, sql: None, note: Some(last_error.clone()) });
                    transcript.push(ChatMessage::user(self.prompts.reasoner.render("missing_block", &[])?));
                    continue;
                }
                Err(ReasonError::Gateway(error)) => {
                    events.emit(EventKind::SqlAttempt { round, attempt, sql: None, note: Some(error.to_string()) });
                    return Ok(DebugOutcome::Gateway { attempts: attempt, error });
                }
                Err(ReasonError::Prompt(err)) => return Err(err),
            };
            events.emit(EventKind::SqlAttempt { round, attempt, sql: Some(candidate.sql.clone()), note: None });

            let query = match validate_select(&candidate.sql, session.config().dialect) {
                Ok(query) => query,
                Err(err) => {
                    let failure = ExecutionFailure::from_validation(&err);
                    events.emit(EventKind::ExecutionResult {
                        round,
                        attempt,
                        outcome: ExecutionOutcome::Failure(failure.clone()),
                    });
                    if let ValidationError::NotSelect { .. } = err {
                        return Ok(DebugOutcome::PolicyViolation { attempts: attempt, message: failure.message });
                    }
                    last_error = failure.message;
                    self.push_error(transcript, &candidate.sql, &last_error)?;
                    continue;
                }
            };
            let outcome = session.execute(&query).await;
            events.emit(EventKind::ExecutionResult { round, attempt, outcome: outcome.clone() });
            match &outcome {
                ExecutionOutcome::Success(_) => {
                    return Ok(DebugOutcome::Success { candidate, query, outcome, attempts: attempt });
                }
                ExecutionOutcome::Failure(failure) => {
                    last_error = failure.message.clone();
                    self.push_error(transcript, &candidate.sql, &last_error)?;
                }
            }
        }
        Ok(DebugOutcome::Exhausted { attempts: self.limits.n_reasoner_attempts, last_error })
    }

    fn push_error(&self, transcript: &mut Vec<ChatMessage>, sql: &str, error: &str) -> Result<(), PromptError> {
        let text = self.prompts.reasoner.render("execution_error", &[("sql", sql), ("error", error)])?;
        transcript.push(ChatMessage::user(text));
        Ok(())
    }

    /// Asks the critic to review an executed candidate. Returns the verdict
    /// and the raw completion.
    pub async fn critique(
        &self,
        intent: &str,
        candidate: &SqlCandidate,
        preview: &ResultPreview,
    ) -> Result<(CritiqueVerdict, String), ReasonError> {
        let system = self.prompts.critic.render("system", &[("schema", &self.schema.rendered)])?;
        let columns = preview
            .columns
            .iter()
            .map(|c| if c.data_type.is_empty() { c.name.clone() } else { format!("{} ({})", c.name, c.data_type) })
            .collect::<Vec<_>>()
            .join(", ");
        let mut table = preview.to_markdown();
        if preview.truncated {
            table.push_str("(more rows not shown)\n");
        }
        let review = self.prompts.critic.render(
            "review",
            &[("intent", intent), ("sql", &candidate.sql), ("columns", &columns), ("preview", &table)],
        )?;
        let reply = self.gateway.complete(Role::Critic, &[ChatMessage::system(system), ChatMessage::user(review)]).await?;
        let verdict = match extract(&reply.text, &ExtractionTarget::critique(), Some(self.chooser.as_ref())).await {
            Ok((_, parsed)) => parsed
                .into_record()
                .and_then(|record| CritiqueVerdict::from_record(&record))
                .unwrap_or_else(CritiqueVerdict::unparsable),
            Err(_) => CritiqueVerdict::unparsable(),
        };
        Ok((verdict, reply.text))
    }

    pub async fn run(
        &self,
        intent: &str,
        session: &SandboxSession,
        events: &EventEmitter,
    ) -> Result<SqlAgentResult, AgentError> {
        let mut state = RunState { transcript: self.initial_transcript(intent)?, attempts: Vec::new(), last: None };

        for round in 1..=self.limits.m_critic_rounds {
            let debug = self.self_debug(&mut state.transcript, session, round, events).await?;
            let (candidate, query, outcome) = match debug {
                DebugOutcome::Success { candidate, query, outcome, attempts } => {
                    state.attempts.push(attempts);
                    (candidate, query, outcome)
                }
                DebugOutcome::Exhausted { attempts, last_error } => {
                    state.attempts.push(attempts);
                    return Ok(state.finish(AgentStatus::ExhaustedReasoner, Some(last_error), false, false));
                }
                DebugOutcome::PolicyViolation { attempts, message } => {
                    state.attempts.push(attempts);
                    return Ok(state.finish(AgentStatus::PolicyViolation, Some(message), false, false));
                }
                DebugOutcome::Gateway { attempts, error } => {
                    state.attempts.push(attempts);
                    let timed_out = error.is_timeout();
                    return Ok(state.finish(AgentStatus::GatewayFailure, Some(error.to_string()), false, timed_out));
                }
            };

            let preview = outcome.preview().cloned().expect("self-debug returns successful outcomes");
            let critique = self.critique(intent, &candidate, &preview).await;
            state.last = Some((candidate, query, outcome));
            let (verdict, review) = match critique {
                Ok(pair) => pair,
                Err(ReasonError::Gateway(error)) => {
                    events.emit(EventKind::Error { stage: "critique".into(), message: error.to_string() });
                    let timed_out = error.is_timeout();
                    return Ok(state.finish(AgentStatus::GatewayFailure, Some(error.to_string()), false, timed_out));
                }
                Err(ReasonError::Prompt(err)) => return Err(err.into()),
                Err(ReasonError::NoSqlBlockFound { .. }) => unreachable!("critique does not extract SQL"),
            };
            events.emit(EventKind::Critique {
                round,
                decision: if verdict.is_approved() { "approved".into() } else { "revise".into() },
                issues: verdict.issue_records(),
            });

            if verdict.is_approved() {
                let note = self.prompts.reasoner.render("critic_approved", &[("review", &review)])?;
                state.transcript.push(ChatMessage::user(note));
                return Ok(state.finish(AgentStatus::Answered, None, true, false));
            }
            let sql = state.last.as_ref().map(|(c, _, _)| c.sql.clone()).unwrap_or_default();
            let feedback = self.prompts.reasoner.render(
                "critic_feedback",
                &[("sql", &sql), ("review", &review), ("feedback", &verdict.feedback_text())],
            )?;
            state.transcript.push(ChatMessage::user(feedback));
        }

        Ok(state.finish(AgentStatus::ExhaustedCritic, None, false, false))
    }
}

struct RunState {
    transcript: Vec<ChatMessage>,
    attempts: Vec<u32>,
    last: Option<(SqlCandidate, ValidatedSelect, ExecutionOutcome)>,
}

impl RunState {
    fn finish(self, status: AgentStatus, last_error: Option<String>, approved: bool, timed_out: bool) -> SqlAgentResult {
        let (candidate, final_query, outcome) = match self.last {
            Some((c, q, o)) => (Some(c), Some(q), Some(o)),
            None => (None, None, None),
        };
        SqlAgentResult {
            status,
            final_query,
            outcome,
            candidate,
            approved,
            transcript: self.transcript,
            rounds_used: self.attempts.len() as u32,
            attempts_used_per_round: self.attempts,
            last_error,
            timed_out,
        }
    }
}
