//! Application configuration: a TOML file plus `ERPCHAT_` environment
//! overrides.
//!
//! An override names a key path with `__` between segments, for example
//! `ERPCHAT_AGENT__M_CRITIC_ROUNDS=2` or `ERPCHAT_LLM__ROLES__REASONER__MODEL=qwen2.5:7b`.
//! Values are read as TOML scalars when possible and as strings otherwise.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::agent::AgentLimits;
use crate::db::{Database, DatabaseError};
use crate::fixture;
use crate::llm::{ChatBackend, Gateway, HttpChatBackend, LlmError, Role, RoleTable, ScriptedBackend};
use crate::orchestrator::{Assistant, OrchestratorError};
use crate::prompts::{PromptError, PromptSet};
use crate::sandbox::{Dialect, Sandbox, SandboxConfig};
use crate::schema::{IntrospectOptions, SchemaDocument};

pub const ENV_PREFIX: &str = "ERPCHAT_";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Database(#[from] DatabaseError),
    #[error(transparent)]
    Fixture(#[from] fixture::FixtureError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatabaseSection {
    /// Database file. Created from `seed` when missing; without a path a
    /// private temporary copy of the seed is used.
    pub path: Option<PathBuf>,
    /// SQL script used to create the database; the bundled fixture by default.
    pub seed: Option<PathBuf>,
    pub dialect: Dialect,
}

impl Default for DatabaseSection {
    fn default() -> Self {
        DatabaseSection { path: None, seed: None, dialect: Dialect::Sqlite }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaSection {
    /// Semantic description file; the bundled one by default.
    pub semantic: Option<PathBuf>,
    pub sample_limit: usize,
    pub sensitive_columns: Vec<String>,
}

impl Default for SchemaSection {
    fn default() -> Self {
        SchemaSection { semantic: None, sample_limit: crate::schema::DEFAULT_SAMPLE_LIMIT, sensitive_columns: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub n_reasoner_attempts: u32,
    pub m_critic_rounds: u32,
    pub preview_limit: usize,
    pub statement_timeout_secs: u64,
}

impl Default for AgentSection {
    fn default() -> Self {
        let limits = AgentLimits::default();
        let sandbox = SandboxConfig::default();
        AgentSection {
            n_reasoner_attempts: limits.n_reasoner_attempts,
            m_critic_rounds: limits.m_critic_rounds,
            preview_limit: sandbox.preview_limit,
            statement_timeout_secs: sandbox.statement_timeout.as_secs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Http,
    Scripted,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoleSection {
    pub model: Option<String>,
    pub endpoint: Option<String>,
    pub temperature: Option<f32>,
    pub timeout_secs: Option<u64>,
    pub context_window_tokens: Option<usize>,
    pub max_output_tokens: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub backend: BackendKind,
    /// Chat-completions URL shared by all roles unless a role sets its own.
    pub endpoint: String,
    /// Name of the environment variable holding a bearer token, if any.
    pub api_key_env: Option<String>,
    /// Directory of scripted replies, one sub-directory per role.
    pub script_dir: Option<PathBuf>,
    pub timeout_secs: Option<u64>,
    pub roles: BTreeMap<String, RoleSection>,
}

impl Default for LlmSection {
    fn default() -> Self {
        LlmSection {
            backend: BackendKind::Http,
            endpoint: "http://127.0.0.1:11434/v1/chat/completions".into(),
            api_key_env: None,
            script_dir: None,
            timeout_secs: None,
            roles: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub bind: String,
    pub storage_dir: PathBuf,
    pub prompt_dir: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServiceSection {
    fn default() -> Self {
        ServiceSection { bind: "127.0.0.1:8080".into(), storage_dir: "data/sessions".into(), prompt_dir: None, ui_dir: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub database: DatabaseSection,
    pub schema: SchemaSection,
    pub agent: AgentSection,
    pub llm: LlmSection,
    pub service: ServiceSection,
}

impl AppConfig {
    /// Reads `path` (if given) and applies overrides from `env`. Relative
    /// paths in the file are resolved against the file's directory.
    pub fn load<I>(path: Option<&Path>, env: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let (mut tree, base) = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })?;
                let tree: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Invalid(e.to_string()))?;
                (tree, path.parent().map(Path::to_path_buf))
            }
            None => (toml::Table::new(), None),
        };
        apply_env(&mut tree, env)?;
        let mut config: AppConfig =
            toml::Value::Table(tree).try_into().map_err(|e: toml::de::Error| ConfigError::Invalid(e.to_string()))?;
        if let Some(base) = base {
            config.resolve_paths(&base);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: AppConfig = toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            self.database.path.as_mut(),
            self.database.seed.as_mut(),
            self.schema.semantic.as_mut(),
            self.llm.script_dir.as_mut(),
            self.service.prompt_dir.as_mut(),
            self.service.ui_dir.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.service.storage_dir);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.limits()?;
        if self.agent.preview_limit == 0 {
            return Err(ConfigError::Invalid("agent.preview_limit must be positive".into()));
        }
        for name in self.llm.roles.keys() {
            if Role::parse(name).is_none() {
                return Err(ConfigError::Invalid(format!("unknown role `{name}` in llm.roles")));
            }
        }
        if self.llm.backend == BackendKind::Scripted && self.llm.script_dir.is_none() {
            return Err(ConfigError::Invalid("llm.script_dir is required for the scripted backend".into()));
        }
        self.role_table()?;
        Ok(())
    }

    pub fn limits(&self) -> Result<AgentLimits, ConfigError> {
        AgentLimits::new(self.agent.n_reasoner_attempts, self.agent.m_critic_rounds).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn sandbox_config(&self) -> SandboxConfig {
        SandboxConfig {
            dialect: self.database.dialect,
            preview_limit: self.agent.preview_limit,
            statement_timeout: Duration::from_secs(self.agent.statement_timeout_secs),
        }
    }

    pub fn introspect_options(&self) -> Result<IntrospectOptions, ConfigError> {
        let options = IntrospectOptions { sample_limit: self.schema.sample_limit, ..IntrospectOptions::default() };
        options
            .with_sensitive_patterns(&self.schema.sensitive_columns)
            .map_err(|e| ConfigError::Invalid(format!("schema.sensitive_columns: {e}")))
    }

    pub fn role_table(&self) -> Result<RoleTable, ConfigError> {
        let mut table = RoleTable::default();
        if let Some(secs) = self.llm.timeout_secs {
            table = table.with_timeout(Duration::from_secs(secs));
        }
        for (name, section) in &self.llm.roles {
            let role = Role::parse(name).ok_or_else(|| ConfigError::Invalid(format!("unknown role `{name}`")))?;
            table.update(role, |cfg| {
                if let Some(model) = &section.model {
                    cfg.model_id = model.clone();
                }
                if let Some(t) = section.temperature {
                    cfg.temperature = t;
                }
                if let Some(secs) = section.timeout_secs {
                    cfg.request_timeout = Duration::from_secs(secs);
                }
                if let Some(n) = section.context_window_tokens {
                    cfg.context_window_tokens = n;
                }
                if let Some(n) = section.max_output_tokens {
                    cfg.max_output_tokens = n;
                }
            })?;
        }
        Ok(table)
    }

    pub fn backend(&self) -> Result<Arc<dyn ChatBackend>, ConfigError> {
        match self.llm.backend {
            BackendKind::Scripted => {
                let dir = self.llm.script_dir.as_ref().expect("validated");
                let backend = ScriptedBackend::from_dir(dir)
                    .map_err(|e| ConfigError::Read { path: dir.display().to_string(), message: e.to_string() })?;
                Ok(Arc::new(backend))
            }
            BackendKind::Http => {
                let mut backend = HttpChatBackend::new(self.llm.endpoint.clone());
                for (name, section) in &self.llm.roles {
                    if let (Some(role), Some(endpoint)) = (Role::parse(name), &section.endpoint) {
                        backend = backend.with_role_endpoint(role, endpoint.clone());
                    }
                }
                if let Some(var) = &self.llm.api_key_env {
                    if let Ok(key) = std::env::var(var) {
                        backend = backend.with_api_key(key);
                    }
                }
                Ok(Arc::new(backend))
            }
        }
    }

    pub fn prompts(&self) -> Result<PromptSet, ConfigError> {
        Ok(match &self.service.prompt_dir {
            Some(dir) => PromptSet::load_dir(dir)?,
            None => PromptSet::builtin(),
        })
    }

    pub fn open_database(&self) -> Result<Database, ConfigError> {
        let seed = match &self.database.seed {
            Some(path) => std::fs::read_to_string(path)
                .map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })?,
            None => fixture::SEED.to_string(),
        };
        Ok(match &self.database.path {
            Some(path) => Database::open_or_seed(&seed, path)?,
            None => Database::temporary(&seed)?,
        })
    }

    pub fn schema_document(&self, db: &Database) -> Result<SchemaDocument, ConfigError> {
        let semantic = match &self.schema.semantic {
            Some(path) => std::fs::read_to_string(path)
                .map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })?,
            None => fixture::SEMANTIC.to_string(),
        };
        Ok(fixture::document_from(db, &semantic, &self.introspect_options()?)?)
    }

    /// Assembles an assistant with the configured backend.
    pub fn build_assistant(&self) -> Result<Assistant, ConfigError> {
        self.build_assistant_with(self.backend()?)
    }

    pub fn build_assistant_with(&self, backend: Arc<dyn ChatBackend>) -> Result<Assistant, ConfigError> {
        let db = self.open_database()?;
        let schema = Arc::new(self.schema_document(&db)?);
        let gateway = Gateway::new(backend, self.role_table()?);
        Ok(Assistant::new(
            gateway,
            Arc::new(self.prompts()?),
            schema,
            Sandbox::new(db, self.sandbox_config()),
            self.limits()?,
        )?)
    }
}

/// One entry of an evaluation model list. Fields override the base
/// configuration; `model` sets the dialogue, reasoner and critic models.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelEntry {
    pub label: String,
    pub model: Option<String>,
    pub backend: Option<BackendKind>,
    pub endpoint: Option<String>,
    pub script_dir: Option<PathBuf>,
    pub roles: BTreeMap<String, RoleSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelsFile {
    #[serde(default)]
    model: Vec<ModelEntry>,
}

/// Reads a `[[model]]` list. Relative script directories resolve against
/// the file's directory.
pub fn load_models(path: &Path) -> Result<Vec<ModelEntry>, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })?;
    let file: ModelsFile = toml::from_str(&text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    if file.model.is_empty() {
        return Err(ConfigError::Invalid(format!("{} lists no models", path.display())));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut labels = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(file.model.len());
    for mut entry in file.model {
        if entry.label.trim().is_empty() {
            return Err(ConfigError::Invalid("model entry without a label".into()));
        }
        if !labels.insert(entry.label.clone()) {
            return Err(ConfigError::Invalid(format!("duplicate model label `{}`", entry.label)));
        }
        if let Some(dir) = entry.script_dir.as_mut() {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        out.push(entry);
    }
    Ok(out)
}

impl AppConfig {
    /// This configuration with a model entry applied on top.
    pub fn for_model(&self, entry: &ModelEntry) -> Result<AppConfig, ConfigError> {
        let mut config = self.clone();
        if let Some(model) = &entry.model {
            for role in [Role::Dialogue, Role::Reasoner, Role::Critic] {
                config.llm.roles.entry(role.as_str().to_string()).or_default().model = Some(model.clone());
            }
        }
        for (name, section) in &entry.roles {
            let slot = config.llm.roles.entry(name.clone()).or_default();
            let merged = RoleSection {
                model: section.model.clone().or(slot.model.take()),
                endpoint: section.endpoint.clone().or(slot.endpoint.take()),
                temperature: section.temperature.or(slot.temperature),
                timeout_secs: section.timeout_secs.or(slot.timeout_secs),
                context_window_tokens: section.context_window_tokens.or(slot.context_window_tokens),
                max_output_tokens: section.max_output_tokens.or(slot.max_output_tokens),
            };
            *slot = merged;
        }
        if let Some(backend) = entry.backend {
            config.llm.backend = backend;
        }
        if let Some(endpoint) = &entry.endpoint {
            config.llm.endpoint = endpoint.clone();
        }
        if let Some(dir) = &entry.script_dir {
            config.llm.script_dir = Some(dir.clone());
            if entry.backend.is_none() {
                config.llm.backend = BackendKind::Scripted;
            }
        }
        config.validate()?;
        Ok(config)
    }
}

/// Overrides from the process environment.
pub fn env_overrides() -> Vec<(String, String)> {
    std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect()
}

fn apply_env<I>(tree: &mut toml::Table, env: I) -> Result<(), ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    for (key, raw) in env {
        let Some(path) = key.strip_prefix(ENV_PREFIX) else { continue };
        let segments: Vec<String> = path.split("__").map(|s| s.to_ascii_lowercase()).collect();
        if segments.iter().any(String::is_empty) {
            return Err(ConfigError::Invalid(format!("malformed override {key}")));
        }
        let value = parse_scalar(&raw);
        let (last, parents) = segments.split_last().expect("non-empty");
        let mut table = &mut *tree;
        for segment in parents {
            let entry = table.entry(segment.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            table = match entry {
                toml::Value::Table(t) => t,
                _ => return Err(ConfigError::Invalid(format!("override {key} crosses a non-table value"))),
            };
        }
        table.insert(last.clone(), value);
    }
    Ok(())
}

fn parse_scalar(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    match probe.parse::<toml::Table>() {
        Ok(mut t) => match t.remove("v") {
            Some(v @ (toml::Value::Integer(_) | toml::Value::Float(_) | toml::Value::Boolean(_) | toml::Value::Array(_))) => v,
            _ => toml::Value::String(raw.to_string()),
        },
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
