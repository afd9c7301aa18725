//! The single mediation point for inference calls.
//!
//! A [`Gateway`] renders a versioned [`PromptTemplate`], redacts the rendered
//! text, sends it through a [`Provider`], parses the reply as JSON and runs a
//! caller-supplied validator. Validation failures are retried with a
//! corrective instruction appended, up to `retry_budget` extra attempts.
//! Transport failures and timeouts are returned immediately. Every attempt is
//! recorded in the [`RequestLog`].

mod http;
mod mock;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, Mutex};

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::catalog::TEMPLATES_JSON;
use crate::redaction::Redactor;

pub use http::HttpProvider;
pub use mock::{Fault, FixtureError, Fixtures, MockProvider, RecordingProvider, ScriptedResponse};

pub const DEFAULT_RETRY_BUDGET: u32 = 2;
pub const DEFAULT_TIMEOUT_MS: u64 = 60_000;

pub type Bindings = BTreeMap<String, String>;

/// Builds a [`Bindings`] map from `(name, value)` pairs.
pub fn bindings<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Bindings {
    pairs
        .into_iter()
        .map(|(k, v)| (k.into(), v.into()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub system_text: String,
    pub user_text: String,
    pub output_schema: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

static PLACEHOLDER: Lazy<Regex> = Lazy::new(|| Regex::new(r"\{\{([a-z_]+)\}\}").unwrap());

impl PromptTemplate {
    pub fn placeholders(&self) -> BTreeSet<String> {
        PLACEHOLDER
            .captures_iter(&self.system_text)
            .chain(PLACEHOLDER.captures_iter(&self.user_text))
            .map(|c| c[1].to_string())
            .collect()
    }

    /// Renders `(system, user)`. Every placeholder must be bound.
    pub fn render(&self, bindings: &Bindings) -> Result<(String, String), GatewayError> {
        if let Some(missing) = self.placeholders().into_iter().find(|p| !bindings.contains_key(p)) {
            return Err(GatewayError::MissingBinding {
                template_id: self.template_id.clone(),
                name: missing,
            });
        }
        let fill = |text: &str| {
            PLACEHOLDER
                .replace_all(text, |c: &regex::Captures| bindings[&c[1]].clone())
                .into_owned()
        };
        let user = format!(
            "{}\n\nRespond with a single JSON object of this shape and nothing else:\n{}",
            fill(&self.user_text),
            self.output_schema
        );
        Ok((fill(&self.system_text), user))
    }
}

#[derive(Debug, Clone)]
pub struct TemplateSet {
    version: u32,
    templates: BTreeMap<String, PromptTemplate>,
}

#[derive(Deserialize)]
struct TemplateFile {
    version: u32,
    templates: Vec<PromptTemplate>,
}

impl TemplateSet {
    pub fn bundled() -> Self {
        TemplateSet::from_json(TEMPLATES_JSON).expect("bundled templates.json")
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        let file: TemplateFile = serde_json::from_str(json)?;
        Ok(TemplateSet {
            version: file.version,
            templates: file
                .templates
                .into_iter()
                .map(|t| (t.template_id.clone(), t))
                .collect(),
        })
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn get(&self, template_id: &str) -> Option<&PromptTemplate> {
        self.templates.get(template_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct ImageAttachment {
    pub media_type: String,
    pub data: Vec<u8>,
}

impl fmt::Debug for ImageAttachment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImageAttachment")
            .field("media_type", &self.media_type)
            .field("bytes", &self.data.len())
            .finish()
    }
}

/// What a provider receives for one attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderRequest {
    pub template_id: String,
    pub system: String,
    pub user: String,
    pub images: Vec<ImageAttachment>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub attempt: u32,
}

impl ProviderRequest {
    pub fn payload_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.template_id.as_bytes());
        hasher.update([0]);
        hasher.update(self.system.as_bytes());
        hasher.update([0]);
        hasher.update(self.user.as_bytes());
        for image in &self.images {
            hasher.update([0]);
            hasher.update(image.media_type.as_bytes());
            hasher.update(Sha256::digest(&image.data));
        }
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("provider timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("no fixture for template {0:?}")]
    UnknownTemplate(String),
}

pub trait Provider: Send + Sync {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError>;

    /// Short identifier for logs.
    fn name(&self) -> &str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptOutcome {
    Ok,
    SchemaFail,
    TransportFail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub template_id: String,
    pub rendered_payload_hash: String,
    pub redaction_checked: bool,
    pub outcome: AttemptOutcome,
}

/// Append-only attempt log shared by concurrent callers.
#[derive(Debug, Default)]
pub struct RequestLog {
    entries: Mutex<Vec<LogEntry>>,
}

impl RequestLog {
    fn push(&self, entry: LogEntry) {
        self.entries.lock().unwrap().push(entry);
    }

    pub fn entries(&self) -> Vec<LogEntry> {
        self.entries.lock().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_json_lines(&self) -> String {
        self.entries
            .lock()
            .unwrap()
            .iter()
            .map(|e| serde_json::to_string(e).unwrap() + "\n")
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("template {template_id} has no binding for {{{{{name}}}}}")]
    MissingBinding { template_id: String, name: String },
    #[error("{template_id}: output failed validation after {attempts} attempt(s): {reason}")]
    SchemaValidationFailed {
        template_id: String,
        attempts: u32,
        reason: String,
    },
    #[error("{template_id}: transport failure: {message}")]
    TransportFailed { template_id: String, message: String },
    #[error("{template_id}: provider timed out")]
    Timeout { template_id: String },
}

/// Provider connection settings. The API key is read from the environment
/// and never serialized.
#[derive(Clone, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub base_url: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub model_name: String,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_budget")]
    pub retry_budget: u32,
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_MS
}

fn default_budget() -> u32 {
    DEFAULT_RETRY_BUDGET
}

pub const ENV_BASE_URL: &str = "PARLEY_BASE_URL";
pub const ENV_API_KEY: &str = "PARLEY_API_KEY";
pub const ENV_MODEL: &str = "PARLEY_MODEL";
pub const ENV_TIMEOUT_MS: &str = "PARLEY_TIMEOUT_MS";
pub const ENV_RETRY_BUDGET: &str = "PARLEY_RETRY_BUDGET";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("environment variable {0} is not set")]
    Missing(&'static str),
    #[error("environment variable {name} has invalid value {value:?}")]
    Invalid { name: &'static str, value: String },
}

impl ProviderConfig {
    /// Reads settings through `lookup` (normally `std::env::var`).
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let base_url = lookup(ENV_BASE_URL).ok_or(ConfigError::Missing(ENV_BASE_URL))?;
        let model_name = lookup(ENV_MODEL).ok_or(ConfigError::Missing(ENV_MODEL))?;
        let parse = |name: &'static str, default: u64| -> Result<u64, ConfigError> {
            match lookup(name) {
                None => Ok(default),
                Some(v) => v.trim().parse().map_err(|_| ConfigError::Invalid { name, value: v }),
            }
        };
        Ok(ProviderConfig {
            base_url,
            api_key: lookup(ENV_API_KEY),
            model_name,
            timeout_ms: parse(ENV_TIMEOUT_MS, DEFAULT_TIMEOUT_MS)?,
            retry_budget: parse(ENV_RETRY_BUDGET, u64::from(DEFAULT_RETRY_BUDGET))? as u32,
        })
    }

    pub fn from_env() -> Result<Self, ConfigError> {
        ProviderConfig::from_lookup(|k| std::env::var(k).ok())
    }
}

impl fmt::Debug for ProviderConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProviderConfig")
            .field("base_url", &self.base_url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("model_name", &self.model_name)
            .field("timeout_ms", &self.timeout_ms)
            .field("retry_budget", &self.retry_budget)
            .finish()
    }
}

const CORRECTIVE: &str = "Your previous reply could not be used";

/// Pulls a JSON value out of a model reply, tolerating code fences and
/// surrounding prose.
pub fn extract_json(reply: &str) -> Result<Value, String> {
    let trimmed = reply.trim();
    let unfenced = trimmed
        .strip_prefix("```json")
        .or_else(|| trimmed.strip_prefix("```"))
        .and_then(|s| s.trim_end().strip_suffix("```"))
        .unwrap_or(trimmed)
        .trim();
    match serde_json::from_str(unfenced) {
        Ok(v) => Ok(v),
        Err(first) => {
            let (Some(start), Some(end)) = (unfenced.find('{'), unfenced.rfind('}')) else {
                return Err(format!("reply is not JSON: {first}"));
            };
            if start >= end {
                return Err(format!("reply is not JSON: {first}"));
            }
            serde_json::from_str(&unfenced[start..=end]).map_err(|e| format!("reply is not JSON: {e}"))
        }
    }
}

pub struct Gateway {
    templates: TemplateSet,
    provider: Arc<dyn Provider>,
    retry_budget: u32,
    redactor: Redactor,
    log: RequestLog,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("provider", &self.provider.name())
            .field("retry_budget", &self.retry_budget)
            .field("attempts_logged", &self.log.len())
            .finish()
    }
}

impl Gateway {
    pub fn new(provider: Arc<dyn Provider>) -> Self {
        Gateway {
            templates: TemplateSet::bundled(),
            provider,
            retry_budget: DEFAULT_RETRY_BUDGET,
            redactor: Redactor::bundled(),
            log: RequestLog::default(),
        }
    }

    pub fn with_retry_budget(mut self, budget: u32) -> Self {
        self.retry_budget = budget;
        self
    }

    pub fn with_templates(mut self, templates: TemplateSet) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_redactor(mut self, redactor: Redactor) -> Self {
        self.redactor = redactor;
        self
    }

    pub fn retry_budget(&self) -> u32 {
        self.retry_budget
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn log(&self) -> &RequestLog {
        &self.log
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub fn invoke<T>(
        &self,
        template_id: &str,
        bindings: &Bindings,
        validate: impl Fn(Value) -> Result<T, String>,
    ) -> Result<T, GatewayError> {
        self.invoke_with_images(template_id, bindings, Vec::new(), validate)
    }

    pub fn invoke_with_images<T>(
        &self,
        template_id: &str,
        bindings: &Bindings,
        images: Vec<ImageAttachment>,
        validate: impl Fn(Value) -> Result<T, String>,
    ) -> Result<T, GatewayError> {
        let template = self
            .templates
            .get(template_id)
            .ok_or_else(|| GatewayError::UnknownTemplate(template_id.to_string()))?;
        let (system, user) = template.render(bindings)?;
        let system = self.redactor.redact(&system).0;
        let user = self.redactor.redact(&user).0;

        let mut last_reason = String::new();
        for attempt in 0..=self.retry_budget {
            let user_text = if attempt == 0 {
                user.clone()
            } else {
                let reason = self.redactor.redact(&last_reason).0;
                format!("{user}\n\n{CORRECTIVE}: {reason}. Reply again with only the JSON object.")
            };
            let request = ProviderRequest {
                template_id: template_id.to_string(),
                system: system.clone(),
                user: user_text,
                images: images.clone(),
                temperature: template.temperature,
                max_output_tokens: template.max_output_tokens,
                attempt,
            };
            let mut entry = LogEntry {
                template_id: template_id.to_string(),
                rendered_payload_hash: request.payload_hash(),
                redaction_checked: !self.redactor.finds_sensitive(&request.system)
                    && !self.redactor.finds_sensitive(&request.user),
                outcome: AttemptOutcome::Ok,
            };

            let reply = match self.provider.complete(&request) {
                Ok(reply) => reply,
                Err(err) => {
                    entry.outcome = AttemptOutcome::TransportFail;
                    self.log.push(entry);
                    tracing::warn!(template_id, attempt, error = %err, "provider call failed");
                    return Err(match err {
                        ProviderError::Timeout => GatewayError::Timeout {
                            template_id: template_id.to_string(),
                        },
                        ProviderError::Transport(message) => GatewayError::TransportFailed {
                            template_id: template_id.to_string(),
                            message,
                        },
                        ProviderError::UnknownTemplate(t) => GatewayError::UnknownTemplate(t),
                    });
                }
            };

            match extract_json(&reply).and_then(&validate) {
                Ok(value) => {
                    self.log.push(entry);
                    return Ok(value);
                }
                Err(reason) => {
                    entry.outcome = AttemptOutcome::SchemaFail;
                    self.log.push(entry);
                    tracing::debug!(template_id, attempt, %reason, "schema validation failed");
                    last_reason = reason;
                }
            }
        }
        Err(GatewayError::SchemaValidationFailed {
            template_id: template_id.to_string(),
            attempts: self.retry_budget + 1,
            reason: last_reason,
        })
    }
}
