//! Provider selection for the server and CLI.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use serde::Deserialize;

use parley_core::gateway::{
    Fixtures, Gateway, HttpProvider, MockProvider, Provider, ProviderConfig, DEFAULT_RETRY_BUDGET,
    DEFAULT_TIMEOUT_MS, ENV_API_KEY,
};
use parley_core::samples;

/// Contents of a `--provider-config` file.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderSettings {
    /// Scripted replies; the bundled demo set when `fixtures` is absent.
    Mock { fixtures: Option<PathBuf> },
    /// A chat-completion endpoint. The API key is read from the environment
    /// only.
    Http {
        base_url: String,
        model_name: String,
        timeout_ms: Option<u64>,
        retry_budget: Option<u32>,
    },
}

impl ProviderSettings {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading provider config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing provider config {}", path.display()))
    }

    /// `--provider-config` when given, otherwise the environment.
    pub fn resolve(path: Option<&Path>) -> anyhow::Result<Self> {
        if let Some(p) = path {
            return ProviderSettings::load(p);
        }
        match ProviderConfig::from_env() {
            Ok(c) => Ok(ProviderSettings::Http {
                base_url: c.base_url,
                model_name: c.model_name,
                timeout_ms: Some(c.timeout_ms),
                retry_budget: Some(c.retry_budget),
            }),
            Err(e) => bail!("no provider configured: {e}; pass --provider-config or set the environment"),
        }
    }

    pub fn http_config(&self) -> Option<ProviderConfig> {
        match self {
            ProviderSettings::Mock { .. } => None,
            ProviderSettings::Http {
                base_url,
                model_name,
                timeout_ms,
                retry_budget,
            } => Some(ProviderConfig {
                base_url: base_url.clone(),
                api_key: std::env::var(ENV_API_KEY).ok(),
                model_name: model_name.clone(),
                timeout_ms: timeout_ms.unwrap_or(DEFAULT_TIMEOUT_MS),
                retry_budget: retry_budget.unwrap_or(DEFAULT_RETRY_BUDGET),
            }),
        }
    }

    pub fn provider(&self) -> anyhow::Result<Arc<dyn Provider>> {
        Ok(match self {
            ProviderSettings::Mock { fixtures } => {
                let fixtures = match fixtures {
                    Some(p) => Fixtures::load(p).with_context(|| format!("loading fixtures {}", p.display()))?,
                    None => samples::demo_fixtures(),
                };
                Arc::new(MockProvider::new(fixtures))
            }
            ProviderSettings::Http { .. } => {
                Arc::new(HttpProvider::new(self.http_config().expect("http settings")))
            }
        })
    }

    pub fn gateway(&self) -> anyhow::Result<Gateway> {
        let gateway = Gateway::new(self.provider()?);
        Ok(match self.http_config() {
            Some(c) => gateway.with_retry_budget(c.retry_budget),
            None => gateway,
        })
    }
}
