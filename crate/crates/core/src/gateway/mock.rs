use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Provider, ProviderError, ProviderRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    Timeout,
    Transport,
    /// A reply that is not JSON at all.
    Malformed,
}

/// One scripted provider reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedResponse {
    /// Sent back as the compact JSON encoding of the value.
    Json(Value),
    /// Sent back verbatim.
    Text(String),
    Fault(Fault),
}

/// Scripted replies keyed by template id. The n-th call for a template gets
/// the n-th reply; once the sequence is exhausted the last reply repeats.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fixtures(pub BTreeMap<String, Vec<ScriptedResponse>>);

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("cannot read fixtures: {0}")]
    Io(#[from] std::io::Error),
    #[error("fixtures do not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("template {0:?} has an empty reply sequence")]
    EmptySequence(String),
}

impl Fixtures {
    pub fn single(template_id: &str, reply: Value) -> Self {
        Fixtures::sequence(template_id, vec![ScriptedResponse::Json(reply)])
    }

    pub fn sequence(template_id: &str, replies: Vec<ScriptedResponse>) -> Self {
        let mut f = Fixtures::default();
        f.set(template_id, replies);
        f
    }

    pub fn set(&mut self, template_id: &str, replies: Vec<ScriptedResponse>) -> &mut Self {
        self.0.insert(template_id.to_string(), replies);
        self
    }

    pub fn push(&mut self, template_id: &str, reply: ScriptedResponse) -> &mut Self {
        self.0.entry(template_id.to_string()).or_default().push(reply);
        self
    }

    pub fn from_json(json: &str) -> Result<Self, FixtureError> {
        let fixtures: Fixtures = serde_json::from_str(json)?;
        if let Some((id, _)) = fixtures.0.iter().find(|(_, seq)| seq.is_empty()) {
            return Err(FixtureError::EmptySequence(id.clone()));
        }
        Ok(fixtures)
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        Fixtures::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("fixtures serialize")
    }
}

/// Deterministic fixture-driven provider. Also keeps every request it saw so
/// tests can audit outbound payloads.
#[derive(Debug, Default)]
pub struct MockProvider {
    fixtures: Fixtures,
    cursors: Mutex<HashMap<String, usize>>,
    requests: Mutex<Vec<ProviderRequest>>,
}

impl MockProvider {
    pub fn new(fixtures: Fixtures) -> Self {
        MockProvider {
            fixtures,
            ..Default::default()
        }
    }

    pub fn requests(&self) -> Vec<ProviderRequest> {
        self.requests.lock().unwrap().clone()
    }

    pub fn calls_for(&self, template_id: &str) -> usize {
        self.cursors
            .lock()
            .unwrap()
            .get(template_id)
            .copied()
            .unwrap_or(0)
    }
}

impl Provider for MockProvider {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        self.requests.lock().unwrap().push(request.clone());
        let seq = self
            .fixtures
            .0
            .get(&request.template_id)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| ProviderError::UnknownTemplate(request.template_id.clone()))?;
        let index = {
            let mut cursors = self.cursors.lock().unwrap();
            let cursor = cursors.entry(request.template_id.clone()).or_insert(0);
            let i = *cursor;
            *cursor += 1;
            i
        };
        match &seq[index.min(seq.len() - 1)] {
            ScriptedResponse::Json(v) => Ok(serde_json::to_string(v).expect("value serializes")),
            ScriptedResponse::Text(t) => Ok(t.clone()),
            ScriptedResponse::Fault(Fault::Timeout) => Err(ProviderError::Timeout),
            ScriptedResponse::Fault(Fault::Transport) => {
                Err(ProviderError::Transport("scripted transport fault".into()))
            }
            ScriptedResponse::Fault(Fault::Malformed) => Ok("{\"truncated\": [1, 2".into()),
        }
    }

    fn name(&self) -> &str {
        "mock"
    }
}

/// Wraps a live provider and captures its replies as fixtures.
pub struct RecordingProvider {
    inner: Arc<dyn Provider>,
    recorded: Mutex<Fixtures>,
}

impl RecordingProvider {
    pub fn new(inner: Arc<dyn Provider>) -> Self {
        RecordingProvider {
            inner,
            recorded: Mutex::new(Fixtures::default()),
        }
    }

    pub fn fixtures(&self) -> Fixtures {
        self.recorded.lock().unwrap().clone()
    }
}

impl Provider for RecordingProvider {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        let result = self.inner.complete(request);
        let scripted = match &result {
            Ok(text) => match super::extract_json(text) {
                Ok(v) => ScriptedResponse::Json(v),
                Err(_) => ScriptedResponse::Text(text.clone()),
            },
            Err(ProviderError::Timeout) => ScriptedResponse::Fault(Fault::Timeout),
            Err(_) => ScriptedResponse::Fault(Fault::Transport),
        };
        self.recorded
            .lock()
            .unwrap()
            .push(&request.template_id, scripted);
        result
    }

    fn name(&self) -> &str {
        "recording"
    }
}
