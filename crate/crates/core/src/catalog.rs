//! Static catalogs bundled with the service.
//!
//! Every catalog is a versioned JSON data file under `data/`, embedded at
//! compile time and served read-only by the HTTP layer.

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};

use crate::annotation::Label;
use crate::conflict_model::Subscale;

pub const QUESTIONNAIRE_JSON: &str = include_str!("../data/questionnaire.json");
pub const BEHAVIORS_JSON: &str = include_str!("../data/behaviors.json");
pub const TOPICS_JSON: &str = include_str!("../data/topics.json");
pub const LINT_LEXICONS_JSON: &str = include_str!("../data/lint_lexicons.json");
pub const REDACTION_PATTERNS_JSON: &str = include_str!("../data/redaction_patterns.json");
pub const TEMPLATES_JSON: &str = include_str!("../data/templates.json");

/// Catalog names as exposed under `/api/catalogs/{name}`.
pub const CATALOG_NAMES: [&str; 6] = [
    "questionnaire",
    "behaviors",
    "topics",
    "lint-lexicons",
    "redaction-patterns",
    "templates",
];

pub fn raw(name: &str) -> Option<&'static str> {
    Some(match name {
        "questionnaire" => QUESTIONNAIRE_JSON,
        "behaviors" => BEHAVIORS_JSON,
        "topics" => TOPICS_JSON,
        "lint-lexicons" => LINT_LEXICONS_JSON,
        "redaction-patterns" => REDACTION_PATTERNS_JSON,
        "templates" => TEMPLATES_JSON,
        _ => return None,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionnaireItem {
    pub id: u8,
    pub subscale: Subscale,
    pub prompt: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionnaireCatalog {
    pub version: u32,
    pub items: Vec<QuestionnaireItem>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BehaviorEntry {
    pub id: Label,
    pub display_name: String,
    pub definition: String,
    pub example: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BehaviorCatalog {
    pub version: u32,
    pub behaviors: Vec<BehaviorEntry>,
}

impl BehaviorCatalog {
    pub fn get(&self, label: Label) -> Option<&BehaviorEntry> {
        self.behaviors.iter().find(|b| b.id == label)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Topic {
    pub id: String,
    pub title: String,
    pub description: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicCatalog {
    pub version: u32,
    pub topics: Vec<Topic>,
}

impl TopicCatalog {
    /// Deterministic pick; the same seed always yields the same topic.
    pub fn pick(&self, seed: u64) -> &Topic {
        &self.topics[(seed % self.topics.len() as u64) as usize]
    }

    pub fn find(&self, title: &str) -> Option<&Topic> {
        let needle = title.trim().to_lowercase();
        self.topics
            .iter()
            .find(|t| t.title == needle || t.id == needle)
    }
}

pub static QUESTIONNAIRE: Lazy<QuestionnaireCatalog> =
    Lazy::new(|| serde_json::from_str(QUESTIONNAIRE_JSON).expect("bundled questionnaire.json"));

pub static BEHAVIORS: Lazy<BehaviorCatalog> =
    Lazy::new(|| serde_json::from_str(BEHAVIORS_JSON).expect("bundled behaviors.json"));

pub static TOPICS: Lazy<TopicCatalog> =
    Lazy::new(|| serde_json::from_str(TOPICS_JSON).expect("bundled topics.json"));
