//! Screenshot upload to redacted transcript, and transcript to estimated
//! questionnaire answers.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::catalog::QUESTIONNAIRE;
use crate::conflict_model::{QuestionnaireResponse, ResponseSource, Speaker, ITEM_COUNT, LIKERT_MAX, LIKERT_MIN};
use crate::gateway::{bindings, Gateway, ImageAttachment};
use crate::redaction::{RedactionReport, Redactor};

pub const MAX_IMAGES: usize = 10;
pub const DEFAULT_MAX_IMAGE_BYTES: usize = 8 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub speaker: Speaker,
    pub text: String,
    pub ordinal: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub messages: Vec<Message>,
    #[serde(default)]
    pub topic_hint: Option<String>,
}

impl Transcript {
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.messages.len() < 2 {
            return Err(format!("a conflict needs at least 2 messages, got {}", self.messages.len()));
        }
        for (i, m) in self.messages.iter().enumerate() {
            if m.ordinal != i {
                return Err(format!("message {i} has ordinal {}", m.ordinal));
            }
            if m.text.trim().is_empty() {
                return Err(format!("message {i} is empty"));
            }
        }
        for speaker in [Speaker::User, Speaker::Partner] {
            if !self.messages.iter().any(|m| m.speaker == speaker) {
                return Err(format!("no message from {speaker}"));
            }
        }
        Ok(())
    }

    /// `speaker: text` lines.
    pub fn to_lines(&self) -> String {
        self.messages
            .iter()
            .map(|m| format!("{}: {}", m.speaker, m.text))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IngestionError {
    #[error("expected 1..={MAX_IMAGES} images, got {0}")]
    InvalidImageCount(usize),
    #[error("image {index} is not usable: {reason}")]
    UnsupportedImage { index: usize, reason: String },
    #[error("transcript extraction failed: {0}")]
    ExtractionFailed(String),
    #[error("no messages were found in the screenshots")]
    EmptyTranscript,
    #[error("questionnaire estimation failed: {0}")]
    EstimationFailed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UploadLimits {
    pub max_images: usize,
    pub max_image_bytes: usize,
}

impl Default for UploadLimits {
    fn default() -> Self {
        UploadLimits {
            max_images: MAX_IMAGES,
            max_image_bytes: DEFAULT_MAX_IMAGE_BYTES,
        }
    }
}

fn check_image(index: usize, bytes: &[u8], limits: &UploadLimits) -> Result<ImageAttachment, IngestionError> {
    let unsupported = |reason: String| IngestionError::UnsupportedImage { index, reason };
    if bytes.len() > limits.max_image_bytes {
        return Err(unsupported(format!(
            "{} bytes exceeds the {} byte limit",
            bytes.len(),
            limits.max_image_bytes
        )));
    }
    let format = image::guess_format(bytes).map_err(|e| unsupported(e.to_string()))?;
    let media_type = match format {
        image::ImageFormat::Png => "image/png",
        image::ImageFormat::Jpeg => "image/jpeg",
        other => return Err(unsupported(format!("{other:?} is not PNG or JPEG"))),
    };
    image::load_from_memory_with_format(bytes, format).map_err(|e| unsupported(e.to_string()))?;
    Ok(ImageAttachment {
        media_type: media_type.to_string(),
        data: bytes.to_vec(),
    })
}

#[derive(Deserialize)]
struct RawMessage {
    speaker: String,
    text: String,
    #[allow(dead_code)]
    #[serde(default)]
    ordinal: Option<Value>,
}

#[derive(Deserialize)]
struct RawTranscript {
    messages: Vec<RawMessage>,
    #[serde(default)]
    topic_hint: Option<String>,
}

/// Validates provider output. Ordinals are reassigned from array position.
/// An empty message list is passed through so the caller can report it.
fn parse_transcript(v: Value) -> Result<Transcript, String> {
    let raw: RawTranscript =
        serde_json::from_value(v).map_err(|e| format!("transcript does not match the schema: {e}"))?;
    let mut messages = Vec::with_capacity(raw.messages.len());
    for (i, m) in raw.messages.into_iter().enumerate() {
        let speaker = m
            .speaker
            .parse::<Speaker>()
            .map_err(|_| format!("message {i}: speaker must be \"self\" or \"partner\""))?;
        messages.push(Message {
            speaker,
            text: m.text.trim().to_string(),
            ordinal: i,
        });
    }
    let transcript = Transcript {
        messages,
        topic_hint: raw
            .topic_hint
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty()),
    };
    if !transcript.messages.is_empty() {
        transcript.check_invariants()?;
    }
    Ok(transcript)
}

/// Sends the screenshots through `extract_transcript_v1` and redacts the
/// resulting text before it is stored or reused in later prompts.
pub fn extract_transcript(
    gateway: &Gateway,
    redactor: &Redactor,
    images: &[Vec<u8>],
    limits: &UploadLimits,
) -> Result<(Transcript, RedactionReport), IngestionError> {
    if images.is_empty() || images.len() > limits.max_images {
        return Err(IngestionError::InvalidImageCount(images.len()));
    }
    let attachments = images
        .iter()
        .enumerate()
        .map(|(i, bytes)| check_image(i, bytes, limits))
        .collect::<Result<Vec<_>, _>>()?;

    let b = bindings([("image_count", images.len().to_string())]);
    let mut transcript = gateway
        .invoke_with_images("extract_transcript_v1", &b, attachments, parse_transcript)
        .map_err(|e| IngestionError::ExtractionFailed(e.to_string()))?;
    if transcript.messages.is_empty() {
        return Err(IngestionError::EmptyTranscript);
    }

    let mut report = RedactionReport::default();
    for m in &mut transcript.messages {
        let (clean, r) = redactor.redact(&m.text);
        m.text = clean;
        report.merge(&r);
    }
    if let Some(hint) = &mut transcript.topic_hint {
        let (clean, r) = redactor.redact(hint);
        *hint = clean;
        report.merge(&r);
    }
    Ok((transcript, report))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClampWarning {
    pub index: usize,
    pub original: i64,
    pub clamped: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Estimate {
    pub response: QuestionnaireResponse,
    pub warnings: Vec<ClampWarning>,
}

fn parse_items(v: Value) -> Result<Vec<i64>, String> {
    let items = v
        .get("items")
        .and_then(Value::as_array)
        .ok_or("missing \"items\" array")?;
    if items.len() != ITEM_COUNT {
        return Err(format!("expected {ITEM_COUNT} items, got {}", items.len()));
    }
    items
        .iter()
        .enumerate()
        .map(|(i, x)| x.as_i64().ok_or_else(|| format!("item {i} is not an integer")))
        .collect()
}

fn item_list() -> String {
    QUESTIONNAIRE
        .items
        .iter()
        .map(|item| format!("{}. {}", item.id, item.prompt))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Estimates one partner's answers. Out-of-range values are clamped into
/// 1..=5 and reported as warnings rather than rejected.
pub fn estimate_questionnaire(
    gateway: &Gateway,
    transcript: &Transcript,
    partner: Speaker,
) -> Result<Estimate, IngestionError> {
    let b = bindings([
        ("transcript", transcript.to_lines()),
        ("partner", partner.as_str().to_string()),
        ("items", item_list()),
    ]);
    let raw = gateway
        .invoke("estimate_rpcs_v1", &b, parse_items)
        .map_err(|e| IngestionError::EstimationFailed(e.to_string()))?;
    let mut warnings = Vec::new();
    let clamped: Vec<i64> = raw
        .iter()
        .enumerate()
        .map(|(index, &original)| {
            let c = original.clamp(i64::from(LIKERT_MIN), i64::from(LIKERT_MAX));
            if c != original {
                tracing::warn!(index, original, clamped = c, "clamped estimated Likert value");
                warnings.push(ClampWarning {
                    index,
                    original,
                    clamped: c as u8,
                });
            }
            c
        })
        .collect();
    let response = QuestionnaireResponse::new(&clamped, ResponseSource::LlmEstimated, partner)
        .expect("clamped items are valid");
    Ok(Estimate { response, warnings })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use serde_json::json;

    use super::*;
    use crate::gateway::{Fixtures, MockProvider, ScriptedResponse};
    use crate::redaction::PatternId;
    use crate::samples;

    fn gateway(template: &str, replies: Vec<ScriptedResponse>) -> (Gateway, Arc<MockProvider>) {
        let mock = Arc::new(MockProvider::new(Fixtures::sequence(template, replies)));
        (Gateway::new(mock.clone()), mock)
    }

    fn four_messages() -> Value {
        json!({"messages": [
            {"speaker": "partner", "text": "You left the lights on.", "ordinal": 0},
            {"speaker": "self", "text": "Sorry, I was in a hurry.", "ordinal": 1},
            {"speaker": "partner", "text": "It keeps happening.", "ordinal": 2},
            {"speaker": "self", "text": "I'll set a reminder.", "ordinal": 3}
        ], "topic_hint": null})
    }

    fn extract(gw: &Gateway, images: &[Vec<u8>]) -> Result<(Transcript, RedactionReport), IngestionError> {
        extract_transcript(gw, &Redactor::bundled(), images, &UploadLimits::default())
    }

    #[test]
    fn fixture_transcript_is_echoed() {
        let (gw, mock) = gateway("extract_transcript_v1", vec![ScriptedResponse::Json(four_messages())]);
        let (t, report) = extract(&gw, &[samples::png_bytes()]).unwrap();
        assert_eq!(t.messages.len(), 4);
        assert_eq!(t.messages[2].text, "It keeps happening.");
        assert_eq!(t.messages[1].speaker, Speaker::User);
        assert!(report.is_empty());
        assert_eq!(mock.requests()[0].images.len(), 1);
    }

    #[test]
    fn malformed_output_exhausts_retries() {
        let (gw, _) = gateway("extract_transcript_v1", vec![ScriptedResponse::Text("not json".into())]);
        assert!(matches!(
            extract(&gw, &[samples::png_bytes()]),
            Err(IngestionError::ExtractionFailed(_))
        ));
        assert_eq!(gw.log().len(), 3);
    }

    #[test]
    fn duplicate_ordinals_are_reindexed_in_order() {
        let mut v = four_messages();
        for m in v["messages"].as_array_mut().unwrap() {
            m["ordinal"] = json!(0);
        }
        let (gw, _) = gateway("extract_transcript_v1", vec![ScriptedResponse::Json(v)]);
        let (t, _) = extract(&gw, &[samples::png_bytes()]).unwrap();
        assert_eq!(t.messages.iter().map(|m| m.ordinal).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(t.messages[0].text, "You left the lights on.");
    }

    #[test]
    fn empty_transcript() {
        let (gw, _) = gateway("extract_transcript_v1", vec![ScriptedResponse::Json(json!({"messages": []}))]);
        assert_eq!(extract(&gw, &[samples::png_bytes()]), Err(IngestionError::EmptyTranscript));
    }

    #[test]
    fn image_checks() {
        let (gw, _) = gateway("extract_transcript_v1", vec![ScriptedResponse::Json(four_messages())]);
        assert_eq!(extract(&gw, &[]), Err(IngestionError::InvalidImageCount(0)));
        assert_eq!(
            extract(&gw, &vec![samples::png_bytes(); 11]),
            Err(IngestionError::InvalidImageCount(11))
        );
        assert!(matches!(
            extract(&gw, &[b"GIF89a-not-allowed".to_vec()]),
            Err(IngestionError::UnsupportedImage { index: 0, .. })
        ));
        let mut truncated = samples::png_bytes();
        truncated.truncate(20);
        assert!(matches!(
            extract(&gw, &[samples::png_bytes(), truncated]),
            Err(IngestionError::UnsupportedImage { index: 1, .. })
        ));
        let tiny = UploadLimits { max_image_bytes: 10, ..Default::default() };
        assert!(matches!(
            extract_transcript(&gw, &Redactor::bundled(), &[samples::png_bytes()], &tiny),
            Err(IngestionError::UnsupportedImage { .. })
        ));
        assert!(gw.log().is_empty());
    }

    #[test]
    fn transcript_text_is_redacted() {
        let (gw, _) = gateway("extract_transcript_v1", vec![ScriptedResponse::Json(samples::transcript_json())]);
        let (t, report) = extract(&gw, &[samples::png_bytes()]).unwrap();
        assert!(t.messages[0].text.contains("[PHONE]"));
        assert!(t.messages[3].text.contains("[EMAIL]"));
        assert_eq!(report.count(PatternId::Phone), 1);
        assert_eq!(report.count(PatternId::Email), 1);
    }

    #[test]
    fn estimate_examples() {
        let t = Transcript {
            messages: vec![
                Message { speaker: Speaker::User, text: "a".into(), ordinal: 0 },
                Message { speaker: Speaker::Partner, text: "b".into(), ordinal: 1 },
            ],
            topic_hint: None,
        };
        let (gw, _) = gateway("estimate_rpcs_v1", vec![ScriptedResponse::Json(json!({"items": vec![3; 13]}))]);
        let e = estimate_questionnaire(&gw, &t, Speaker::User).unwrap();
        assert_eq!(e.response.items(), &[3u8; 13]);
        assert_eq!(e.response.source, ResponseSource::LlmEstimated);
        assert!(e.warnings.is_empty());

        let mut items = [3i64; 13];
        items[5] = 6;
        let (gw, _) = gateway("estimate_rpcs_v1", vec![ScriptedResponse::Json(json!({"items": items}))]);
        let e = estimate_questionnaire(&gw, &t, Speaker::Partner).unwrap();
        assert_eq!(e.response.items()[5], 5);
        assert_eq!(e.warnings, vec![ClampWarning { index: 5, original: 6, clamped: 5 }]);

        let (gw, _) = gateway("estimate_rpcs_v1", vec![ScriptedResponse::Json(json!({"items": vec![3; 12]}))]);
        assert!(matches!(
            estimate_questionnaire(&gw, &t, Speaker::User),
            Err(IngestionError::EstimationFailed(_))
        ));
    }
}
