//! Behavior taxonomy, per-turn annotation feedback and summary metrics.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::catalog::BEHAVIORS;
use crate::conflict_model::ConflictProfile;
use crate::dialogue::{ScriptedDialogue, DIALOGUE_TURNS};
use crate::fraction::Fraction;
use crate::gateway::{bindings, Gateway};

/// One of the eleven negative communication behaviors, or `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Criticism,
    Contempt,
    Defensiveness,
    Stonewalling,
    BlamingYouStatement,
    Sarcasm,
    Invalidation,
    MindReading,
    KitchenSinking,
    ThreatUltimatum,
    BoundaryViolation,
    None,
}

impl Label {
    pub const BEHAVIORS: [Label; 11] = [
        Label::Criticism,
        Label::Contempt,
        Label::Defensiveness,
        Label::Stonewalling,
        Label::BlamingYouStatement,
        Label::Sarcasm,
        Label::Invalidation,
        Label::MindReading,
        Label::KitchenSinking,
        Label::ThreatUltimatum,
        Label::BoundaryViolation,
    ];

    /// The eleven behaviors plus `None`.
    pub const ALL: [Label; 12] = [
        Label::Criticism,
        Label::Contempt,
        Label::Defensiveness,
        Label::Stonewalling,
        Label::BlamingYouStatement,
        Label::Sarcasm,
        Label::Invalidation,
        Label::MindReading,
        Label::KitchenSinking,
        Label::ThreatUltimatum,
        Label::BoundaryViolation,
        Label::None,
    ];

    pub fn is_none(self) -> bool {
        self == Label::None
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Criticism => "criticism",
            Label::Contempt => "contempt",
            Label::Defensiveness => "defensiveness",
            Label::Stonewalling => "stonewalling",
            Label::BlamingYouStatement => "blaming_you_statement",
            Label::Sarcasm => "sarcasm",
            Label::Invalidation => "invalidation",
            Label::MindReading => "mind_reading",
            Label::KitchenSinking => "kitchen_sinking",
            Label::ThreatUltimatum => "threat_ultimatum",
            Label::BoundaryViolation => "boundary_violation",
            Label::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        Label::ALL.into_iter().find(|l| l.as_str() == s)
    }

    pub fn display_name(self) -> &'static str {
        match BEHAVIORS.get(self) {
            Some(entry) => entry.display_name.as_str(),
            None => "None",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub turn_index: usize,
    pub user_label: Label,
    pub correct: bool,
    pub gold_label: Label,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnnotationError {
    #[error("turn index {0} is outside 0..{DIALOGUE_TURNS}")]
    TurnOutOfRange(usize),
    #[error("annotation stage is closed")]
    StageClosed,
    #[error("only {annotated} of {DIALOGUE_TURNS} turns are annotated")]
    IncompleteAnnotation { annotated: usize },
}

/// Builds the feedback record for one turn from the dialogue's embedded gold
/// label. No provider call is involved.
pub fn annotate_turn(
    dialogue: &ScriptedDialogue,
    turn_index: usize,
    user_label: Label,
) -> Result<AnnotationRecord, AnnotationError> {
    let turn = dialogue
        .turns
        .get(turn_index)
        .ok_or(AnnotationError::TurnOutOfRange(turn_index))?;
    Ok(AnnotationRecord {
        turn_index,
        user_label,
        correct: user_label == turn.gold_label,
        gold_label: turn.gold_label,
        rationale: turn.gold_rationale.clone(),
    })
}

/// Per-session annotation state; the latest write per turn wins until closed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSheet {
    pub records: BTreeMap<usize, AnnotationRecord>,
    pub closed: bool,
}

impl AnnotationSheet {
    pub fn annotate(
        &mut self,
        dialogue: &ScriptedDialogue,
        turn_index: usize,
        user_label: Label,
    ) -> Result<AnnotationRecord, AnnotationError> {
        if self.closed {
            return Err(AnnotationError::StageClosed);
        }
        let record = annotate_turn(dialogue, turn_index, user_label)?;
        self.records.insert(turn_index, record.clone());
        Ok(record)
    }

    pub fn is_annotated(&self, turn_index: usize) -> bool {
        self.records.contains_key(&turn_index)
    }

    pub fn is_complete(&self) -> bool {
        (0..DIALOGUE_TURNS).all(|i| self.records.contains_key(&i))
    }

    pub fn records(&self) -> Vec<AnnotationRecord> {
        self.records.values().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub tp: u32,
    pub fp: u32,
    #[serde(rename = "fn")]
    pub fn_: u32,
    /// `None` when nothing was predicted as this label.
    pub precision: Option<Fraction>,
    /// `None` when this label never occurs in the gold data.
    pub recall: Option<Fraction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSummary {
    pub accuracy: Fraction,
    pub per_label: BTreeMap<Label, LabelMetrics>,
    pub strengths_text: String,
    pub recommendations_text: String,
}

/// Accuracy over all 12 classes plus per-behavior counts. `None` counts
/// toward accuracy but gets no per-label entry.
pub fn compute_summary_metrics(records: &[AnnotationRecord]) -> Result<AnnotationSummary, AnnotationError> {
    let mut seen = [false; DIALOGUE_TURNS];
    for r in records {
        if r.turn_index >= DIALOGUE_TURNS {
            return Err(AnnotationError::TurnOutOfRange(r.turn_index));
        }
        seen[r.turn_index] = true;
    }
    let annotated = seen.iter().filter(|s| **s).count();
    if annotated < DIALOGUE_TURNS || records.len() != DIALOGUE_TURNS {
        return Err(AnnotationError::IncompleteAnnotation { annotated });
    }

    let correct = records.iter().filter(|r| r.user_label == r.gold_label).count() as u32;
    let per_label = Label::BEHAVIORS
        .into_iter()
        .map(|label| {
            let (mut tp, mut fp, mut fn_) = (0u32, 0u32, 0u32);
            for r in records {
                match (r.user_label == label, r.gold_label == label) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            let ratio = |num: u32, den: u32| (den > 0).then(|| Fraction::new(num, den));
            let metrics = LabelMetrics {
                tp,
                fp,
                fn_,
                precision: ratio(tp, tp + fp),
                recall: ratio(tp, tp + fn_),
            };
            (label, metrics)
        })
        .collect();

    Ok(AnnotationSummary {
        accuracy: Fraction::new(correct, DIALOGUE_TURNS as u32),
        per_label,
        strengths_text: String::new(),
        recommendations_text: String::new(),
    })
}

/// Labels with defined recall, lowest recall first; ties keep taxonomy order.
pub fn lowest_recall_labels(metrics: &AnnotationSummary, n: usize) -> Vec<Label> {
    let mut scored: Vec<(Fraction, Label)> = metrics
        .per_label
        .iter()
        .filter_map(|(label, m)| m.recall.map(|r| (r, *label)))
        .collect();
    scored.sort();
    scored.into_iter().take(n).map(|(_, l)| l).collect()
}

fn percent(f: Fraction) -> u32 {
    (f.numer() * 100 + f.denom() / 2) / f.denom()
}

fn opt(f: Option<Fraction>) -> String {
    f.map_or_else(|| "n/a".to_string(), |v| format!("{}%", percent(v)))
}

fn join_names(labels: &[Label]) -> String {
    labels
        .iter()
        .map(|l| l.display_name().to_lowercase())
        .collect::<Vec<_>>()
        .join(" and ")
}

/// Deterministic strengths/recommendations used when the provider is unavailable.
pub fn fallback_summary_text(metrics: &AnnotationSummary) -> (String, String) {
    if metrics.accuracy == Fraction::ONE {
        return (
            format!(
                "You judged all {DIALOGUE_TURNS} turns correctly, including the ones with no negative behavior. \
                 You can tell these patterns apart reliably."
            ),
            "Maintain this awareness in your own conversations: pause before replying and check your \
             message for the same patterns you spotted here."
                .to_string(),
        );
    }

    let correct = metrics.accuracy.numer() * (DIALOGUE_TURNS as u32) / metrics.accuracy.denom();
    let perfect: Vec<Label> = metrics
        .per_label
        .iter()
        .filter(|(_, m)| m.recall == Some(Fraction::ONE))
        .map(|(l, _)| *l)
        .collect();
    let strengths = if perfect.is_empty() {
        format!(
            "You judged {correct} of {DIALOGUE_TURNS} turns correctly. Working through every turn is the first step \
             toward noticing these patterns in the moment."
        )
    } else {
        format!(
            "You judged {correct} of {DIALOGUE_TURNS} turns correctly and caught every instance of {}.",
            join_names(&perfect)
        )
    };

    let weakest = lowest_recall_labels(metrics, 2);
    let recommendations = if weakest.is_empty() {
        "Review the behavior catalog and try the exercise again with a new conversation.".to_string()
    } else {
        let defs: Vec<String> = weakest
            .iter()
            .filter_map(|l| BEHAVIORS.get(*l))
            .map(|b| format!("{}: {}", b.display_name, b.definition))
            .collect();
        format!(
            "Focus next on {}, the behaviors you recognized least often. {}",
            join_names(&weakest),
            defs.join(" ")
        )
    };
    (strengths, recommendations)
}

fn metrics_table(metrics: &AnnotationSummary) -> String {
    metrics
        .per_label
        .iter()
        .map(|(label, m)| {
            format!(
                "- {}: tp={} fp={} missed={} precision={} recall={}",
                label.display_name(),
                m.tp,
                m.fp,
                m.fn_,
                opt(m.precision),
                opt(m.recall)
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn parse_summary(v: Value) -> Result<(String, String), String> {
    let field = |name: &str| {
        v.get(name)
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .ok_or_else(|| format!("\"{name}\" must be a non-empty string"))
    };
    Ok((field("strengths")?, field("recommendations")?))
}

/// Only numeric metrics and style names are sent; no utterance text.
pub fn generate_summary_text(
    metrics: &AnnotationSummary,
    profiles: (&ConflictProfile, &ConflictProfile),
    gateway: &Gateway,
) -> (String, String) {
    let b = bindings([
        ("self_style", profiles.0.style.to_string()),
        ("partner_style", profiles.1.style.to_string()),
        ("accuracy", format!("{} ({}%)", metrics.accuracy, percent(metrics.accuracy))),
        ("per_label", metrics_table(metrics)),
    ]);
    match gateway.invoke("annotation_summary_v1", &b, parse_summary) {
        Ok(texts) => texts,
        Err(err) => {
            tracing::warn!(error = %err, "summary generation failed, using fallback text");
            fallback_summary_text(metrics)
        }
    }
}
