//! Gold-labeled conflict dialogues, reset points, partner simulation and the
//! draft lint used during practice.

pub mod lint;
mod practice;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::annotation::Label;
use crate::catalog::{BEHAVIORS, TOPICS};
use crate::conflict_model::{ConflictProfile, ConflictStyle, Speaker};
use crate::gateway::{bindings, Gateway};

pub use lint::{nvc_lint, LintFinding, RuleId};
pub use practice::{
    reset_branch, simulate_partner_turn, suggest_rewrite, BranchStatus, PracticeBranch, PracticeLimits,
    DEFAULT_MAX_EXTENSION_TURNS, DEFAULT_MAX_REPLY_CHARS,
};

pub const DIALOGUE_TURNS: usize = 15;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub topic: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub index: usize,
    pub speaker: Speaker,
    pub text: String,
    pub gold_label: Label,
    /// Empty exactly when `gold_label` is `none`.
    pub gold_rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedDialogue {
    pub scenario: Scenario,
    pub turns: Vec<DialogueTurn>,
    /// `(self style, partner style)`.
    pub style_pair: (ConflictStyle, ConflictStyle),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DialogueError {
    #[error("dialogue generation failed: {0}")]
    GenerationFailed(String),
    #[error("profiles are not finalized: {0}")]
    InvalidStylePair(String),
    #[error("turn {0} is not a valid reset point")]
    InvalidResetPoint(usize),
    #[error("partner simulation failed: {0}")]
    SimulationFailed(String),
    #[error("practice branch has ended")]
    BranchEnded,
    #[error("user text must not be empty")]
    EmptyUserText,
    #[error("rewrite unavailable: {0}")]
    RewriteUnavailable(String),
}

impl ScriptedDialogue {
    /// Checks every structural invariant; `Err` names the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.turns.len() != DIALOGUE_TURNS {
            return Err(format!("expected {DIALOGUE_TURNS} turns, got {}", self.turns.len()));
        }
        for (i, turn) in self.turns.iter().enumerate() {
            if turn.index != i {
                return Err(format!("turn {i} carries index {}", turn.index));
            }
            if turn.text.trim().is_empty() {
                return Err(format!("turn {i} has empty text"));
            }
            if turn.gold_label.is_none() != turn.gold_rationale.trim().is_empty() {
                return Err(format!("turn {i}: rationale must be present exactly when labeled"));
            }
            if i > 0 && self.turns[i - 1].speaker == turn.speaker {
                return Err(format!("turns {} and {i} have the same speaker", i - 1));
            }
        }
        for speaker in [Speaker::User, Speaker::Partner] {
            if !self
                .turns
                .iter()
                .any(|t| t.speaker == speaker && !t.gold_label.is_none())
            {
                return Err(format!("no labeled turn for {speaker}"));
            }
        }
        Ok(())
    }

    /// Turns `0..end`, the history visible before a reset at `end`.
    pub fn prefix(&self, end: usize) -> &[DialogueTurn] {
        &self.turns[..end.min(self.turns.len())]
    }
}

#[derive(Debug, Deserialize)]
struct RawScenario {
    topic: String,
    description: String,
}

#[derive(Debug, Deserialize)]
struct RawTurn {
    #[serde(default)]
    index: Option<usize>,
    speaker: String,
    text: String,
    gold_label: String,
    #[serde(default)]
    gold_rationale: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RawDialogue {
    scenario: RawScenario,
    turns: Vec<RawTurn>,
}

fn parse_raw(v: Value) -> Result<RawDialogue, String> {
    serde_json::from_value(v).map_err(|e| format!("dialogue does not match the schema: {e}"))
}

fn build_dialogue(raw: RawDialogue, style_pair: (ConflictStyle, ConflictStyle)) -> Result<ScriptedDialogue, String> {
    let mut turns = Vec::with_capacity(raw.turns.len());
    for (i, t) in raw.turns.into_iter().enumerate() {
        if let Some(index) = t.index {
            if index != i {
                return Err(format!("turn {i} carries index {index}"));
            }
        }
        let speaker = t
            .speaker
            .parse::<Speaker>()
            .map_err(|_| format!("turn {i}: unknown speaker {:?}", t.speaker))?;
        let gold_label = Label::parse(t.gold_label.trim())
            .ok_or_else(|| format!("turn {i}: unknown label {:?}", t.gold_label))?;
        turns.push(DialogueTurn {
            index: i,
            speaker,
            text: t.text.trim().to_string(),
            gold_label,
            gold_rationale: t.gold_rationale.unwrap_or_default().trim().to_string(),
        });
    }
    let dialogue = ScriptedDialogue {
        scenario: Scenario {
            topic: raw.scenario.topic.trim().to_string(),
            description: raw.scenario.description.trim().to_string(),
        },
        turns,
        style_pair,
    };
    dialogue.check_invariants()?;
    Ok(dialogue)
}

fn check_profiles(profiles: (&ConflictProfile, &ConflictProfile)) -> Result<(), DialogueError> {
    let (me, partner) = profiles;
    if me.partner != Speaker::User || partner.partner != Speaker::Partner {
        return Err(DialogueError::InvalidStylePair(
            "expected (self, partner) profiles".into(),
        ));
    }
    for p in [me, partner] {
        if !p.is_coherent() {
            return Err(DialogueError::InvalidStylePair(format!(
                "{} profile style does not match its scores",
                p.partner
            )));
        }
    }
    Ok(())
}

fn behavior_list() -> String {
    let mut lines: Vec<String> = BEHAVIORS
        .behaviors
        .iter()
        .map(|b| format!("- {}: {}", b.id, b.definition))
        .collect();
    lines.push("- none: no negative behavior".into());
    lines.join("\n")
}

/// Generates a 15-turn labeled dialogue. `topic` overrides the catalog pick,
/// which otherwise is chosen deterministically from `seed`.
pub fn generate_dialogue(
    gateway: &Gateway,
    profiles: (&ConflictProfile, &ConflictProfile),
    topic: Option<&str>,
    seed: u64,
) -> Result<ScriptedDialogue, DialogueError> {
    check_profiles(profiles)?;
    let style_pair = (profiles.0.style, profiles.1.style);
    let (topic_title, topic_description) = match topic.map(str::trim).filter(|t| !t.is_empty()) {
        Some(t) => match TOPICS.find(t) {
            Some(entry) => (entry.title.clone(), entry.description.clone()),
            None => (t.to_string(), "a recurring disagreement between the partners".to_string()),
        },
        None => {
            let entry = TOPICS.pick(seed);
            (entry.title.clone(), entry.description.clone())
        }
    };
    let b = bindings([
        ("behaviors", behavior_list()),
        ("turn_count", DIALOGUE_TURNS.to_string()),
        ("topic", topic_title),
        ("topic_description", topic_description),
        ("self_style", style_pair.0.to_string()),
        ("partner_style", style_pair.1.to_string()),
    ]);

    let mut last_violation = String::new();
    // One regeneration after an invariant failure.
    for attempt in 0..2 {
        let raw = gateway
            .invoke("gen_dialogue_v1", &b, parse_raw)
            .map_err(|e| DialogueError::GenerationFailed(e.to_string()))?;
        match build_dialogue(raw, style_pair) {
            Ok(d) => return Ok(d),
            Err(violation) => {
                tracing::warn!(attempt, %violation, "generated dialogue violates invariants");
                last_violation = violation;
            }
        }
    }
    Err(DialogueError::GenerationFailed(last_violation))
}

/// Indices of the user's own labeled turns, ascending. The first entry is
/// the primary recommendation.
pub fn recommend_reset_points(dialogue: &ScriptedDialogue) -> Vec<usize> {
    dialogue
        .turns
        .iter()
        .enumerate()
        .filter(|(_, t)| t.speaker == Speaker::User && !t.gold_label.is_none())
        .map(|(i, _)| i)
        .collect()
}

#[doc(hidden)]
pub mod test_support {
    use super::*;
    use crate::samples;

    pub fn sample_dialogue() -> ScriptedDialogue {
        let raw = parse_raw(samples::dialogue_json()).unwrap();
        build_dialogue(raw, (ConflictStyle::Hostile, ConflictStyle::Validating)).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::conflict_model::{finalize_profile, QuestionnaireResponse, ResponseSource};
    use crate::gateway::{Fixtures, MockProvider, ScriptedResponse};
    use crate::samples;
    use test_support::sample_dialogue;

    fn profiles() -> (ConflictProfile, ConflictProfile) {
        let me = QuestionnaireResponse::new(&samples::HOSTILE_ITEMS, ResponseSource::UserAdjusted, Speaker::User)
            .unwrap();
        let partner =
            QuestionnaireResponse::new(&samples::VALIDATING_ITEMS, ResponseSource::UserAdjusted, Speaker::Partner)
                .unwrap();
        (finalize_profile(&me), finalize_profile(&partner))
    }

    fn gateway(replies: Vec<ScriptedResponse>) -> (Gateway, Arc<MockProvider>) {
        let mock = Arc::new(MockProvider::new(Fixtures::sequence("gen_dialogue_v1", replies)));
        (Gateway::new(mock.clone()), mock)
    }

    fn with_turns(n: usize) -> Value {
        let mut v = samples::dialogue_json();
        v["turns"].as_array_mut().unwrap().truncate(n);
        v
    }

    #[test]
    fn valid_fixture_parses_verbatim() {
        let (gw, _) = gateway(vec![ScriptedResponse::Json(samples::dialogue_json())]);
        let (me, partner) = profiles();
        let d = generate_dialogue(&gw, (&me, &partner), None, 0).unwrap();
        assert_eq!(d, sample_dialogue());
        assert_eq!(d.turns.len(), DIALOGUE_TURNS);
        assert_eq!(d.style_pair, (ConflictStyle::Hostile, ConflictStyle::Validating));
    }

    #[test]
    fn short_dialogue_regenerates_once_then_fails() {
        let (gw, mock) = gateway(vec![ScriptedResponse::Json(with_turns(14))]);
        let (me, partner) = profiles();
        let err = generate_dialogue(&gw, (&me, &partner), None, 0).unwrap_err();
        assert!(matches!(err, DialogueError::GenerationFailed(_)));
        assert_eq!(mock.calls_for("gen_dialogue_v1"), 2);
    }

    #[test]
    fn regeneration_can_recover() {
        let (gw, _) = gateway(vec![
            ScriptedResponse::Json(with_turns(14)),
            ScriptedResponse::Json(samples::dialogue_json()),
        ]);
        let (me, partner) = profiles();
        assert!(generate_dialogue(&gw, (&me, &partner), Some("finances"), 0).is_ok());
    }

    #[test]
    fn topic_reaches_the_prompt() {
        let (gw, mock) = gateway(vec![ScriptedResponse::Json(samples::dialogue_json())]);
        let (me, partner) = profiles();
        generate_dialogue(&gw, (&me, &partner), None, 0).unwrap();
        let user = &mock.requests()[0].user;
        assert!(user.contains("household habits"));
        assert!(user.contains("Hostile") && user.contains("Validating"));
    }

    #[test]
    fn incoherent_profiles_are_rejected() {
        let (gw, _) = gateway(vec![ScriptedResponse::Json(samples::dialogue_json())]);
        let (mut me, partner) = profiles();
        me.style = ConflictStyle::Avoidant;
        assert!(matches!(
            generate_dialogue(&gw, (&me, &partner), None, 0),
            Err(DialogueError::InvalidStylePair(_))
        ));
        let (me, _) = profiles();
        assert!(matches!(
            generate_dialogue(&gw, (&me, &me), None, 0),
            Err(DialogueError::InvalidStylePair(_))
        ));
    }

    fn unlabeled(first: Speaker) -> ScriptedDialogue {
        let mut d = sample_dialogue();
        for (i, t) in d.turns.iter_mut().enumerate() {
            t.speaker = if i % 2 == 0 { first } else { first.other() };
            t.gold_label = Label::None;
            t.gold_rationale.clear();
        }
        d
    }

    fn label(d: &mut ScriptedDialogue, i: usize) {
        d.turns[i].gold_label = Label::Criticism;
        d.turns[i].gold_rationale = "r".into();
    }

    #[test]
    fn reset_point_examples() {
        let mut d = unlabeled(Speaker::Partner);
        assert!(recommend_reset_points(&d).is_empty());
        label(&mut d, 4);
        label(&mut d, 7);
        assert_eq!(recommend_reset_points(&d), vec![7]);

        let mut d = unlabeled(Speaker::User);
        label(&mut d, 2);
        label(&mut d, 10);
        let points = recommend_reset_points(&d);
        assert_eq!(points, vec![2, 10]);
        assert_eq!(points[0], 2);
    }

    #[test]
    fn sample_reset_points() {
        let d = sample_dialogue();
        let points = recommend_reset_points(&d);
        assert!(!points.is_empty());
        assert!(points.windows(2).all(|w| w[0] < w[1]));
        assert!(points.iter().all(|&i| d.turns[i].speaker == Speaker::User));
    }
}
