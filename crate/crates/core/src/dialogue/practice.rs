use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::lint::{nvc_lint, LintFinding};
use super::{recommend_reset_points, DialogueError, DialogueTurn, ScriptedDialogue, DIALOGUE_TURNS};
use crate::annotation::Label;
use crate::conflict_model::{ConflictProfile, Speaker};
use crate::gateway::{bindings, Gateway};

pub const DEFAULT_MAX_EXTENSION_TURNS: usize = 30;
pub const DEFAULT_MAX_REPLY_CHARS: usize = 600;
const REWRITE_CONTEXT_TURNS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PracticeLimits {
    pub max_extension_turns: usize,
    pub max_reply_chars: usize,
}

impl Default for PracticeLimits {
    fn default() -> Self {
        PracticeLimits {
            max_extension_turns: DEFAULT_MAX_EXTENSION_TURNS,
            max_reply_chars: DEFAULT_MAX_REPLY_CHARS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchStatus {
    Active,
    Ended,
}

/// A practice continuation of a scripted dialogue from `origin_turn_index`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PracticeBranch {
    pub branch_id: String,
    pub origin_turn_index: usize,
    /// Extension turns only; they alternate user, partner, user, ...
    pub turns: Vec<DialogueTurn>,
    pub lint_findings: BTreeMap<usize, Vec<LintFinding>>,
    pub status: BranchStatus,
}

impl PracticeBranch {
    pub fn is_active(&self) -> bool {
        self.status == BranchStatus::Active
    }

    pub fn end(&mut self) {
        self.status = BranchStatus::Ended;
    }

    /// Base prefix followed by the extension.
    pub fn visible_history(&self, base: &ScriptedDialogue) -> Vec<DialogueTurn> {
        base.prefix(self.origin_turn_index)
            .iter()
            .cloned()
            .chain(self.turns.iter().cloned())
            .collect()
    }

    fn next_index(&self) -> usize {
        self.origin_turn_index + self.turns.len()
    }

    fn push(&mut self, speaker: Speaker, text: String) -> DialogueTurn {
        let turn = DialogueTurn {
            index: self.next_index(),
            speaker,
            text,
            gold_label: Label::None,
            gold_rationale: String::new(),
        };
        self.turns.push(turn.clone());
        turn
    }
}

/// Starts a fresh branch at a recommended reset point or at the end (15).
pub fn reset_branch(
    dialogue: &ScriptedDialogue,
    turn_index: usize,
    branch_id: impl Into<String>,
) -> Result<PracticeBranch, DialogueError> {
    if turn_index != DIALOGUE_TURNS && !recommend_reset_points(dialogue).contains(&turn_index) {
        return Err(DialogueError::InvalidResetPoint(turn_index));
    }
    Ok(PracticeBranch {
        branch_id: branch_id.into(),
        origin_turn_index: turn_index,
        turns: Vec::new(),
        lint_findings: BTreeMap::new(),
        status: BranchStatus::Active,
    })
}

fn transcript_lines(turns: &[DialogueTurn]) -> String {
    turns
        .iter()
        .map(|t| format!("{}: {}", t.speaker, t.text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn parse_reply(v: Value, max_chars: usize) -> Result<String, String> {
    let reply = v
        .get("reply")
        .and_then(Value::as_str)
        .map(str::trim)
        .ok_or("missing \"reply\" string")?;
    if reply.is_empty() {
        return Err("reply is empty".into());
    }
    if reply.chars().count() > max_chars {
        return Err(format!("reply is longer than {max_chars} characters"));
    }
    if reply.contains('\n') {
        return Err("reply must be a single message on one line".into());
    }
    let lower = reply.to_lowercase();
    if lower.starts_with("self:") || lower.starts_with("partner:") {
        return Err("reply must not carry a speaker prefix".into());
    }
    Ok(reply.to_string())
}

/// Appends the user's turn and a simulated partner reply. On failure the
/// branch is left as it was.
pub fn simulate_partner_turn(
    gateway: &Gateway,
    branch: &mut PracticeBranch,
    user_text: &str,
    partner_profile: &ConflictProfile,
    base: &ScriptedDialogue,
    limits: PracticeLimits,
) -> Result<DialogueTurn, DialogueError> {
    if !branch.is_active() {
        return Err(DialogueError::BranchEnded);
    }
    if branch.turns.len() + 2 > limits.max_extension_turns {
        branch.end();
        return Err(DialogueError::BranchEnded);
    }
    let user_text = user_text.trim();
    if user_text.is_empty() {
        return Err(DialogueError::EmptyUserText);
    }

    let mut history = branch.visible_history(base);
    history.push(DialogueTurn {
        index: branch.next_index(),
        speaker: Speaker::User,
        text: user_text.to_string(),
        gold_label: Label::None,
        gold_rationale: String::new(),
    });
    let b = bindings([
        ("partner_style", partner_profile.style.to_string()),
        (
            "scenario",
            format!("{}: {}", base.scenario.topic, base.scenario.description),
        ),
        ("history", transcript_lines(&history)),
        ("max_chars", limits.max_reply_chars.to_string()),
    ]);
    let reply = gateway
        .invoke("partner_turn_v1", &b, |v| parse_reply(v, limits.max_reply_chars))
        .map_err(|e| DialogueError::SimulationFailed(e.to_string()))?;

    branch.push(Speaker::User, user_text.to_string());
    Ok(branch.push(Speaker::Partner, reply))
}

/// Asks the provider for an NVC rewrite of `draft`. The rewrite is only
/// returned if it lints clean itself.
pub fn suggest_rewrite(
    gateway: &Gateway,
    draft: &str,
    findings: &[LintFinding],
    context: &[DialogueTurn],
) -> Result<String, DialogueError> {
    if findings.is_empty() {
        return Err(DialogueError::RewriteUnavailable("draft has no findings".into()));
    }
    let recent = &context[context.len().saturating_sub(REWRITE_CONTEXT_TURNS)..];
    let advice = findings
        .iter()
        .map(|f| format!("- {}: {}", f.rule_id.as_str(), f.advice))
        .collect::<Vec<_>>()
        .join("\n");
    let b = bindings([
        ("draft", draft.to_string()),
        ("advice", advice),
        ("context", transcript_lines(recent)),
    ]);
    let rewrite = gateway
        .invoke("rewrite_nvc_v1", &b, |v| {
            v.get("rewrite")
                .and_then(Value::as_str)
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .ok_or_else(|| "missing non-empty \"rewrite\" string".to_string())
        })
        .map_err(|e| DialogueError::RewriteUnavailable(e.to_string()))?;
    if !nvc_lint(&rewrite).is_empty() {
        tracing::debug!("discarding provider rewrite that fails the lint gate");
        return Err(DialogueError::RewriteUnavailable(
            "suggested rewrite did not pass the lint check".into(),
        ));
    }
    Ok(rewrite)
}
