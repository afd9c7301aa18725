//! Event-sourced session state machine.
//!
//! A session moves through
//! `Created -> TranscriptReady -> EstimatesReady -> StylesFinal ->
//! DialogueReady -> AnnotationComplete -> PracticeActive`, and can be closed
//! from any state. Every change is a [`SessionEvent`]; replaying a session's
//! events from `seq = 0` rebuilds it exactly.

mod store;

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::annotation::{annotate_turn, AnnotationRecord, AnnotationSheet, AnnotationSummary};
use crate::conflict_model::{ConflictProfile, QuestionnaireResponse, Speaker};
use crate::dialogue::{DialogueTurn, LintFinding, PracticeBranch, ScriptedDialogue, BranchStatus, DIALOGUE_TURNS};
use crate::ingestion::{ClampWarning, Transcript};
use crate::redaction::RedactionReport;

pub use store::{SessionStore, StoreError, DEFAULT_SNAPSHOT_EVERY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SessionState {
    Created,
    TranscriptReady,
    EstimatesReady,
    StylesFinal,
    DialogueReady,
    AnnotationComplete,
    PracticeActive,
    Closed,
}

impl SessionState {
    pub const ALL: [SessionState; 8] = [
        SessionState::Created,
        SessionState::TranscriptReady,
        SessionState::EstimatesReady,
        SessionState::StylesFinal,
        SessionState::DialogueReady,
        SessionState::AnnotationComplete,
        SessionState::PracticeActive,
        SessionState::Closed,
    ];
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A value for each member of the couple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartnerPair<T> {
    #[serde(rename = "self")]
    pub user: T,
    pub partner: T,
}

impl<T> PartnerPair<T> {
    pub fn get(&self, who: Speaker) -> &T {
        match who {
            Speaker::User => &self.user,
            Speaker::Partner => &self.partner,
        }
    }

    pub fn get_mut(&mut self, who: Speaker) -> &mut T {
        match who {
            Speaker::User => &mut self.user,
            Speaker::Partner => &mut self.partner,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum EventKind {
    Created {
        session_id: String,
    },
    TranscriptReady {
        transcript: Transcript,
        redaction: RedactionReport,
    },
    EstimatesReady {
        questionnaires: PartnerPair<QuestionnaireResponse>,
        warnings: PartnerPair<Vec<ClampWarning>>,
    },
    QuestionnaireAdjusted {
        response: QuestionnaireResponse,
    },
    StylesFinalized {
        profiles: PartnerPair<ConflictProfile>,
    },
    DialogueReady {
        dialogue: ScriptedDialogue,
    },
    TurnAnnotated {
        record: AnnotationRecord,
    },
    AnnotationCompleted {
        summary: AnnotationSummary,
    },
    BranchReset {
        branch: PracticeBranch,
    },
    PracticeTurn {
        branch_id: String,
        user_turn: DialogueTurn,
        partner_turn: DialogueTurn,
        lint_findings: Vec<LintFinding>,
    },
    BranchEnded {
        branch_id: String,
    },
    Closed,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Created { .. } => "created",
            EventKind::TranscriptReady { .. } => "transcript_ready",
            EventKind::EstimatesReady { .. } => "estimates_ready",
            EventKind::QuestionnaireAdjusted { .. } => "questionnaire_adjusted",
            EventKind::StylesFinalized { .. } => "styles_finalized",
            EventKind::DialogueReady { .. } => "dialogue_ready",
            EventKind::TurnAnnotated { .. } => "turn_annotated",
            EventKind::AnnotationCompleted { .. } => "annotation_completed",
            EventKind::BranchReset { .. } => "branch_reset",
            EventKind::PracticeTurn { .. } => "practice_turn",
            EventKind::BranchEnded { .. } => "branch_ended",
            EventKind::Closed => "closed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub event: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("{event} is not allowed in state {state}")]
    IllegalTransition { state: SessionState, event: &'static str },
    #[error("event sequence gap: expected seq {expected}, got {got}")]
    SequenceGap { expected: u64, got: u64 },
    #[error("inconsistent event: {0}")]
    InvalidEvent(String),
    #[error("event log is empty or does not start with a created event")]
    MissingGenesis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub state: SessionState,
    pub transcript: Option<Transcript>,
    pub redaction: Option<RedactionReport>,
    pub questionnaires: Option<PartnerPair<QuestionnaireResponse>>,
    pub estimate_warnings: Option<PartnerPair<Vec<ClampWarning>>>,
    pub profiles: Option<PartnerPair<ConflictProfile>>,
    pub dialogue: Option<ScriptedDialogue>,
    pub annotations: AnnotationSheet,
    pub summary: Option<AnnotationSummary>,
    pub branches: Vec<PracticeBranch>,
    /// Sequence number the next event must carry.
    pub next_seq: u64,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

fn invalid(msg: impl Into<String>) -> SessionError {
    SessionError::InvalidEvent(msg.into())
}

impl Session {
    /// Builds a session from its `created` event.
    pub fn genesis(event: &SessionEvent) -> Result<Session, SessionError> {
        let EventKind::Created { session_id } = &event.event else {
            return Err(SessionError::MissingGenesis);
        };
        if event.seq != 0 {
            return Err(SessionError::SequenceGap { expected: 0, got: event.seq });
        }
        Ok(Session {
            session_id: session_id.clone(),
            state: SessionState::Created,
            transcript: None,
            redaction: None,
            questionnaires: None,
            estimate_warnings: None,
            profiles: None,
            dialogue: None,
            annotations: AnnotationSheet::default(),
            summary: None,
            branches: Vec::new(),
            next_seq: 1,
            created_at: event.timestamp,
            updated_at: event.timestamp,
        })
    }

    pub fn replay<'a>(events: impl IntoIterator<Item = &'a SessionEvent>) -> Result<Session, SessionError> {
        let mut iter = events.into_iter();
        let first = iter.next().ok_or(SessionError::MissingGenesis)?;
        let mut session = Session::genesis(first)?;
        for event in iter {
            session.apply(event)?;
        }
        Ok(session)
    }

    pub fn active_branch(&self) -> Option<&PracticeBranch> {
        self.branches.iter().find(|b| b.is_active())
    }

    fn active_branch_mut(&mut self) -> Option<&mut PracticeBranch> {
        self.branches.iter_mut().find(|b| b.is_active())
    }

    /// Checks whether an event of this kind may be applied now, without
    /// validating its payload.
    pub fn permits(&self, kind: &EventKind) -> Result<(), SessionError> {
        self.permits_event(kind.name())
    }

    /// As [`Session::permits`], by event name.
    pub fn permits_event(&self, event: &'static str) -> Result<(), SessionError> {
        use SessionState as S;
        let ok = match (self.state, event) {
            (_, "created") => false,
            (S::Closed, "closed") => false,
            (_, "closed") => true,
            (S::Created, "transcript_ready") => true,
            (S::TranscriptReady, "estimates_ready") => true,
            (S::EstimatesReady, "questionnaire_adjusted" | "styles_finalized") => true,
            (S::StylesFinal, "dialogue_ready") => true,
            (S::DialogueReady, "turn_annotated" | "annotation_completed") => true,
            (S::AnnotationComplete | S::PracticeActive, "branch_reset") => true,
            // Reopening after close is only possible by starting a new branch.
            (S::Closed, "branch_reset") => self.summary.is_some(),
            (S::PracticeActive, "practice_turn" | "branch_ended") => true,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(SessionError::IllegalTransition {
                state: self.state,
                event,
            })
        }
    }

    fn check(&self, event: &SessionEvent) -> Result<(), SessionError> {
        if event.seq != self.next_seq {
            return Err(SessionError::SequenceGap {
                expected: self.next_seq,
                got: event.seq,
            });
        }
        self.permits(&event.event)?;
        match &event.event {
            EventKind::TranscriptReady { transcript, .. } => {
                transcript.check_invariants().map_err(invalid)?;
            }
            EventKind::EstimatesReady { questionnaires, .. } => {
                if questionnaires.user.partner != Speaker::User
                    || questionnaires.partner.partner != Speaker::Partner
                {
                    return Err(invalid("questionnaires are attached to the wrong partner"));
                }
            }
            EventKind::StylesFinalized { profiles } => {
                let q = self.questionnaires.as_ref().expect("present after estimates");
                for who in [Speaker::User, Speaker::Partner] {
                    if *profiles.get(who) != crate::conflict_model::finalize_profile(q.get(who)) {
                        return Err(invalid(format!("{who} profile does not match its questionnaire")));
                    }
                }
            }
            EventKind::DialogueReady { dialogue } => {
                dialogue.check_invariants().map_err(invalid)?;
            }
            EventKind::TurnAnnotated { record } => {
                let dialogue = self.dialogue.as_ref().expect("present after generation");
                let expected = annotate_turn(dialogue, record.turn_index, record.user_label)
                    .map_err(|e| invalid(e.to_string()))?;
                if expected != *record {
                    return Err(invalid("annotation record disagrees with the gold labels"));
                }
            }
            EventKind::AnnotationCompleted { .. } => {
                if !self.annotations.is_complete() {
                    return Err(invalid(format!(
                        "{} of {DIALOGUE_TURNS} turns annotated",
                        self.annotations.records.len()
                    )));
                }
            }
            EventKind::BranchReset { branch } => {
                if branch.status != BranchStatus::Active || !branch.turns.is_empty() {
                    return Err(invalid("a reset must start an empty active branch"));
                }
                if self.branches.iter().any(|b| b.branch_id == branch.branch_id) {
                    return Err(invalid("duplicate branch id"));
                }
                let dialogue = self.dialogue.as_ref().expect("present after generation");
                crate::dialogue::reset_branch(dialogue, branch.origin_turn_index, branch.branch_id.as_str())
                    .map_err(|e| invalid(e.to_string()))?;
            }
            EventKind::PracticeTurn { branch_id, user_turn, partner_turn, .. } => {
                let active = self
                    .active_branch()
                    .ok_or_else(|| invalid("no active branch"))?;
                if active.branch_id != *branch_id {
                    return Err(invalid("practice turn targets an inactive branch"));
                }
                let next = active.origin_turn_index + active.turns.len();
                if user_turn.speaker != Speaker::User
                    || partner_turn.speaker != Speaker::Partner
                    || user_turn.index != next
                    || partner_turn.index != next + 1
                {
                    return Err(invalid("practice turns out of order"));
                }
            }
            EventKind::BranchEnded { branch_id } => {
                if self.active_branch().map(|b| &b.branch_id) != Some(branch_id) {
                    return Err(invalid("only the active branch can end"));
                }
            }
            EventKind::Created { .. } | EventKind::QuestionnaireAdjusted { .. } | EventKind::Closed => {}
        }
        if let EventKind::QuestionnaireAdjusted { response } = &event.event {
            if response.source != crate::conflict_model::ResponseSource::UserAdjusted {
                return Err(invalid("adjusted questionnaire must be marked user_adjusted"));
            }
        }
        Ok(())
    }

    /// Applies one event in place. Rejected events leave the session untouched.
    pub fn apply(&mut self, event: &SessionEvent) -> Result<(), SessionError> {
        self.check(event)?;
        match &event.event {
            EventKind::Created { .. } => unreachable!("rejected by check"),
            EventKind::TranscriptReady { transcript, redaction } => {
                self.transcript = Some(transcript.clone());
                self.redaction = Some(redaction.clone());
                self.state = SessionState::TranscriptReady;
            }
            EventKind::EstimatesReady { questionnaires, warnings } => {
                self.questionnaires = Some(questionnaires.clone());
                self.estimate_warnings = Some(warnings.clone());
                self.state = SessionState::EstimatesReady;
            }
            EventKind::QuestionnaireAdjusted { response } => {
                let q = self.questionnaires.as_mut().expect("present after estimates");
                *q.get_mut(response.partner) = response.clone();
            }
            EventKind::StylesFinalized { profiles } => {
                self.profiles = Some(profiles.clone());
                self.state = SessionState::StylesFinal;
            }
            EventKind::DialogueReady { dialogue } => {
                self.dialogue = Some(dialogue.clone());
                self.state = SessionState::DialogueReady;
            }
            EventKind::TurnAnnotated { record } => {
                self.annotations.records.insert(record.turn_index, record.clone());
            }
            EventKind::AnnotationCompleted { summary } => {
                self.summary = Some(summary.clone());
                self.annotations.closed = true;
                self.state = SessionState::AnnotationComplete;
            }
            EventKind::BranchReset { branch } => {
                if let Some(active) = self.active_branch_mut() {
                    active.end();
                }
                self.branches.push(branch.clone());
                self.state = SessionState::PracticeActive;
            }
            EventKind::PracticeTurn { user_turn, partner_turn, lint_findings, .. } => {
                let branch = self.active_branch_mut().expect("checked");
                if !lint_findings.is_empty() {
                    branch.lint_findings.insert(user_turn.index, lint_findings.clone());
                }
                branch.turns.push(user_turn.clone());
                branch.turns.push(partner_turn.clone());
            }
            EventKind::BranchEnded { .. } => {
                self.active_branch_mut().expect("checked").end();
            }
            EventKind::Closed => {
                if let Some(active) = self.active_branch_mut() {
                    active.end();
                }
                self.state = SessionState::Closed;
            }
        }
        self.next_seq += 1;
        self.updated_at = event.timestamp;
        Ok(())
    }

    /// Pure form of [`Session::apply`].
    pub fn transition(&self, event: &SessionEvent) -> Result<Session, SessionError> {
        let mut next = self.clone();
        next.apply(event)?;
        Ok(next)
    }
}
