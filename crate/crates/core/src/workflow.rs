//! Session operations: each one checks the session state, performs any
//! provider work, then commits exactly one event (or none on failure).

use std::sync::Arc;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotation::{
    compute_summary_metrics, generate_summary_text, AnnotationError, AnnotationRecord, AnnotationSummary, Label,
};
use crate::catalog::TOPICS;
use crate::conflict_model::{
    finalize_profile, merge_adjustments, ConflictProfile, ConflictStyle, ModelError, QuestionnaireResponse,
    Speaker,
};
use crate::dialogue::{
    generate_dialogue, nvc_lint, recommend_reset_points, reset_branch, simulate_partner_turn, suggest_rewrite,
    DialogueError, DialogueTurn, LintFinding, PracticeBranch, PracticeLimits, Scenario, ScriptedDialogue,
};
use crate::gateway::Gateway;
use crate::ingestion::{
    estimate_questionnaire, extract_transcript, Estimate, IngestionError, Transcript, UploadLimits,
};
use crate::redaction::{RedactionReport, Redactor};
use crate::session::{
    EventKind, PartnerPair, Session, SessionError, SessionEvent, SessionState, SessionStore, StoreError,
};

#[derive(Debug, thiserror::Error)]
pub enum WorkflowError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Ingestion(#[from] IngestionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    NotAvailable(String),
}

/// How a failure should be reported to a client.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    NotFound,
    Conflict,
    Invalid,
    Upstream,
    Internal,
}

impl WorkflowError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            WorkflowError::Session(SessionError::IllegalTransition { .. }) => "illegal_transition",
            WorkflowError::Session(_) => "invalid_event",
            WorkflowError::Ingestion(e) => match e {
                IngestionError::InvalidImageCount(_) => "invalid_image_count",
                IngestionError::UnsupportedImage { .. } => "unsupported_image",
                IngestionError::ExtractionFailed(_) => "extraction_failed",
                IngestionError::EmptyTranscript => "empty_transcript",
                IngestionError::EstimationFailed(_) => "estimation_failed",
            },
            WorkflowError::Model(_) => "invalid_questionnaire",
            WorkflowError::Dialogue(e) => match e {
                DialogueError::GenerationFailed(_) => "generation_failed",
                DialogueError::InvalidStylePair(_) => "invalid_style_pair",
                DialogueError::InvalidResetPoint(_) => "invalid_reset_point",
                DialogueError::SimulationFailed(_) => "simulation_failed",
                DialogueError::BranchEnded => "branch_ended",
                DialogueError::EmptyUserText => "empty_user_text",
                DialogueError::RewriteUnavailable(_) => "rewrite_unavailable",
            },
            WorkflowError::Annotation(e) => match e {
                AnnotationError::TurnOutOfRange(_) => "turn_out_of_range",
                AnnotationError::StageClosed => "annotation_closed",
                AnnotationError::IncompleteAnnotation { .. } => "incomplete_annotation",
            },
            WorkflowError::Store(StoreError::NotFound(_) | StoreError::InvalidId(_)) => "session_not_found",
            WorkflowError::Store(StoreError::AlreadyExists(_)) => "session_exists",
            WorkflowError::Store(_) => "storage_error",
            WorkflowError::NotAvailable(_) => "not_available",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            WorkflowError::Session(SessionError::IllegalTransition { .. }) => ErrorClass::Conflict,
            WorkflowError::Session(_) => ErrorClass::Invalid,
            WorkflowError::Ingestion(
                IngestionError::ExtractionFailed(_) | IngestionError::EstimationFailed(_),
            ) => ErrorClass::Upstream,
            WorkflowError::Ingestion(_) | WorkflowError::Model(_) => ErrorClass::Invalid,
            WorkflowError::Dialogue(e) => match e {
                DialogueError::GenerationFailed(_) | DialogueError::SimulationFailed(_) => ErrorClass::Upstream,
                DialogueError::InvalidStylePair(_) | DialogueError::BranchEnded => ErrorClass::Conflict,
                _ => ErrorClass::Invalid,
            },
            WorkflowError::Annotation(AnnotationError::StageClosed) => ErrorClass::Conflict,
            WorkflowError::Annotation(_) => ErrorClass::Invalid,
            WorkflowError::Store(StoreError::NotFound(_) | StoreError::InvalidId(_)) => ErrorClass::NotFound,
            WorkflowError::Store(StoreError::AlreadyExists(_)) => ErrorClass::Conflict,
            WorkflowError::Store(_) => ErrorClass::Internal,
            WorkflowError::NotAvailable(_) => ErrorClass::Conflict,
        }
    }
}

pub type WorkflowResult<T> = Result<T, WorkflowError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptResult {
    pub transcript: Transcript,
    pub redaction: RedactionReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResetPoints {
    pub reset_points: Vec<usize>,
    pub primary: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PracticeResult {
    pub lint_findings: Vec<LintFinding>,
    pub rewrite: Option<String>,
    /// `None` for a dry run.
    pub partner_turn: Option<DialogueTurn>,
    pub branch_status: crate::dialogue::BranchStatus,
}

/// A dialogue turn as shown to the client. Gold data appears only through
/// `annotation`, i.e. after the user has annotated the turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientTurn {
    pub index: usize,
    pub speaker: Speaker,
    pub text: String,
    pub annotation: Option<AnnotationRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientDialogue {
    pub scenario: Scenario,
    pub style_pair: (ConflictStyle, ConflictStyle),
    pub turns: Vec<ClientTurn>,
}

impl ClientDialogue {
    pub fn from_session(dialogue: &ScriptedDialogue, session: &Session) -> ClientDialogue {
        ClientDialogue {
            scenario: dialogue.scenario.clone(),
            style_pair: dialogue.style_pair,
            turns: dialogue
                .turns
                .iter()
                .map(|t| ClientTurn {
                    index: t.index,
                    speaker: t.speaker,
                    text: t.text.clone(),
                    annotation: session.annotations.records.get(&t.index).cloned(),
                })
                .collect(),
        }
    }
}

/// Client-safe projection of a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub state: SessionState,
    pub transcript: Option<Transcript>,
    pub redaction: Option<RedactionReport>,
    pub questionnaires: Option<PartnerPair<QuestionnaireResponse>>,
    pub profiles: Option<PartnerPair<ConflictProfile>>,
    pub dialogue: Option<ClientDialogue>,
    pub annotated_turns: usize,
    pub summary: Option<AnnotationSummary>,
    pub branches: Vec<PracticeBranch>,
    pub next_seq: u64,
}

impl SessionView {
    pub fn of(session: &Session) -> SessionView {
        SessionView {
            session_id: session.session_id.clone(),
            state: session.state,
            transcript: session.transcript.clone(),
            redaction: session.redaction.clone(),
            questionnaires: session.questionnaires.clone(),
            profiles: session.profiles.clone(),
            dialogue: session.dialogue.as_ref().map(|d| ClientDialogue::from_session(d, session)),
            annotated_turns: session.annotations.records.len(),
            summary: session.summary.clone(),
            branches: session.branches.clone(),
            next_seq: session.next_seq,
        }
    }
}

/// Deterministic topic seed for a session.
pub fn topic_seed(session_id: &str) -> u64 {
    let digest = Sha256::digest(session_id.as_bytes());
    u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub struct Workflow {
    gateway: Arc<Gateway>,
    store: SessionStore,
    redactor: Redactor,
    upload_limits: UploadLimits,
    practice_limits: PracticeLimits,
}

impl Workflow {
    pub fn new(gateway: Arc<Gateway>, store: SessionStore) -> Self {
        Workflow {
            gateway,
            store,
            redactor: Redactor::bundled(),
            upload_limits: UploadLimits::default(),
            practice_limits: PracticeLimits::default(),
        }
    }

    pub fn with_upload_limits(mut self, limits: UploadLimits) -> Self {
        self.upload_limits = limits;
        self
    }

    pub fn with_practice_limits(mut self, limits: PracticeLimits) -> Self {
        self.practice_limits = limits;
        self
    }

    pub fn with_redactor(mut self, redactor: Redactor) -> Self {
        self.redactor = redactor;
        self
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    fn commit(&self, session: &mut Session, kind: EventKind) -> WorkflowResult<SessionEvent> {
        let event = SessionEvent {
            seq: session.next_seq,
            timestamp: Utc::now(),
            event: kind,
        };
        let next = session.transition(&event)?;
        self.store.append(&next, &event)?;
        *session = next;
        Ok(event)
    }

    pub fn create(&self) -> WorkflowResult<Session> {
        let genesis = SessionEvent {
            seq: 0,
            timestamp: Utc::now(),
            event: EventKind::Created {
                session_id: uuid::Uuid::new_v4().to_string(),
            },
        };
        Ok(self.store.create(&genesis)?)
    }

    pub fn load(&self, session_id: &str) -> WorkflowResult<Session> {
        Ok(self.store.load(session_id)?)
    }

    pub fn upload_screenshots(&self, session: &mut Session, images: &[Vec<u8>]) -> WorkflowResult<TranscriptResult> {
        session.permits_event("transcript_ready")?;
        let (transcript, redaction) =
            extract_transcript(&self.gateway, &self.redactor, images, &self.upload_limits)?;
        self.commit(
            session,
            EventKind::TranscriptReady {
                transcript: transcript.clone(),
                redaction: redaction.clone(),
            },
        )?;
        Ok(TranscriptResult { transcript, redaction })
    }

    pub fn estimate(&self, session: &mut Session) -> WorkflowResult<PartnerPair<Estimate>> {
        session.permits_event("estimates_ready")?;
        let transcript = session.transcript.clone().expect("present in TranscriptReady");
        let user = estimate_questionnaire(&self.gateway, &transcript, Speaker::User)?;
        let partner = estimate_questionnaire(&self.gateway, &transcript, Speaker::Partner)?;
        self.commit(
            session,
            EventKind::EstimatesReady {
                questionnaires: PartnerPair {
                    user: user.response.clone(),
                    partner: partner.response.clone(),
                },
                warnings: PartnerPair {
                    user: user.warnings.clone(),
                    partner: partner.warnings.clone(),
                },
            },
        )?;
        Ok(PartnerPair { user, partner })
    }

    /// Applies `(item index, new score)` edits to one partner's questionnaire.
    pub fn adjust_questionnaire(
        &self,
        session: &mut Session,
        partner: Speaker,
        edits: &[(usize, i64)],
    ) -> WorkflowResult<QuestionnaireResponse> {
        session.permits_event("questionnaire_adjusted")?;
        let current = session.questionnaires.as_ref().expect("present").get(partner);
        let response = merge_adjustments(current, edits)?;
        self.commit(session, EventKind::QuestionnaireAdjusted { response: response.clone() })?;
        Ok(response)
    }

    pub fn finalize_styles(&self, session: &mut Session) -> WorkflowResult<PartnerPair<ConflictProfile>> {
        session.permits_event("styles_finalized")?;
        let q = session.questionnaires.as_ref().expect("present");
        let profiles = PartnerPair {
            user: finalize_profile(&q.user),
            partner: finalize_profile(&q.partner),
        };
        self.commit(session, EventKind::StylesFinalized { profiles: profiles.clone() })?;
        Ok(profiles)
    }

    pub fn generate_dialogue(&self, session: &mut Session, topic: Option<&str>) -> WorkflowResult<ClientDialogue> {
        session.permits_event("dialogue_ready")?;
        let profiles = session.profiles.clone().expect("present in StylesFinal");
        let hinted = session
            .transcript
            .as_ref()
            .and_then(|t| t.topic_hint.as_deref())
            .and_then(|h| TOPICS.find(h))
            .map(|t| t.title.clone());
        let topic = topic.map(str::to_string).or(hinted);
        let dialogue = generate_dialogue(
            &self.gateway,
            (&profiles.user, &profiles.partner),
            topic.as_deref(),
            topic_seed(&session.session_id),
        )?;
        self.commit(session, EventKind::DialogueReady { dialogue: dialogue.clone() })?;
        Ok(ClientDialogue::from_session(&dialogue, session))
    }

    pub fn annotate(&self, session: &mut Session, turn_index: usize, label: Label) -> WorkflowResult<AnnotationRecord> {
        if session.annotations.closed {
            return Err(AnnotationError::StageClosed.into());
        }
        session.permits_event("turn_annotated")?;
        let mut sheet = session.annotations.clone();
        let record = sheet.annotate(session.dialogue.as_ref().expect("present"), turn_index, label)?;
        self.commit(session, EventKind::TurnAnnotated { record: record.clone() })?;
        Ok(record)
    }

    /// Computes and stores the summary once; later calls return it unchanged.
    pub fn annotation_summary(&self, session: &mut Session) -> WorkflowResult<AnnotationSummary> {
        if let Some(summary) = &session.summary {
            return Ok(summary.clone());
        }
        session.permits_event("annotation_completed")?;
        let mut summary = compute_summary_metrics(&session.annotations.records())?;
        let profiles = session.profiles.as_ref().expect("present");
        let (strengths, recommendations) =
            generate_summary_text(&summary, (&profiles.user, &profiles.partner), &self.gateway);
        summary.strengths_text = strengths;
        summary.recommendations_text = recommendations;
        self.commit(session, EventKind::AnnotationCompleted { summary: summary.clone() })?;
        Ok(summary)
    }

    /// Available once annotation is complete, so the list cannot leak gold
    /// labels early.
    pub fn reset_points(&self, session: &Session) -> WorkflowResult<ResetPoints> {
        if session.summary.is_none() {
            return Err(WorkflowError::NotAvailable(
                "reset points are available after annotation is complete".into(),
            ));
        }
        let points = recommend_reset_points(session.dialogue.as_ref().expect("present"));
        Ok(ResetPoints {
            primary: points.first().copied(),
            reset_points: points,
        })
    }

    pub fn reset(&self, session: &mut Session, turn_index: usize) -> WorkflowResult<PracticeBranch> {
        session.permits_event("branch_reset")?;
        let dialogue = session.dialogue.as_ref().expect("present after annotation");
        let branch = reset_branch(dialogue, turn_index, uuid::Uuid::new_v4().to_string())?;
        self.commit(session, EventKind::BranchReset { branch: branch.clone() })?;
        Ok(branch)
    }

    /// Lints the draft, offers a rewrite when it has findings, and unless
    /// `dry_run` also simulates the partner and records both turns.
    pub fn practice_turn(&self, session: &mut Session, user_text: &str, dry_run: bool) -> WorkflowResult<PracticeResult> {
        session.permits_event("practice_turn")?;
        let Some(branch) = session.active_branch().cloned() else {
            return Err(DialogueError::BranchEnded.into());
        };
        let text = user_text.trim();
        if text.is_empty() {
            return Err(DialogueError::EmptyUserText.into());
        }
        let base = session.dialogue.clone().expect("present");
        let mut findings = nvc_lint(text);
        let rewrite = if findings.is_empty() {
            None
        } else {
            suggest_rewrite(&self.gateway, text, &findings, &branch.visible_history(&base)).ok()
        };
        for f in &mut findings {
            f.rewrite = rewrite.clone();
        }
        if dry_run {
            return Ok(PracticeResult {
                lint_findings: findings,
                rewrite,
                partner_turn: None,
                branch_status: branch.status,
            });
        }

        let partner = session.profiles.as_ref().expect("present").partner.clone();
        let mut work = branch.clone();
        match simulate_partner_turn(&self.gateway, &mut work, text, &partner, &base, self.practice_limits) {
            Ok(partner_turn) => {
                let user_turn = work.turns[work.turns.len() - 2].clone();
                self.commit(
                    session,
                    EventKind::PracticeTurn {
                        branch_id: branch.branch_id.clone(),
                        user_turn,
                        partner_turn: partner_turn.clone(),
                        lint_findings: findings.clone(),
                    },
                )?;
                Ok(PracticeResult {
                    lint_findings: findings,
                    rewrite,
                    partner_turn: Some(partner_turn),
                    branch_status: work.status,
                })
            }
            Err(DialogueError::BranchEnded) => {
                self.commit(session, EventKind::BranchEnded { branch_id: branch.branch_id })?;
                Err(DialogueError::BranchEnded.into())
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn close(&self, session: &mut Session) -> WorkflowResult<()> {
        self.commit(session, EventKind::Closed)?;
        Ok(())
    }
}
