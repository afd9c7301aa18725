//! Canned provider replies and inputs for demos, tests and the bundled mock
//! fixture set. Everything here is synthetic.

use std::io::Cursor;
use std::sync::Arc;

use serde_json::{json, Value};

use crate::conflict_model::Speaker;
use crate::gateway::{Fixtures, Gateway, MockProvider, ScriptedResponse};
use crate::session::{Session, SessionState, SessionStore};
use crate::workflow::{Workflow, WorkflowResult};

/// Scores to a Hostile profile (low compromise, high reactivity and domination).
pub const HOSTILE_ITEMS: [i64; 13] = [1, 2, 1, 2, 2, 5, 4, 2, 1, 5, 4, 1, 2];
/// Scores to a Validating profile.
pub const VALIDATING_ITEMS: [i64; 13] = [5, 4, 5, 2, 1, 2, 2, 2, 2, 1, 2, 2, 3];

pub fn transcript_json() -> Value {
    json!({
        "messages": [
            {"speaker": "partner", "text": "The sink is full again. Call me at 555-201-3344 when you're off work.", "ordinal": 0},
            {"speaker": "self", "text": "Seriously? I just got home and you're already starting.", "ordinal": 1},
            {"speaker": "partner", "text": "I'm not starting anything, I just want some help with the dishes.", "ordinal": 2},
            {"speaker": "self", "text": "Fine, whatever. Email me a chore chart at sam.lee@example.com then.", "ordinal": 3}
        ],
        "topic_hint": "household habits"
    })
}

pub fn estimate_json(items: &[i64; 13]) -> Value {
    json!({ "items": items })
}

fn turn(speaker: &str, text: &str, label: &str, rationale: &str) -> Value {
    json!({"speaker": speaker, "text": text, "gold_label": label, "gold_rationale": rationale})
}

/// A valid 15-turn dialogue starting with the partner.
pub fn dialogue_json() -> Value {
    json!({
        "scenario": {
            "topic": "household habits",
            "description": "The dishes have been piling up in the sink for days and one partner finally brings it up."
        },
        "turns": [
            turn("partner", "Hey, can we talk about the dishes? They've been in the sink since Sunday.", "none", ""),
            turn("self", "Oh great, here we go again. It's not my fault you notice every little thing.", "defensiveness",
                 "Deflects responsibility instead of hearing the request."),
            turn("partner", "I'm not trying to nag. I just feel stressed when the kitchen is a mess.", "none", ""),
            turn("self", "Maybe if you didn't cook huge meals every night there wouldn't be so many dishes.", "blaming_you_statement",
                 "Frames the problem as the partner's fault."),
            turn("partner", "That's not fair. You're so careless about anything that isn't yours.", "criticism",
                 "Attacks character with a sweeping generalization."),
            turn("self", "Wow, thanks for the lecture, Professor Clean.", "contempt",
                 "Mocking nickname expresses superiority."),
            turn("partner", "Please don't call me names. I'm asking for help.", "none", ""),
            turn("self", "And last month you left the laundry for a week, and you forgot my mom's birthday.", "kitchen_sinking",
                 "Piles unrelated past grievances onto the dishes issue."),
            turn("partner", "I know I've dropped the ball before. Can we focus on the dishes?", "none", ""),
            turn("self", "You just want to feel superior to me.", "mind_reading",
                 "Asserts the partner's motive without asking."),
            turn("partner", "That's not what I want. I want us to share the work.", "none", ""),
            turn("self", "Fine. Whatever. I'm done talking.", "stonewalling",
                 "Shuts the conversation down."),
            turn("partner", "I don't want to end it like this. Could we make a schedule together?", "none", ""),
            turn("self", "If you bring this up one more time, I'm sleeping on the couch.", "threat_ultimatum",
                 "Uses a threat to end the discussion."),
            turn("partner", "I hear that you're frustrated. Let's take a break and try again after dinner.", "none", "")
        ]
    })
}

pub const PARTNER_REPLIES: [&str; 3] = [
    "Fine, let's talk about it.",
    "Thank you for saying that. I feel better when we plan it together.",
    "Okay, I'll take evenings and you take mornings. Deal?",
];

pub const ACCEPTED_REWRITE: &str = "I feel ignored when I don't hear back";

pub fn summary_json() -> Value {
    json!({
        "strengths": "You picked out contempt and stonewalling right away, even when they were subtle.",
        "recommendations": "Watch for mind reading: it often hides inside a statement that sounds like an observation."
    })
}

/// A fixture set that drives the whole three-stage flow once.
pub fn demo_fixtures() -> Fixtures {
    let mut f = Fixtures::default();
    f.set("extract_transcript_v1", vec![ScriptedResponse::Json(transcript_json())])
        .set(
            "estimate_rpcs_v1",
            vec![
                ScriptedResponse::Json(estimate_json(&HOSTILE_ITEMS)),
                ScriptedResponse::Json(estimate_json(&VALIDATING_ITEMS)),
            ],
        )
        .set("gen_dialogue_v1", vec![ScriptedResponse::Json(dialogue_json())])
        .set(
            "partner_turn_v1",
            PARTNER_REPLIES
                .iter()
                .map(|r| ScriptedResponse::Json(json!({ "reply": r })))
                .collect(),
        )
        .set(
            "rewrite_nvc_v1",
            vec![ScriptedResponse::Json(json!({ "rewrite": ACCEPTED_REWRITE }))],
        )
        .set("annotation_summary_v1", vec![ScriptedResponse::Json(summary_json())]);
    f
}

/// A small valid PNG.
pub fn png_bytes() -> Vec<u8> {
    let img = image::RgbImage::from_pixel(4, 4, image::Rgb([240, 240, 250]));
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).expect("png encodes");
    out.into_inner()
}

/// A workflow over the demo fixtures, storing sessions under `data_dir`.
pub fn demo_workflow(data_dir: &std::path::Path) -> (Workflow, Arc<MockProvider>) {
    let mock = Arc::new(MockProvider::new(demo_fixtures()));
    let gateway = Arc::new(Gateway::new(mock.clone()));
    let store = SessionStore::open(data_dir).expect("data dir is writable");
    (Workflow::new(gateway, store), mock)
}

/// Runs `session` forward with demo inputs until it reaches `target`.
/// Annotation uses the gold label on every turn.
pub fn drive(wf: &Workflow, session: &mut Session, target: SessionState) -> WorkflowResult<()> {
    while session.state < target {
        match session.state {
            SessionState::Created => {
                wf.upload_screenshots(session, &[png_bytes()])?;
            }
            SessionState::TranscriptReady => {
                wf.estimate(session)?;
            }
            SessionState::EstimatesReady => {
                wf.adjust_questionnaire(session, Speaker::Partner, &[(12, 3)])?;
                wf.finalize_styles(session)?;
            }
            SessionState::StylesFinal => {
                wf.generate_dialogue(session, None)?;
            }
            SessionState::DialogueReady => {
                let gold: Vec<_> = session
                    .dialogue
                    .as_ref()
                    .expect("present")
                    .turns
                    .iter()
                    .map(|t| t.gold_label)
                    .collect();
                for (i, label) in gold.into_iter().enumerate() {
                    wf.annotate(session, i, label)?;
                }
                wf.annotation_summary(session)?;
            }
            SessionState::AnnotationComplete => {
                let points = wf.reset_points(session)?;
                wf.reset(session, points.primary.unwrap_or(crate::dialogue::DIALOGUE_TURNS))?;
            }
            SessionState::PracticeActive | SessionState::Closed => break,
        }
    }
    Ok(())
}

/// Drafts used for the practice stage of the scripted flow. The first one
/// trips the lint; the others are clean.
pub const PRACTICE_DRAFTS: [&str; 3] = [
    "You never listen to me",
    "I feel worried about the dishes",
    "Could we split the chores this week?",
];

/// The full scripted flow: upload, estimate, adjust, finalize, generate,
/// annotate every turn, summarize, reset, then one practice turn per draft.
pub fn run_happy_path(wf: &Workflow, images: &[Vec<u8>]) -> WorkflowResult<Session> {
    let mut session = wf.create()?;
    wf.upload_screenshots(&mut session, images)?;
    drive(wf, &mut session, SessionState::PracticeActive)?;
    for draft in PRACTICE_DRAFTS {
        wf.practice_turn(&mut session, draft, false)?;
    }
    Ok(session)
}
