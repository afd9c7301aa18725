use proptest::prelude::*;

use parley_core::annotation::{annotate_turn, compute_summary_metrics, AnnotationRecord, Label};
use parley_core::conflict_model::{
    classify_style, finalize_profile, merge_adjustments, score_questionnaire, ConflictStyle, QuestionnaireResponse,
    ResponseSource, Speaker, SubscaleScores,
};
use parley_core::dialogue::{
    nvc_lint, recommend_reset_points, reset_branch, DialogueTurn, Scenario, ScriptedDialogue,
};
use parley_core::redaction::{PatternId, RedactionOptions, Redactor};
use parley_core::Fraction;

fn response(items: [i64; 13]) -> QuestionnaireResponse {
    QuestionnaireResponse::new(&items, ResponseSource::LlmEstimated, Speaker::User).unwrap()
}

fn items() -> impl Strategy<Value = [i64; 13]> {
    prop::array::uniform13(1i64..=5)
}

fn label() -> impl Strategy<Value = Label> {
    prop::sample::select(Label::ALL.to_vec())
}

fn dialogue() -> impl Strategy<Value = ScriptedDialogue> {
    (any::<bool>(), prop::collection::vec((label(), "[a-z ]{1,12}"), 15)).prop_map(|(user_first, turns)| {
        let first = if user_first { Speaker::User } else { Speaker::Partner };
        ScriptedDialogue {
            scenario: Scenario {
                topic: "household habits".into(),
                description: "dishes".into(),
            },
            turns: turns
                .into_iter()
                .enumerate()
                .map(|(i, (gold_label, text))| DialogueTurn {
                    index: i,
                    speaker: if i % 2 == 0 { first } else { first.other() },
                    text: format!("t{i} {text}"),
                    gold_label,
                    gold_rationale: if gold_label.is_none() { String::new() } else { "why".into() },
                })
                .collect(),
            style_pair: (ConflictStyle::Hostile, ConflictStyle::Validating),
        }
    })
}

fn sensitive_text() -> impl Strategy<Value = String> {
    let piece = prop_oneof![
        "[a-zA-Z]{1,8}",
        "[a-z]{1,6}@[a-z]{1,6}\\.(com|org)",
        "\\+?1? ?\\(?[0-9]{3}\\)?[ .-]?[0-9]{3}[ .-]?[0-9]{4}",
        "(https?://|www\\.)[a-z]{1,8}\\.[a-z]{2,3}(/[a-z.?=]{0,8})?",
        "@[a-z_]{1,8}",
        "[ ,.;:!?()@/\\n-]{1,3}",
        "(Sam|Alex|Jordan)",
    ];
    prop::collection::vec(piece, 0..12).prop_map(|v| v.concat())
}

proptest! {
    #[test]
    fn classifier_ignores_engagement_shifts_outside_avoidant(
        halves in prop::array::uniform6(2u32..=10),
        delta in -8i32..=8,
    ) {
        // Avoidance and separation sit at positions 1 and 3.
        let shifted_a = halves[1] as i32 + delta;
        let shifted_s = halves[3] as i32 + delta;
        prop_assume!((2..=10).contains(&shifted_a) && (2..=10).contains(&shifted_s));
        let mut moved = halves;
        moved[1] = shifted_a as u32;
        moved[3] = shifted_s as u32;
        let before = classify_style(&SubscaleScores::from_values(halves.map(Fraction::halves)).unwrap());
        let after = classify_style(&SubscaleScores::from_values(moved.map(Fraction::halves)).unwrap());
        if before != ConflictStyle::Avoidant && after != ConflictStyle::Avoidant {
            prop_assert_eq!(before, after);
        }
    }

    #[test]
    fn empty_merge_preserves_scores(items in items()) {
        let r = response(items);
        let merged = merge_adjustments(&r, &[]).unwrap();
        prop_assert_eq!(score_questionnaire(&merged), score_questionnaire(&r));
    }

    #[test]
    fn finalized_profiles_are_coherent(items in items(), edits in prop::collection::vec((0usize..13, 1i64..=5), 0..10)) {
        let merged = merge_adjustments(&response(items), &edits).unwrap();
        let profile = finalize_profile(&merged);
        prop_assert_eq!(classify_style(&profile.subscales), profile.style);
        prop_assert!(profile.is_coherent());
    }

    #[test]
    fn redaction_is_idempotent_and_order_independent(text in sensitive_text(), seed in any::<u64>()) {
        let redactor = Redactor::with_options(&RedactionOptions {
            proper_names: true,
            name_hints: vec!["Sam".into(), "Alex".into(), "Jordan".into()],
        });
        let (once, _) = redactor.redact(&text);
        prop_assert_eq!(&redactor.redact(&once).0, &once);
        prop_assert!(!redactor.finds_sensitive(&once));

        let mut order = redactor.classes();
        let n = order.len();
        for i in 0..n {
            order.swap(i, (seed as usize).wrapping_add(i * 7) % n);
        }
        // Replacement counts may differ by order when classes overlap; the text may not.
        prop_assert_eq!(&redactor.redact_in_order(&text, &order).0, &once);
    }

    #[test]
    fn bundled_redaction_never_touches_names(text in "[A-Z][a-z]{1,8}( [A-Z][a-z]{1,8}){0,3}") {
        let redactor = Redactor::bundled();
        prop_assert!(!redactor.classes().contains(&PatternId::ProperNameHint));
        prop_assert_eq!(redactor.redact(&text).0, text);
    }

    #[test]
    fn lint_is_deterministic_and_spans_are_sound(draft in "\\PC{0,80}") {
        let findings = nvc_lint(&draft);
        prop_assert_eq!(&findings, &nvc_lint(&draft));
        let len = draft.chars().count();
        for f in &findings {
            prop_assert!(f.span.0 <= f.span.1 && f.span.1 <= len, "{:?} outside 0..{}", f.span, len);
            prop_assert!(!f.advice.is_empty());
        }
        for a in &findings {
            for b in &findings {
                if !std::ptr::eq(a, b) && a.rule_id == b.rule_id {
                    prop_assert!(a.span.1 <= b.span.0 || b.span.1 <= a.span.0, "{:?} overlaps {:?}", a, b);
                }
            }
        }
    }

    #[test]
    fn lint_handles_prose(words in prop::collection::vec(
        prop::sample::select(vec![
            "you", "You", "never", "always", "I", "feel", "when", "lazy", "please", "could", "we", "?", "!",
            "not", "don't", "thanks", "whatever", "fine", "must", "should", "everything", "’", ",",
        ]),
        0..20,
    )) {
        let draft = words.join(" ");
        let findings = nvc_lint(&draft);
        prop_assert_eq!(&findings, &nvc_lint(&draft));
        prop_assert!(findings.iter().all(|f| f.span.1 <= draft.chars().count()));
    }

    #[test]
    fn annotation_correct_flag_tracks_equality(d in dialogue(), idx in 0usize..15, user in label()) {
        let record = annotate_turn(&d, idx, user).unwrap();
        prop_assert_eq!(record.correct, user == d.turns[idx].gold_label);
        prop_assert_eq!(record.gold_label, d.turns[idx].gold_label);
    }

    #[test]
    fn metrics_are_permutation_invariant_and_balanced(
        pairs in prop::collection::vec((label(), label()), 15),
        perm in Just((0..15).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let records: Vec<AnnotationRecord> = pairs
            .iter()
            .enumerate()
            .map(|(i, &(gold, user))| AnnotationRecord {
                turn_index: i,
                user_label: user,
                correct: gold == user,
                gold_label: gold,
                rationale: String::new(),
            })
            .collect();
        let shuffled: Vec<AnnotationRecord> = perm.iter().map(|&i| records[i].clone()).collect();
        let a = compute_summary_metrics(&records).unwrap();
        let b = compute_summary_metrics(&shuffled).unwrap();
        prop_assert_eq!(&a, &b);

        let gold_labeled = pairs.iter().filter(|(g, _)| !g.is_none()).count() as u32;
        let user_labeled = pairs.iter().filter(|(_, u)| !u.is_none()).count() as u32;
        prop_assert_eq!(a.per_label.values().map(|m| m.tp + m.fn_).sum::<u32>(), gold_labeled);
        prop_assert_eq!(a.per_label.values().map(|m| m.tp + m.fp).sum::<u32>(), user_labeled);
    }

    #[test]
    fn reset_points_are_ascending_self_turns(d in dialogue()) {
        let points = recommend_reset_points(&d);
        prop_assert!(points.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(points.iter().all(|&i| d.turns[i].speaker == Speaker::User));
    }

    #[test]
    fn branches_never_mutate_the_base(d in dialogue()) {
        let before = d.clone();
        for &k in recommend_reset_points(&d).iter().chain(std::iter::once(&15)) {
            let a = reset_branch(&d, k, "a").unwrap();
            let b = reset_branch(&d, k, "b").unwrap();
            prop_assert_eq!(a.visible_history(&d), b.visible_history(&d));
            prop_assert_eq!(a.visible_history(&d), d.prefix(k).to_vec());
            prop_assert!(a.turns.is_empty());
        }
        prop_assert_eq!(d, before);
    }
}
