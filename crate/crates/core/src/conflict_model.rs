//! Questionnaire scoring and conflict-style classification.
//!
//! Thirteen Likert items map onto six subscales (3/2/2/2/2/2 items). Each
//! subscale score is the exact mean of its items. Styles come from an
//! ordered decision table over two derived quantities:
//!
//! * engagement `E = 6 - mean(avoidance, separation)`
//! * negativity `N = mean(domination, interactional_reactivity)`
//!
//! | rule | condition                         | style      |
//! |------|-----------------------------------|------------|
//! | 1    | `E < 3`                           | Avoidant   |
//! | 2    | `N >= 7/2` and `compromise < 3`   | Hostile    |
//! | 3    | `N >= 7/2`                        | Volatile   |
//! | 4    | otherwise                         | Validating |
//!
//! The first matching rule wins.

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::annotation::Label;
use crate::fraction::Fraction;

pub const ITEM_COUNT: usize = 13;
pub const LIKERT_MIN: u8 = 1;
pub const LIKERT_MAX: u8 = 5;

/// Which member of the couple a record describes. `User` is the person
/// running the session and serializes as `"self"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    #[serde(rename = "self")]
    User,
    Partner,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::User => "self",
            Speaker::Partner => "partner",
        }
    }

    pub fn other(self) -> Speaker {
        match self {
            Speaker::User => Speaker::Partner,
            Speaker::Partner => Speaker::User,
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Speaker {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "self" => Ok(Speaker::User),
            "partner" => Ok(Speaker::Partner),
            other => Err(ModelError::UnknownSpeaker(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseSource {
    LlmEstimated,
    UserAdjusted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subscale {
    Compromise,
    Avoidance,
    InteractionalReactivity,
    Separation,
    Domination,
    Submission,
}

impl Subscale {
    pub const ALL: [Subscale; 6] = [
        Subscale::Compromise,
        Subscale::Avoidance,
        Subscale::InteractionalReactivity,
        Subscale::Separation,
        Subscale::Domination,
        Subscale::Submission,
    ];
}

/// Item position (0-based) to subscale.
pub const ITEM_SUBSCALES: [Subscale; ITEM_COUNT] = [
    Subscale::Compromise,
    Subscale::Compromise,
    Subscale::Compromise,
    Subscale::Avoidance,
    Subscale::Avoidance,
    Subscale::InteractionalReactivity,
    Subscale::InteractionalReactivity,
    Subscale::Separation,
    Subscale::Separation,
    Subscale::Domination,
    Subscale::Domination,
    Subscale::Submission,
    Subscale::Submission,
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("questionnaire must have exactly {ITEM_COUNT} items, got {0}")]
    InvalidItemCount(usize),
    #[error("item {index} has score {score}, expected {LIKERT_MIN}..={LIKERT_MAX}")]
    ItemOutOfRange { index: usize, score: i64 },
    #[error("item index {0} is out of bounds (0..{ITEM_COUNT})")]
    IndexOutOfBounds(usize),
    #[error("subscale {subscale:?} = {value} is outside [1, 5]")]
    SubscaleOutOfRange { subscale: Subscale, value: Fraction },
    #[error("unknown speaker {0:?}")]
    UnknownSpeaker(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawResponse")]
pub struct QuestionnaireResponse {
    items: [u8; ITEM_COUNT],
    pub source: ResponseSource,
    pub partner: Speaker,
}

#[derive(Deserialize)]
struct RawResponse {
    items: Vec<i64>,
    source: ResponseSource,
    partner: Speaker,
}

impl TryFrom<RawResponse> for QuestionnaireResponse {
    type Error = ModelError;

    fn try_from(raw: RawResponse) -> Result<Self, Self::Error> {
        QuestionnaireResponse::new(&raw.items, raw.source, raw.partner)
    }
}

fn check_score(index: usize, score: i64) -> Result<u8, ModelError> {
    if (i64::from(LIKERT_MIN)..=i64::from(LIKERT_MAX)).contains(&score) {
        Ok(score as u8)
    } else {
        Err(ModelError::ItemOutOfRange { index, score })
    }
}

impl QuestionnaireResponse {
    pub fn new(items: &[i64], source: ResponseSource, partner: Speaker) -> Result<Self, ModelError> {
        if items.len() != ITEM_COUNT {
            return Err(ModelError::InvalidItemCount(items.len()));
        }
        let mut out = [0u8; ITEM_COUNT];
        for (i, &score) in items.iter().enumerate() {
            out[i] = check_score(i, score)?;
        }
        Ok(QuestionnaireResponse {
            items: out,
            source,
            partner,
        })
    }

    pub fn uniform(score: u8, source: ResponseSource, partner: Speaker) -> Result<Self, ModelError> {
        QuestionnaireResponse::new(&[i64::from(score); ITEM_COUNT], source, partner)
    }

    pub fn items(&self) -> &[u8; ITEM_COUNT] {
        &self.items
    }
}

/// Per-subscale means. Every value lies in `[1, 5]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubscaleScores {
    pub compromise: Fraction,
    pub avoidance: Fraction,
    pub interactional_reactivity: Fraction,
    pub separation: Fraction,
    pub domination: Fraction,
    pub submission: Fraction,
}

impl SubscaleScores {
    pub fn get(&self, subscale: Subscale) -> Fraction {
        match subscale {
            Subscale::Compromise => self.compromise,
            Subscale::Avoidance => self.avoidance,
            Subscale::InteractionalReactivity => self.interactional_reactivity,
            Subscale::Separation => self.separation,
            Subscale::Domination => self.domination,
            Subscale::Submission => self.submission,
        }
    }

    fn slot(&mut self, subscale: Subscale) -> &mut Fraction {
        match subscale {
            Subscale::Compromise => &mut self.compromise,
            Subscale::Avoidance => &mut self.avoidance,
            Subscale::InteractionalReactivity => &mut self.interactional_reactivity,
            Subscale::Separation => &mut self.separation,
            Subscale::Domination => &mut self.domination,
            Subscale::Submission => &mut self.submission,
        }
    }

    /// Builds scores in `Subscale::ALL` order, rejecting values outside `[1, 5]`.
    pub fn from_values(values: [Fraction; 6]) -> Result<Self, ModelError> {
        let mut scores = SubscaleScores {
            compromise: Fraction::ONE,
            avoidance: Fraction::ONE,
            interactional_reactivity: Fraction::ONE,
            separation: Fraction::ONE,
            domination: Fraction::ONE,
            submission: Fraction::ONE,
        };
        for (subscale, value) in Subscale::ALL.into_iter().zip(values) {
            if value < Fraction::integer(1) || value > Fraction::integer(5) {
                return Err(ModelError::SubscaleOutOfRange { subscale, value });
            }
            *scores.slot(subscale) = value;
        }
        Ok(scores)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        SubscaleScores::from_values(Subscale::ALL.map(|s| self.get(s))).map(|_| ())
    }
}

pub fn score_questionnaire(resp: &QuestionnaireResponse) -> SubscaleScores {
    let mut sums = [0u32; 6];
    let mut counts = [0u32; 6];
    for (score, subscale) in resp.items.iter().zip(ITEM_SUBSCALES) {
        let k = subscale as usize;
        sums[k] += u32::from(*score);
        counts[k] += 1;
    }
    let values = Subscale::ALL.map(|s| Fraction::new(sums[s as usize], counts[s as usize]));
    SubscaleScores::from_values(values).expect("means of valid Likert items stay in range")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConflictStyle {
    Avoidant,
    Validating,
    Volatile,
    Hostile,
}

impl ConflictStyle {
    pub const ALL: [ConflictStyle; 4] = [
        ConflictStyle::Avoidant,
        ConflictStyle::Validating,
        ConflictStyle::Volatile,
        ConflictStyle::Hostile,
    ];
}

impl fmt::Display for ConflictStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub fn engagement(s: &SubscaleScores) -> Ratio<u32> {
    Ratio::from_integer(6) - (s.avoidance.ratio() + s.separation.ratio()) / 2
}

pub fn negativity(s: &SubscaleScores) -> Ratio<u32> {
    (s.domination.ratio() + s.interactional_reactivity.ratio()) / 2
}

pub fn classify_style(s: &SubscaleScores) -> ConflictStyle {
    let engagement_floor = Ratio::from_integer(3);
    let negativity_ceiling = Ratio::new(7, 2);
    let compromise_floor = Ratio::from_integer(3);

    if engagement(s) < engagement_floor {
        ConflictStyle::Avoidant
    } else if negativity(s) >= negativity_ceiling && s.compromise.ratio() < compromise_floor {
        ConflictStyle::Hostile
    } else if negativity(s) >= negativity_ceiling {
        ConflictStyle::Volatile
    } else {
        ConflictStyle::Validating
    }
}

/// Applies `(index, score)` edits in order; later edits to the same index win.
pub fn merge_adjustments(
    estimated: &QuestionnaireResponse,
    edits: &[(usize, i64)],
) -> Result<QuestionnaireResponse, ModelError> {
    let mut items = estimated.items;
    for &(index, score) in edits {
        if index >= ITEM_COUNT {
            return Err(ModelError::IndexOutOfBounds(index));
        }
        items[index] = check_score(index, score)?;
    }
    Ok(QuestionnaireResponse {
        items,
        source: ResponseSource::UserAdjusted,
        partner: estimated.partner,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictProfile {
    pub partner: Speaker,
    pub subscales: SubscaleScores,
    pub style: ConflictStyle,
    pub negative_pattern_highlights: Vec<Label>,
}

impl ConflictProfile {
    /// True when the stored style still agrees with the stored subscales.
    pub fn is_coherent(&self) -> bool {
        self.subscales.validate().is_ok() && classify_style(&self.subscales) == self.style
    }
}

// Subscales at or above this mean are highlighted; compromise is highlighted
// when it falls below `LOW_COMPROMISE`.
const HIGHLIGHT_AT: (u32, u32) = (7, 2);
const LOW_COMPROMISE: (u32, u32) = (5, 2);

/// Behaviors worth pointing out for a scored partner, in taxonomy order.
pub fn negative_pattern_highlights(s: &SubscaleScores) -> Vec<Label> {
    let high = Fraction::new(HIGHLIGHT_AT.0, HIGHLIGHT_AT.1);
    let mut labels = Vec::new();
    if s.domination >= high {
        labels.extend([Label::Criticism, Label::Contempt, Label::ThreatUltimatum]);
    }
    if s.interactional_reactivity >= high {
        labels.extend([Label::Defensiveness, Label::Sarcasm, Label::KitchenSinking]);
    }
    if s.avoidance >= high || s.separation >= high {
        labels.push(Label::Stonewalling);
    }
    if s.submission >= high {
        labels.push(Label::Invalidation);
    }
    if s.compromise < Fraction::new(LOW_COMPROMISE.0, LOW_COMPROMISE.1) {
        labels.push(Label::BlamingYouStatement);
    }
    labels.sort();
    labels.dedup();
    labels
}

pub fn finalize_profile(resp: &QuestionnaireResponse) -> ConflictProfile {
    let subscales = score_questionnaire(resp);
    ConflictProfile {
        partner: resp.partner,
        style: classify_style(&subscales),
        negative_pattern_highlights: negative_pattern_highlights(&subscales),
        subscales,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resp(items: [i64; 13]) -> QuestionnaireResponse {
        QuestionnaireResponse::new(&items, ResponseSource::LlmEstimated, Speaker::User).unwrap()
    }

    fn scores(c: u32, a: u32, ir: u32, sep: u32, dom: u32, sub: u32) -> SubscaleScores {
        SubscaleScores::from_values([c, a, ir, sep, dom, sub].map(Fraction::integer)).unwrap()
    }

    #[test]
    fn constant_input_scores_constant() {
        let s = score_questionnaire(&resp([3; 13]));
        for sub in Subscale::ALL {
            assert_eq!(s.get(sub), Fraction::integer(3));
        }
    }

    #[test]
    fn block_constant_input() {
        let s = score_questionnaire(&resp([5, 5, 5, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1]));
        assert_eq!(s.compromise, Fraction::integer(5));
        for sub in &Subscale::ALL[1..] {
            assert_eq!(s.get(*sub), Fraction::integer(1));
        }
    }

    #[test]
    fn uneven_mean_is_exact() {
        let s = score_questionnaire(&resp([5, 4, 4, 1, 2, 3, 3, 3, 3, 3, 3, 3, 3]));
        assert_eq!(s.compromise, Fraction::new(13, 3));
        assert_eq!(s.avoidance, Fraction::new(3, 2));
    }

    #[test]
    fn rejects_malformed_responses() {
        assert_eq!(
            QuestionnaireResponse::new(&[3; 12], ResponseSource::LlmEstimated, Speaker::User),
            Err(ModelError::InvalidItemCount(12))
        );
        let mut items = [3i64; 13];
        items[4] = 6;
        assert_eq!(
            QuestionnaireResponse::new(&items, ResponseSource::LlmEstimated, Speaker::User),
            Err(ModelError::ItemOutOfRange { index: 4, score: 6 })
        );
        items[4] = 0;
        assert!(QuestionnaireResponse::new(&items, ResponseSource::LlmEstimated, Speaker::User).is_err());
    }

    #[test]
    fn deserialization_validates() {
        let ok = r#"{"items":[3,3,3,3,3,3,3,3,3,3,3,3,3],"source":"llm_estimated","partner":"self"}"#;
        let r: QuestionnaireResponse = serde_json::from_str(ok).unwrap();
        assert_eq!(r.partner, Speaker::User);
        let bad = r#"{"items":[3,3,3],"source":"llm_estimated","partner":"partner"}"#;
        assert!(serde_json::from_str::<QuestionnaireResponse>(bad).is_err());
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_style(&scores(1, 5, 1, 5, 1, 1)), ConflictStyle::Avoidant);
        assert_eq!(classify_style(&scores(5, 1, 1, 1, 1, 1)), ConflictStyle::Validating);
        assert_eq!(classify_style(&scores(4, 1, 5, 1, 5, 1)), ConflictStyle::Volatile);
        assert_eq!(classify_style(&scores(1, 1, 5, 1, 5, 1)), ConflictStyle::Hostile);
    }

    #[test]
    fn threshold_boundaries() {
        // avoidance + separation = 6 -> E = 3, not avoidant.
        assert_eq!(classify_style(&scores(3, 3, 1, 3, 1, 1)), ConflictStyle::Validating);
        let just_over = SubscaleScores {
            avoidance: Fraction::halves(7),
            ..scores(3, 3, 1, 3, 1, 1)
        };
        assert_eq!(classify_style(&just_over), ConflictStyle::Avoidant);
        // N exactly 7/2 counts as high negativity; compromise exactly 3 is not low.
        let n_edge = scores(3, 1, 3, 1, 4, 1);
        assert_eq!(classify_style(&n_edge), ConflictStyle::Volatile);
        let c_low = SubscaleScores {
            compromise: Fraction::new(8, 3),
            ..n_edge
        };
        assert_eq!(classify_style(&c_low), ConflictStyle::Hostile);
    }

    #[test]
    fn merge_adjustments_examples() {
        let est = resp([3; 13]);
        let same = merge_adjustments(&est, &[]).unwrap();
        assert_eq!(same.items(), est.items());
        assert_eq!(same.source, ResponseSource::UserAdjusted);

        let edited = merge_adjustments(&est, &[(0, 5)]).unwrap();
        assert_eq!(edited.items()[0], 5);
        assert!(edited.items()[1..].iter().all(|&v| v == 3));

        let last_wins = merge_adjustments(&est, &[(2, 1), (2, 4)]).unwrap();
        assert_eq!(last_wins.items()[2], 4);

        assert_eq!(merge_adjustments(&est, &[(13, 2)]), Err(ModelError::IndexOutOfBounds(13)));
        assert_eq!(
            merge_adjustments(&est, &[(1, 0)]),
            Err(ModelError::ItemOutOfRange { index: 1, score: 0 })
        );
    }

    #[test]
    fn profile_highlights() {
        let hostile = finalize_profile(&resp([1, 1, 1, 1, 1, 5, 5, 1, 1, 5, 5, 1, 1]));
        assert_eq!(hostile.style, ConflictStyle::Hostile);
        assert!(hostile.is_coherent());
        assert!(hostile.negative_pattern_highlights.contains(&Label::Contempt));
        assert!(hostile.negative_pattern_highlights.contains(&Label::BlamingYouStatement));
        let calm = finalize_profile(&resp([5, 5, 5, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1]));
        assert!(calm.negative_pattern_highlights.is_empty());
    }
}
