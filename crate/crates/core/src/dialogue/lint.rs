//! Rule-based non-violent-communication lint for practice drafts.
//!
//! All word lists live in `data/lint_lexicons.json`. Offsets in findings are
//! character (not byte) offsets into the original draft, end-exclusive.

use std::collections::HashSet;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::catalog::LINT_LEXICONS_JSON;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RuleId {
    AbsoluteAlways,
    AbsoluteNever,
    YouAccusation,
    ImperativeCommand,
    InsultLexicon,
    NegativeOpener,
    MissingILanguage,
}

impl RuleId {
    pub const ALL: [RuleId; 7] = [
        RuleId::AbsoluteAlways,
        RuleId::AbsoluteNever,
        RuleId::YouAccusation,
        RuleId::ImperativeCommand,
        RuleId::InsultLexicon,
        RuleId::NegativeOpener,
        RuleId::MissingILanguage,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::AbsoluteAlways => "ABSOLUTE_ALWAYS",
            RuleId::AbsoluteNever => "ABSOLUTE_NEVER",
            RuleId::YouAccusation => "YOU_ACCUSATION",
            RuleId::ImperativeCommand => "IMPERATIVE_COMMAND",
            RuleId::InsultLexicon => "INSULT_LEXICON",
            RuleId::NegativeOpener => "NEGATIVE_OPENER",
            RuleId::MissingILanguage => "MISSING_I_LANGUAGE",
        }
    }

    pub fn parse(s: &str) -> Option<RuleId> {
        RuleId::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintFinding {
    pub rule_id: RuleId,
    pub span: (usize, usize),
    pub advice: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewrite: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Lexicons {
    pub version: u32,
    pub clause_breaks: Vec<String>,
    pub second_person: Vec<String>,
    pub second_person_subjects: Vec<String>,
    pub always: Vec<String>,
    pub never: Vec<String>,
    pub accusation_window: usize,
    pub negative_verbs: Vec<String>,
    pub negators: Vec<String>,
    pub negatable_verbs: Vec<String>,
    pub imperative_openers: Vec<String>,
    pub insults: Vec<String>,
    pub negative_openers: Vec<String>,
    pub appreciation: Vec<String>,
    pub i_language_phrases: Vec<Vec<String>>,
    pub feeling_leads: Vec<Vec<String>>,
    pub feeling_words: Vec<String>,
    pub advice: std::collections::BTreeMap<RuleId, String>,
}

pub static LEXICONS: Lazy<Lexicons> =
    Lazy::new(|| serde_json::from_str(LINT_LEXICONS_JSON).expect("bundled lint_lexicons.json"));

static WORD: Lazy<Regex> = Lazy::new(|| Regex::new(r"\p{L}+(?:'\p{L}+)*").unwrap());

#[derive(Debug, Clone)]
struct Token {
    word: String,
    start: usize,
    end: usize,
    clause: usize,
    sentence: usize,
}

struct Draft {
    tokens: Vec<Token>,
    char_len: usize,
    /// Per sentence: does it end with a question mark.
    questions: Vec<bool>,
}

fn is_clause_punct(c: char) -> bool {
    matches!(c, '.' | ',' | ';' | ':' | '!' | '?' | '\n')
}

fn is_sentence_punct(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '\n')
}

fn tokenize(text: &str, clause_breaks: &HashSet<&str>) -> Draft {
    let normalized: String = text
        .chars()
        .map(|c| if c == '\u{2019}' || c == '\u{2018}' { '\'' } else { c })
        .collect();
    // byte offset -> char offset
    let mut char_at = vec![0usize; normalized.len() + 1];
    let mut n = 0;
    for (b, c) in normalized.char_indices() {
        for slot in &mut char_at[b..b + c.len_utf8()] {
            *slot = n;
        }
        n += 1;
    }
    char_at[normalized.len()] = n;

    let mut tokens = Vec::new();
    let mut questions = vec![false];
    let (mut clause, mut sentence) = (0usize, 0usize);
    let mut last_end = 0usize;
    for m in WORD.find_iter(&normalized) {
        let gap = &normalized[last_end..m.start()];
        let saw_clause = gap.chars().any(is_clause_punct);
        let saw_sentence = gap.chars().any(is_sentence_punct);
        if !tokens.is_empty() {
            if saw_sentence {
                questions[sentence] = gap.contains('?');
                sentence += 1;
                questions.push(false);
            }
            let word = m.as_str().to_lowercase();
            if saw_clause || clause_breaks.contains(word.as_str()) {
                clause += 1;
            }
        }
        tokens.push(Token {
            word: m.as_str().to_lowercase(),
            start: char_at[m.start()],
            end: char_at[m.end()],
            clause,
            sentence,
        });
        last_end = m.end();
    }
    questions[sentence] = normalized[last_end..].contains('?');
    Draft {
        tokens,
        char_len: n,
        questions,
    }
}

struct Sets<'a> {
    second_person: HashSet<&'a str>,
    subjects: HashSet<&'a str>,
    always: HashSet<&'a str>,
    never: HashSet<&'a str>,
    negative_verbs: HashSet<&'a str>,
    negators: HashSet<&'a str>,
    negatable: HashSet<&'a str>,
    imperative: HashSet<&'a str>,
    insults: HashSet<&'a str>,
    negative_openers: HashSet<&'a str>,
    appreciation: HashSet<&'a str>,
    feeling_words: HashSet<&'a str>,
}

fn set(words: &[String]) -> HashSet<&str> {
    words.iter().map(String::as_str).collect()
}

impl Lexicons {
    fn sets(&self) -> Sets<'_> {
        Sets {
            second_person: set(&self.second_person),
            subjects: set(&self.second_person_subjects),
            always: set(&self.always),
            never: set(&self.never),
            negative_verbs: set(&self.negative_verbs),
            negators: set(&self.negators),
            negatable: set(&self.negatable_verbs),
            imperative: set(&self.imperative_openers),
            insults: set(&self.insults),
            negative_openers: set(&self.negative_openers),
            appreciation: set(&self.appreciation),
            feeling_words: set(&self.feeling_words),
        }
    }

    fn advice(&self, rule: RuleId) -> String {
        self.advice.get(&rule).cloned().unwrap_or_default()
    }

    pub fn lint(&self, draft: &str) -> Vec<LintFinding> {
        let breaks = set(&self.clause_breaks);
        let parsed = tokenize(draft, &breaks);
        let sets = self.sets();
        let tokens = &parsed.tokens;
        let mut hits: Vec<(RuleId, usize, usize)> = Vec::new();

        let second_person_clauses: HashSet<usize> = tokens
            .iter()
            .filter(|t| sets.second_person.contains(t.word.as_str()))
            .map(|t| t.clause)
            .collect();
        for t in tokens {
            if !second_person_clauses.contains(&t.clause) {
                continue;
            }
            if sets.always.contains(t.word.as_str()) {
                hits.push((RuleId::AbsoluteAlways, t.start, t.end));
            } else if sets.never.contains(t.word.as_str()) {
                hits.push((RuleId::AbsoluteNever, t.start, t.end));
            }
        }

        let mut i = 0;
        while i < tokens.len() {
            let subject = &tokens[i];
            if !sets.subjects.contains(subject.word.as_str()) {
                i += 1;
                continue;
            }
            let window_end = (i + self.accusation_window).min(tokens.len() - 1);
            let verb = (i + 1..=window_end)
                .take_while(|&j| tokens[j].clause == subject.clause)
                .find(|&j| {
                    let w = tokens[j].word.as_str();
                    sets.negative_verbs.contains(w)
                        || (sets.negatable.contains(w)
                            && j > i + 1
                            && sets.negators.contains(tokens[j - 1].word.as_str()))
                });
            match verb {
                Some(j) => {
                    hits.push((RuleId::YouAccusation, subject.start, tokens[j].end));
                    i = j + 1;
                }
                None => i += 1,
            }
        }

        let mut seen_sentence = HashSet::new();
        for t in tokens {
            if seen_sentence.insert(t.sentence)
                && !parsed.questions[t.sentence]
                && sets.imperative.contains(t.word.as_str())
            {
                hits.push((RuleId::ImperativeCommand, t.start, t.end));
            }
        }

        for t in tokens.iter().filter(|t| sets.insults.contains(t.word.as_str())) {
            hits.push((RuleId::InsultLexicon, t.start, t.end));
        }

        let first_clause = tokens.iter().take_while(|t| t.clause == 0);
        for t in first_clause {
            let w = t.word.as_str();
            if sets.appreciation.contains(w) {
                break;
            }
            if sets.negative_openers.contains(w) {
                hits.push((RuleId::NegativeOpener, t.start, t.end));
                break;
            }
        }

        if !hits.is_empty() && !self.has_i_language(tokens, &sets) {
            hits.push((RuleId::MissingILanguage, 0, parsed.char_len));
        }

        hits.sort_by_key(|&(rule, start, end)| (start, end, rule));
        hits.into_iter()
            .map(|(rule_id, start, end)| LintFinding {
                rule_id,
                span: (start, end),
                advice: self.advice(rule_id),
                rewrite: None,
            })
            .collect()
    }

    fn has_i_language(&self, tokens: &[Token], sets: &Sets<'_>) -> bool {
        let words: Vec<&str> = tokens.iter().map(|t| t.word.as_str()).collect();
        let starts_with = |at: usize, phrase: &[String]| {
            phrase.len() + at <= words.len()
                && phrase.iter().zip(&words[at..]).all(|(p, w)| p == w)
        };
        (0..words.len()).any(|at| {
            self.i_language_phrases.iter().any(|p| starts_with(at, p))
                || self.feeling_leads.iter().any(|lead| {
                    starts_with(at, lead)
                        && words[at + lead.len()..]
                            .iter()
                            .take(2)
                            .any(|w| sets.feeling_words.contains(w))
                })
        })
    }
}

/// Lints a draft with the bundled lexicons. Pure and deterministic.
pub fn nvc_lint(draft: &str) -> Vec<LintFinding> {
    LEXICONS.lint(draft)
}

pub fn rule_ids(findings: &[LintFinding]) -> std::collections::BTreeSet<RuleId> {
    findings.iter().map(|f| f.rule_id).collect()
}
