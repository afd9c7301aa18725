//! Pattern-based redaction applied to every piece of text before it is sent
//! to an inference provider.
//!
//! Pattern classes come from `data/redaction_patterns.json`. Each class is a
//! regex plus single-character guards on what may precede or follow a match.
//! [`Redactor::redact`] runs the classes to a fixpoint, so the result is
//! idempotent and placeholders never re-match.

use std::collections::{BTreeMap, BTreeSet};

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::catalog::REDACTION_PATTERNS_JSON;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PatternId {
    Email,
    Phone,
    Url,
    Handle,
    ProperNameHint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replacement {
    pub pattern_id: PatternId,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedactionReport {
    pub replacements: Vec<Replacement>,
}

impl RedactionReport {
    pub fn is_empty(&self) -> bool {
        self.replacements.is_empty()
    }

    pub fn count(&self, id: PatternId) -> usize {
        self.replacements
            .iter()
            .find(|r| r.pattern_id == id)
            .map_or(0, |r| r.count)
    }

    pub fn total(&self) -> usize {
        self.replacements.iter().map(|r| r.count).sum()
    }

    fn from_counts(counts: BTreeMap<PatternId, usize>) -> Self {
        RedactionReport {
            replacements: counts
                .into_iter()
                .filter(|(_, c)| *c > 0)
                .map(|(pattern_id, count)| Replacement { pattern_id, count })
                .collect(),
        }
    }

    pub fn merge(&mut self, other: &RedactionReport) {
        let mut counts: BTreeMap<PatternId, usize> = BTreeMap::new();
        for r in self.replacements.iter().chain(&other.replacements) {
            *counts.entry(r.pattern_id).or_default() += r.count;
        }
        *self = RedactionReport::from_counts(counts);
    }
}

#[derive(Debug, Clone, Default)]
pub struct RedactionOptions {
    /// Off by default; name detection is a capitalized-token hint list only.
    pub proper_names: bool,
    pub name_hints: Vec<String>,
}

#[derive(Deserialize)]
struct PatternFile {
    version: u32,
    patterns: Vec<PatternSpec>,
    proper_name: PatternSpec,
}

#[derive(Deserialize)]
struct PatternSpec {
    id: PatternId,
    placeholder: String,
    regex: String,
    #[serde(default)]
    not_preceded_by: String,
    #[serde(default)]
    not_followed_by: String,
}

#[derive(Debug, Clone)]
struct CompiledPattern {
    id: PatternId,
    placeholder: String,
    regex: Regex,
    not_preceded_by: Option<Regex>,
    not_followed_by: Option<Regex>,
}

fn char_guard(class: &str) -> Option<Regex> {
    (!class.is_empty())
        .then(|| Regex::new(&format!("^[{class}]$")).expect("valid guard character class"))
}

impl CompiledPattern {
    fn compile(spec: &PatternSpec) -> Self {
        CompiledPattern {
            id: spec.id,
            placeholder: spec.placeholder.clone(),
            regex: Regex::new(&spec.regex).expect("valid redaction regex"),
            not_preceded_by: char_guard(&spec.not_preceded_by),
            not_followed_by: char_guard(&spec.not_followed_by),
        }
    }

    fn guard_blocks(guard: &Option<Regex>, c: Option<char>) -> bool {
        match (guard, c) {
            (Some(g), Some(c)) => g.is_match(c.encode_utf8(&mut [0; 4])),
            _ => false,
        }
    }

    fn accepts(&self, text: &str, start: usize, end: usize) -> bool {
        let before = text[..start].chars().next_back();
        let after = text[end..].chars().next();
        !Self::guard_blocks(&self.not_preceded_by, before)
            && !Self::guard_blocks(&self.not_followed_by, after)
    }
}

#[derive(Debug, Clone)]
pub struct Redactor {
    version: u32,
    patterns: Vec<CompiledPattern>,
    names: Option<(CompiledPattern, BTreeSet<String>)>,
}

const MAX_PASSES: usize = 16;

impl Redactor {
    pub fn bundled() -> Self {
        Redactor::with_options(&RedactionOptions::default())
    }

    pub fn with_options(options: &RedactionOptions) -> Self {
        let file: PatternFile =
            serde_json::from_str(REDACTION_PATTERNS_JSON).expect("bundled redaction_patterns.json");
        let names = options.proper_names.then(|| {
            (
                CompiledPattern::compile(&file.proper_name),
                options.name_hints.iter().cloned().collect(),
            )
        });
        Redactor {
            version: file.version,
            patterns: file.patterns.iter().map(CompiledPattern::compile).collect(),
            names,
        }
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    /// Active pattern classes in canonical order.
    pub fn classes(&self) -> Vec<PatternId> {
        let mut ids: Vec<PatternId> = self.patterns.iter().map(|p| p.id).collect();
        if self.names.is_some() {
            ids.push(PatternId::ProperNameHint);
        }
        ids
    }

    fn pattern(&self, id: PatternId) -> Option<&CompiledPattern> {
        if id == PatternId::ProperNameHint {
            return self.names.as_ref().map(|(p, _)| p);
        }
        self.patterns.iter().find(|p| p.id == id)
    }

    /// Accepted match ranges of one class, non-overlapping and ascending.
    fn hits(&self, text: &str, id: PatternId) -> Vec<(usize, usize)> {
        let Some(pattern) = self.pattern(id) else {
            return Vec::new();
        };
        let hints = self.names.as_ref().map(|(_, h)| h);
        pattern
            .regex
            .find_iter(text)
            .filter(|m| id != PatternId::ProperNameHint || hints.is_some_and(|h| h.contains(m.as_str())))
            .filter(|m| pattern.accepts(text, m.start(), m.end()))
            .map(|m| (m.start(), m.end()))
            .collect()
    }

    /// One left-to-right pass of a single pattern class.
    pub fn apply_class(&self, text: &str, id: PatternId) -> (String, usize) {
        let hits: Vec<_> = self.hits(text, id).into_iter().map(|(s, e)| (s, e, id)).collect();
        let n = hits.len();
        (self.splice(text, &hits), n)
    }

    fn splice(&self, text: &str, hits: &[(usize, usize, PatternId)]) -> String {
        let mut out = String::with_capacity(text.len());
        let mut last = 0;
        for &(start, end, id) in hits {
            out.push_str(&text[last..start]);
            out.push_str(&self.pattern(id).expect("hit has a pattern").placeholder);
            last = end;
        }
        out.push_str(&text[last..]);
        out
    }

    /// Replaces matches of the listed classes until nothing changes. Each
    /// pass collects every class's matches and keeps the leftmost, then
    /// longest, then canonically first one where they overlap, so the
    /// result does not depend on the order of `classes`.
    pub fn redact_in_order(&self, text: &str, classes: &[PatternId]) -> (String, RedactionReport) {
        let canonical = self.classes();
        let ids: Vec<PatternId> = canonical.iter().copied().filter(|id| classes.contains(id)).collect();
        let mut current = text.to_string();
        let mut counts: BTreeMap<PatternId, usize> = BTreeMap::new();
        for _ in 0..MAX_PASSES {
            let mut all: Vec<(usize, usize, usize, PatternId)> = Vec::new();
            for (rank, &id) in ids.iter().enumerate() {
                all.extend(self.hits(&current, id).into_iter().map(|(s, e)| (s, e, rank, id)));
            }
            if all.is_empty() {
                break;
            }
            all.sort_by_key(|&(s, e, rank, _)| (s, std::cmp::Reverse(e), rank));
            let mut kept = Vec::new();
            let mut covered = 0;
            for (s, e, _, id) in all {
                if s >= covered {
                    kept.push((s, e, id));
                    *counts.entry(id).or_default() += 1;
                    covered = e;
                }
            }
            current = self.splice(&current, &kept);
        }
        (current, RedactionReport::from_counts(counts))
    }

    pub fn redact(&self, text: &str) -> (String, RedactionReport) {
        self.redact_in_order(text, &self.classes())
    }

    /// True when any active class would replace something in `text`.
    pub fn finds_sensitive(&self, text: &str) -> bool {
        self.classes()
            .into_iter()
            .any(|id| self.apply_class(text, id).1 > 0)
    }
}

static DEFAULT_REDACTOR: Lazy<Redactor> = Lazy::new(Redactor::bundled);

/// Redacts with the always-on classes (emails, phones, URLs, handles).
pub fn redact(text: &str) -> (String, RedactionReport) {
    DEFAULT_REDACTOR.redact(text)
}
