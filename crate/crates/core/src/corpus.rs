//! Review corpora: entities with their reviews and expert pros/cons references.
//!
//! On disk a corpus is JSON Lines, one entity per line:
//!
//! ```text
//! {"entity_id":"e1","name":"H","reviews":[{"date":"2020-01-01","text":"Nice room."}],
//!  "reference":{"pros":["..."],"cons":["..."]}}
//! ```
//!
//! `reference` is optional. Loading validates every invariant and reports the
//! offending line number.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate entity_id {entity_id:?}")]
    Duplicate { line: usize, entity_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Review {
    pub date: NaiveDate,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSummary {
    pub pros: Vec<String>,
    pub cons: Vec<String>,
}

impl ReferenceSummary {
    /// Both sections must be non-empty for a reference to be usable.
    pub fn is_valid(&self) -> bool {
        !self.pros.is_empty() && !self.cons.is_empty()
    }

    /// Gold sentences, pros first.
    pub fn sentences(&self) -> impl Iterator<Item = &str> {
        self.pros.iter().chain(self.cons.iter()).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entity {
    pub entity_id: String,
    pub name: String,
    pub reviews: Vec<Review>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceSummary>,
}

impl Entity {
    fn validate(&self) -> Result<(), String> {
        if self.entity_id.trim().is_empty() {
            return Err("empty entity_id".into());
        }
        if self.reviews.is_empty() {
            return Err("empty reviews".into());
        }
        for (i, review) in self.reviews.iter().enumerate() {
            if review.text.trim().is_empty() {
                return Err(format!("review {i} has empty text"));
            }
        }
        if let Some(reference) = &self.reference {
            for item in reference.pros.iter().chain(&reference.cons) {
                if item.trim().is_empty() {
                    return Err("reference contains an empty sentence".into());
                }
            }
        }
        Ok(())
    }
}

/// One sentence of one review, addressed by its position in the entity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentenceRef {
    pub entity_id: String,
    pub review_index: usize,
    pub sentence_index: usize,
    pub text: String,
}

impl SentenceRef {
    /// Identity used for exclusivity checks. Text is not part of it.
    pub fn key(&self) -> (&str, usize, usize) {
        (&self.entity_id, self.review_index, self.sentence_index)
    }
}

pub fn parse_corpus(contents: &str) -> Result<Vec<Entity>, CorpusError> {
    let mut entities = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in contents.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let entity: Entity = serde_json::from_str(raw).map_err(|e| CorpusError::Parse {
            line,
            message: e.to_string(),
        })?;
        entity
            .validate()
            .map_err(|message| CorpusError::Parse { line, message })?;
        if !seen.insert(entity.entity_id.clone()) {
            return Err(CorpusError::Duplicate {
                line,
                entity_id: entity.entity_id,
            });
        }
        entities.push(entity);
    }
    Ok(entities)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Entity>, CorpusError> {
    let path = path.as_ref();
    let contents = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&contents)
}

pub fn write_corpus(entities: &[Entity], mut out: impl Write) -> std::io::Result<()> {
    for entity in entities {
        serde_json::to_writer(&mut out, entity)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Predicate deciding whether a sentence is kept (e.g. a language filter).
pub type SentenceFilter<'a> = &'a (dyn Fn(&str) -> bool + Sync);

pub fn accept_all(_: &str) -> bool {
    true
}

/// Split every review of `entity` into sentences, in review then sentence order.
///
/// Sentences rejected by `filter` are dropped but keep their index slot, so
/// indices always address the unfiltered split.
pub fn split_sentences(entity: &Entity, filter: SentenceFilter<'_>) -> Vec<SentenceRef> {
    let mut out = Vec::new();
    for (review_index, review) in entity.reviews.iter().enumerate() {
        for (sentence_index, text) in split_text(&review.text).into_iter().enumerate() {
            if filter(text) {
                out.push(SentenceRef {
                    entity_id: entity.entity_id.clone(),
                    review_index,
                    sentence_index,
                    text: text.to_string(),
                });
            }
        }
    }
    out
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "st", "jr", "sr", "vs", "approx", "e.g", "i.e", "ave", "blvd", "rd",
    "mt", "ft", "inc", "co",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '\u{201d}', '\u{2019}'];
const OPENERS: &[char] = &['"', '\'', '(', '\u{201c}', '\u{2018}'];

/// Rule-based sentence splitter.
///
/// A boundary is a run of `.`, `!` or `?` (plus closing quotes/brackets)
/// followed by whitespace and then an uppercase letter, digit or opening
/// quote. A single `.` after a known abbreviation or a lone initial is not a
/// boundary. Newlines always end a sentence. Returned spans are trimmed
/// slices of `text`.
pub fn split_text(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;

    fn push<'t>(text: &'t str, from: usize, to: usize, spans: &mut Vec<&'t str>) {
        let s = text[from..to].trim();
        if !s.is_empty() {
            spans.push(s);
        }
    }

    while i < chars.len() {
        let (pos, c) = chars[i];
        if c == '\n' {
            push(text, start, pos, &mut spans);
            start = pos + 1;
            i += 1;
            continue;
        }
        if !matches!(c, '.' | '!' | '?') {
            i += 1;
            continue;
        }
        let punct_start = i;
        let mut j = i;
        while j < chars.len() && matches!(chars[j].1, '.' | '!' | '?') {
            j += 1;
        }
        let single_period = j - punct_start == 1 && c == '.';
        while j < chars.len() && CLOSERS.contains(&chars[j].1) {
            j += 1;
        }
        let end = chars.get(j).map_or(text.len(), |&(p, _)| p);

        // need whitespace, then a sentence-opening character
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() && chars[k].1 != '\n' {
            k += 1;
        }
        let boundary = if k == j {
            false
        } else if k == chars.len() || chars[k].1 == '\n' {
            true
        } else {
            let next = chars[k].1;
            let opens = next.is_uppercase() || next.is_ascii_digit() || OPENERS.contains(&next);
            opens && !(single_period && is_abbreviation(text, chars[punct_start].0))
        };

        if boundary {
            push(text, start, end, &mut spans);
            start = end;
        }
        i = j.max(i + 1);
    }
    push(text, start, text.len(), &mut spans);
    spans
}

fn is_abbreviation(text: &str, period_pos: usize) -> bool {
    let before = &text[..period_pos];
    let word_start = before
        .rfind(|c: char| c.is_whitespace() || c == '(' || c == '"')
        .map_or(0, |p| p + before[p..].chars().next().map_or(1, char::len_utf8));
    let word = &before[word_start..];
    if word.is_empty() {
        return false;
    }
    let mut letters = word.chars();
    if let (Some(first), None) = (letters.next(), letters.next()) {
        if first.is_uppercase() {
            return true;
        }
    }
    let lower = word.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}
