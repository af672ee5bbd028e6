//! Query-term mining: frequent unigrams and ordered skip bigrams, filtered
//! against a domain aspect vocabulary and pruned for redundancy.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::SentenceRef;
use crate::text::{normalize_phrase, parse_word_list, term_tokens};

pub const DEFAULT_WINDOW: usize = 4;
pub const DEFAULT_MIN_FREQUENCY: usize = 15;
pub const DEFAULT_Q_MAX: usize = 15;

const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords.txt");
const BUNDLED_HOTEL_TERMS: &str = include_str!("../data/hotel_aspect_terms.txt");

#[derive(Debug, Error)]
pub enum TermError {
    #[error("window must be at least 2, got {0}")]
    Window(usize),
    #[error("min_frequency must be at least 1")]
    MinFrequency,
    #[error("q_max must be at least 1")]
    QMax,
    #[error("gold term list is empty")]
    EmptyGold,
    #[error("failed to read term list {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A unigram or a two-token skip bigram, lowercase.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Term(Vec<String>);

impl Term {
    pub fn new(tokens: Vec<String>) -> Self {
        Term(tokens)
    }

    pub fn parse(s: &str) -> Self {
        Term(s.split_whitespace().map(str::to_lowercase).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn is_multiword(&self) -> bool {
        self.0.len() > 1
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Term::parse(&s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCandidate {
    pub term: Term,
    pub frequency: usize,
    /// Global token positions of the first occurrence (first, last token).
    /// Unigrams use the same position twice. Used only as a tiebreak.
    pub first_seen: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTermSet {
    pub terms: Vec<TermCandidate>,
    pub q_max: usize,
}

impl QueryTermSet {
    pub fn iter(&self) -> impl Iterator<Item = &Term> {
        self.terms.iter().map(|c| &c.term)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Build a set from already ranked terms, e.g. for tests or externally supplied queries.
    pub fn from_ranked(terms: impl IntoIterator<Item = Term>) -> Self {
        let terms: Vec<TermCandidate> = terms
            .into_iter()
            .enumerate()
            .map(|(i, term)| TermCandidate {
                term,
                frequency: 0,
                first_seen: (i, i),
            })
            .collect();
        let q_max = terms.len().max(1);
        QueryTermSet { terms, q_max }
    }
}

#[derive(Debug, Clone)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Stopwords(words.into_iter().map(|w| w.as_ref().to_lowercase()).collect())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Stopwords::from_words(parse_word_list(BUNDLED_STOPWORDS))
    }
}

/// Domain vocabulary of accepted aspect words and phrases.
#[derive(Debug, Clone)]
pub struct GoldTerms(HashSet<String>);

impl GoldTerms {
    pub fn from_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        GoldTerms(
            terms
                .into_iter()
                .map(|t| normalize_phrase(t.as_ref()))
                .filter(|t| !t.is_empty())
                .collect(),
        )
    }

    /// The bundled hotel-domain vocabulary.
    pub fn hotel() -> Self {
        GoldTerms::from_terms(parse_word_list(BUNDLED_HOTEL_TERMS))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TermError> {
        let path = path.as_ref();
        let contents = std::fs::read_to_string(path).map_err(|source| TermError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(GoldTerms::from_terms(parse_word_list(&contents)))
    }

    pub fn contains(&self, phrase: &str) -> bool {
        self.0.contains(phrase)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Unigrams need exact membership; bigrams need both tokens or the joined phrase.
    pub fn accepts(&self, term: &Term) -> bool {
        match term.tokens() {
            [single] => self.contains(single),
            tokens => {
                tokens.iter().all(|t| self.contains(t)) || self.contains(&term.to_string())
            }
        }
    }
}

/// Count unigrams and ordered skip bigrams over `sentences`.
///
/// A pair `(i, j)` with `i < j <= i + window - 1` inside one sentence counts
/// once per occurrence. Stopwords still occupy positions but never form
/// terms. Pairs of identical tokens are skipped. Candidates below
/// `min_frequency` are dropped and the rest returned in rank order:
/// frequency descending, then first occurrence.
pub fn extract_candidates(
    sentences: &[SentenceRef],
    window: usize,
    min_frequency: usize,
    stopwords: &Stopwords,
) -> Result<Vec<TermCandidate>, TermError> {
    if window < 2 {
        return Err(TermError::Window(window));
    }
    if min_frequency < 1 {
        return Err(TermError::MinFrequency);
    }

    let mut counts: HashMap<Term, (usize, (usize, usize))> = HashMap::new();
    let mut offset = 0usize;
    for sentence in sentences {
        let tokens = term_tokens(&sentence.text);
        for (i, first) in tokens.iter().enumerate() {
            if stopwords.contains(first) {
                continue;
            }
            let pos = offset + i;
            counts
                .entry(Term(vec![first.clone()]))
                .or_insert((0, (pos, pos)))
                .0 += 1;
            let last = (i + window - 1).min(tokens.len().saturating_sub(1));
            for (j, second) in tokens.iter().enumerate().take(last + 1).skip(i + 1) {
                if second == first || stopwords.contains(second) {
                    continue;
                }
                counts
                    .entry(Term(vec![first.clone(), second.clone()]))
                    .or_insert((0, (pos, offset + j)))
                    .0 += 1;
            }
        }
        offset += tokens.len();
    }

    let mut out: Vec<TermCandidate> = counts
        .into_iter()
        .filter(|(_, (freq, _))| *freq >= min_frequency)
        .map(|(term, (frequency, first_seen))| TermCandidate {
            term,
            frequency,
            first_seen,
        })
        .collect();
    sort_by_rank(&mut out);
    Ok(out)
}

fn sort_by_rank(candidates: &mut [TermCandidate]) {
    candidates.sort_by(|a, b| {
        b.frequency
            .cmp(&a.frequency)
            .then(a.first_seen.cmp(&b.first_seen))
            .then_with(|| a.term.cmp(&b.term))
    });
}

/// Keep domain terms, drop redundant unigrams, cut to `q_max`.
///
/// A retained unigram is removed when its word is a constituent of any
/// retained multi-word term.
pub fn refine_terms(
    candidates: &[TermCandidate],
    gold: &GoldTerms,
    q_max: usize,
) -> Result<QueryTermSet, TermError> {
    if gold.is_empty() {
        return Err(TermError::EmptyGold);
    }
    if q_max < 1 {
        return Err(TermError::QMax);
    }

    let mut seen = HashSet::new();
    let mut kept: Vec<TermCandidate> = candidates
        .iter()
        .filter(|c| gold.accepts(&c.term) && seen.insert(c.term.clone()))
        .cloned()
        .collect();

    let covered: HashSet<String> = kept
        .iter()
        .filter(|c| c.term.is_multiword())
        .flat_map(|c| c.term.tokens().iter().cloned())
        .collect();
    kept.retain(|c| c.term.is_multiword() || !covered.contains(&c.term.tokens()[0]));

    sort_by_rank(&mut kept);
    kept.truncate(q_max);
    Ok(QueryTermSet { terms: kept, q_max })
}

/// Convenience: mine and refine in one step.
pub fn query_terms(
    sentences: &[SentenceRef],
    window: usize,
    min_frequency: usize,
    stopwords: &Stopwords,
    gold: &GoldTerms,
    q_max: usize,
) -> Result<QueryTermSet, TermError> {
    let candidates = extract_candidates(sentences, window, min_frequency, stopwords)?;
    refine_terms(&candidates, gold, q_max)
}
