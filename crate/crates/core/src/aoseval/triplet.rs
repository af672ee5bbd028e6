use std::collections::{HashMap, HashSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::queryterms::{GoldTerms, Stopwords};
use crate::text::{normalize_phrase, parse_word_list, word_tokens};

const BUNDLED_LEXICON: &str = include_str!("../../data/polarity_lexicon.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Negative,
    Neutral,
    Positive,
}

impl Sentiment {
    fn flip(self) -> Self {
        match self {
            Sentiment::Negative => Sentiment::Positive,
            Sentiment::Positive => Sentiment::Negative,
            Sentiment::Neutral => Sentiment::Neutral,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AosTriplet {
    pub aspect: String,
    pub opinion: String,
    pub sentiment: Sentiment,
}

impl AosTriplet {
    /// Lowercases and collapses whitespace; `None` if either part is blank.
    pub fn new(aspect: &str, opinion: &str, sentiment: Sentiment) -> Option<Self> {
        let aspect = normalize_phrase(aspect);
        let opinion = normalize_phrase(opinion);
        (!aspect.is_empty() && !opinion.is_empty()).then_some(AosTriplet {
            aspect,
            opinion,
            sentiment,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractError {
    #[error("triplet extractor failed: {0}")]
    Backend(String),
    #[error("triplet response malformed: {0}")]
    Malformed(String),
}

/// Produces one triplet list per input sentence.
pub trait TripletExtractor: Send + Sync {
    fn descriptor(&self) -> String;
    fn extract(&self, sentences: &[String]) -> Result<Vec<Vec<AosTriplet>>, ExtractError>;
}

const COPULAS: &[&str] = &["is", "are", "was", "were", "seemed", "seems", "looked", "looks", "felt", "feels"];
const NEGATED_COPULAS: &[&str] = &["isn", "aren", "wasn", "weren"];
const NEGATORS: &[&str] = &["not", "never", "no", "hardly"];
const INTENSIFIERS: &[&str] = &[
    "very", "really", "so", "quite", "too", "extremely", "super", "pretty", "incredibly", "always",
    "also", "just", "rather", "fairly", "absolutely", "t",
];

/// Pattern rules over a polarity lexicon:
///
/// * `ASPECT is|was|are|were [not] [very] OPINION`, with the aspect taken
///   from the word (or known two-word aspect) right before the verb;
/// * `[not] OPINION ASPECT` for lexicon opinions followed by a content word.
///
/// Opinions missing from the lexicon are neutral; negation flips polarity.
#[derive(Debug, Clone)]
pub struct LexiconExtractor {
    polarity: HashMap<String, Sentiment>,
    stopwords: Stopwords,
    phrases: GoldTerms,
}

impl Default for LexiconExtractor {
    fn default() -> Self {
        let polarity = parse_word_list(BUNDLED_LEXICON)
            .filter_map(|line| {
                let (word, pol) = line.split_once('\t')?;
                let s = match pol.trim() {
                    "positive" => Sentiment::Positive,
                    "negative" => Sentiment::Negative,
                    _ => return None,
                };
                Some((word.trim().to_lowercase(), s))
            })
            .collect();
        LexiconExtractor {
            polarity,
            stopwords: Stopwords::default(),
            phrases: GoldTerms::hotel(),
        }
    }
}

impl LexiconExtractor {
    pub fn polarity(&self, word: &str) -> Option<Sentiment> {
        self.polarity.get(word).copied()
    }

    fn is_content(&self, token: &str) -> bool {
        !self.stopwords.contains(token)
            && !self.polarity.contains_key(token)
            && !NEGATORS.contains(&token)
            && !COPULAS.contains(&token)
            && !NEGATED_COPULAS.contains(&token)
            && !INTENSIFIERS.contains(&token)
            && !token.chars().all(|c| c.is_ascii_digit())
    }

    /// Aspect ending at token `end` (inclusive), widened to a known two-word aspect.
    fn aspect_ending_at(&self, tokens: &[String], end: usize) -> Option<String> {
        if !self.is_content(&tokens[end]) {
            return None;
        }
        if end > 0 {
            let pair = format!("{} {}", tokens[end - 1], tokens[end]);
            if self.phrases.contains(&pair) {
                return Some(pair);
            }
        }
        Some(tokens[end].clone())
    }

    /// Aspect starting at token `start`, widened to a known two-word aspect.
    fn aspect_starting_at(&self, tokens: &[String], start: usize) -> Option<String> {
        if !self.is_content(&tokens[start]) {
            return None;
        }
        if let Some(next) = tokens.get(start + 1) {
            let pair = format!("{} {next}", tokens[start]);
            if self.phrases.contains(&pair) {
                return Some(pair);
            }
        }
        Some(tokens[start].clone())
    }

    pub fn extract_sentence(&self, sentence: &str) -> Vec<AosTriplet> {
        let tokens = word_tokens(sentence);
        let mut out: Vec<AosTriplet> = Vec::new();
        let mut used = HashSet::new();
        let push = |out: &mut Vec<AosTriplet>, aspect: &str, opinion: &str, sentiment: Sentiment| {
            if let Some(t) = AosTriplet::new(aspect, opinion, sentiment) {
                if !out.iter().any(|o| o.aspect == t.aspect && o.opinion == t.opinion) {
                    out.push(t);
                }
            }
        };

        for (c, tok) in tokens.iter().enumerate() {
            let mut negated = NEGATED_COPULAS.contains(&tok.as_str());
            if c == 0 || !(negated || COPULAS.contains(&tok.as_str())) {
                continue;
            }
            let Some(aspect) = self.aspect_ending_at(&tokens, c - 1) else {
                continue;
            };
            let mut j = c + 1;
            while let Some(t) = tokens.get(j) {
                if NEGATORS.contains(&t.as_str()) {
                    negated = !negated;
                } else if !INTENSIFIERS.contains(&t.as_str()) {
                    break;
                }
                j += 1;
            }
            let Some(opinion) = tokens.get(j) else { continue };
            if self.stopwords.contains(opinion) {
                continue;
            }
            let base = self.polarity(opinion).unwrap_or(Sentiment::Neutral);
            let (text, sentiment) = if negated {
                (format!("not {opinion}"), base.flip())
            } else {
                (opinion.clone(), base)
            };
            used.insert(j);
            push(&mut out, &aspect, &text, sentiment);
        }

        for (i, tok) in tokens.iter().enumerate() {
            if used.contains(&i) {
                continue;
            }
            let Some(base) = self.polarity(tok) else { continue };
            if i + 1 >= tokens.len() {
                continue;
            }
            let Some(aspect) = self.aspect_starting_at(&tokens, i + 1) else {
                continue;
            };
            let negated = i > 0 && NEGATORS.contains(&tokens[i - 1].as_str());
            let (text, sentiment) = if negated {
                (format!("not {tok}"), base.flip())
            } else {
                (tok.clone(), base)
            };
            push(&mut out, &aspect, &text, sentiment);
        }
        out
    }
}

impl TripletExtractor for LexiconExtractor {
    fn descriptor(&self) -> String {
        "lexicon-rules".into()
    }

    fn extract(&self, sentences: &[String]) -> Result<Vec<Vec<AosTriplet>>, ExtractError> {
        Ok(sentences.iter().map(|s| self.extract_sentence(s)).collect())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AosRequest<'a> {
    pub sentences: &'a [String],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AosResponse {
    pub triplets: Vec<Vec<AosTriplet>>,
}

/// Client for the sidecar's `POST /aos` endpoint.
pub struct HttpExtractor {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl HttpExtractor {
    pub const MAX_BATCH: usize = 128;

    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, ExtractError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ExtractError::Backend(e.to_string()))?;
        Ok(HttpExtractor {
            base_url: base_url.trim_end_matches('/').to_string(),
            client,
        })
    }

    fn request(&self, sentences: &[String]) -> Result<Vec<Vec<AosTriplet>>, ExtractError> {
        let resp = self
            .client
            .post(format!("{}/aos", self.base_url))
            .json(&AosRequest { sentences })
            .send()
            .map_err(|e| ExtractError::Backend(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(ExtractError::Backend(format!("status {status}: {body}")));
        }
        let parsed: AosResponse = resp.json().map_err(|e| ExtractError::Malformed(e.to_string()))?;
        validate_aos_response(sentences.len(), parsed)
    }
}

/// Check list alignment and normalize every triplet; blank parts are rejected.
pub(crate) fn validate_aos_response(expected: usize, resp: AosResponse) -> Result<Vec<Vec<AosTriplet>>, ExtractError> {
    if resp.triplets.len() != expected {
        return Err(ExtractError::Malformed(format!(
            "expected {expected} triplet lists, got {}",
            resp.triplets.len()
        )));
    }
    resp.triplets
        .into_iter()
        .map(|list| {
            list.into_iter()
                .map(|t| {
                    AosTriplet::new(&t.aspect, &t.opinion, t.sentiment)
                        .ok_or_else(|| ExtractError::Malformed("blank aspect or opinion".into()))
                })
                .collect()
        })
        .collect()
}

impl TripletExtractor for HttpExtractor {
    fn descriptor(&self) -> String {
        format!("sidecar@{}", self.base_url)
    }

    fn extract(&self, sentences: &[String]) -> Result<Vec<Vec<AosTriplet>>, ExtractError> {
        let mut out = Vec::with_capacity(sentences.len());
        for chunk in sentences.chunks(Self::MAX_BATCH) {
            out.extend(self.request(chunk)?);
        }
        Ok(out)
    }
}
