//! Reference-based scoring: ROUGE-1 and ROUGE-L F1, a greedy embedding match
//! score, and the random and oracle extractive baselines.

use std::collections::{HashMap, HashSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::{Entity, ReferenceSummary, SentenceRef};
use crate::retrieval::{cosine, EmbedError, Embedder};
use crate::text::word_tokens;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("reference summary needs non-empty pros and cons")]
    InvalidReference,
    #[error("sentence pool is empty")]
    EmptyPool,
    #[error("cannot sample {k} sentences from a pool of {pool}")]
    SampleTooLarge { k: usize, pool: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("system summary for unknown entity {0:?}")]
    UnknownEntity(String),
    #[error("duplicate system summary for entity {0:?}")]
    DuplicateEntity(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_overlap(overlap: usize, candidate_len: usize, reference_len: usize) -> Self {
        let ratio = |n: usize| if n == 0 { 0.0 } else { overlap as f64 / n as f64 };
        let (precision, recall) = (ratio(candidate_len), ratio(reference_len));
        RougeScore {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Unigram overlap with clipped counts.
pub fn rouge1_f1(candidate: &str, reference: &str) -> RougeScore {
    let cand = word_tokens(candidate);
    let refs = word_tokens(reference);
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &refs {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0;
    for t in &cand {
        if let Some(n) = counts.get_mut(t.as_str()) {
            if *n > 0 {
                *n -= 1;
                overlap += 1;
            }
        }
    }
    RougeScore::from_overlap(overlap, cand.len(), refs.len())
}

/// Longest-common-subsequence overlap over word tokens.
pub fn rouge_l_f1(candidate: &str, reference: &str) -> RougeScore {
    let cand = word_tokens(candidate);
    let refs = word_tokens(reference);
    RougeScore::from_overlap(lcs_len(&cand, &refs), cand.len(), refs.len())
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Join sentences with single spaces, giving each terminal punctuation.
pub fn join_sentences<'a>(items: impl IntoIterator<Item = &'a str>) -> String {
    items
        .into_iter()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            if s.ends_with(['.', '!', '?']) {
                s.to_string()
            } else {
                format!("{s}.")
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Pros then cons as one generic reference text.
pub fn merge_reference(reference: &ReferenceSummary) -> Result<String, EvalError> {
    if !reference.is_valid() {
        return Err(EvalError::InvalidReference);
    }
    Ok(join_sentences(reference.sentences()))
}

/// Pool index of the best ROUGE-L match for each gold sentence, pros then cons.
/// Ties go to the earlier pool sentence.
pub fn oracle_selection(reference: &ReferenceSummary, pool: &[SentenceRef]) -> Result<Vec<usize>, EvalError> {
    if pool.is_empty() {
        return Err(EvalError::EmptyPool);
    }
    Ok(reference
        .sentences()
        .map(|gold| {
            let mut best = (0, f64::NEG_INFINITY);
            for (i, s) in pool.iter().enumerate() {
                let score = rouge_l_f1(&s.text, gold).f1;
                if score > best.1 {
                    best = (i, score);
                }
            }
            best.0
        })
        .collect())
}

pub fn oracle_summary(reference: &ReferenceSummary, pool: &[SentenceRef]) -> Result<String, EvalError> {
    let picks = oracle_selection(reference, pool)?;
    Ok(join_sentences(picks.iter().map(|&i| pool[i].text.as_str())))
}

/// `k` distinct pool indices drawn uniformly with a seeded ChaCha8 stream,
/// returned in corpus order.
pub fn random_selection(pool_len: usize, k: usize, seed: u64) -> Result<Vec<usize>, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if k > pool_len {
        return Err(EvalError::SampleTooLarge { k, pool: pool_len });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, pool_len, k).into_vec();
    picks.sort_unstable();
    Ok(picks)
}

pub fn random_summary(pool: &[SentenceRef], k: usize, seed: u64) -> Result<String, EvalError> {
    let picks = random_selection(pool.len(), k, seed)?;
    Ok(join_sentences(picks.iter().map(|&i| pool[i].text.as_str())))
}

/// Greedy token matching F1: each token is paired with its most similar
/// token on the other side. Not a reimplementation of any published scorer.
pub fn greedy_embed_score(candidate: &str, reference: &str, embedder: &dyn Embedder) -> Result<f64, EvalError> {
    let cand = word_tokens(candidate);
    let refs = word_tokens(reference);
    if cand.is_empty() || refs.is_empty() {
        return Ok(0.0);
    }
    let mut vocab: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    for t in cand.iter().chain(&refs) {
        if seen.insert(t.as_str()) {
            vocab.push(t.clone());
        }
    }
    let vectors = embedder.embed(&vocab)?;
    if vectors.len() != vocab.len() {
        return Err(EmbedError::Malformed(format!("expected {} vectors, got {}", vocab.len(), vectors.len())).into());
    }
    let lookup: HashMap<&str, &Vec<f64>> = vocab.iter().map(String::as_str).zip(&vectors).collect();
    let greedy = |from: &[String], to: &[String]| {
        from.iter()
            .map(|a| {
                to.iter()
                    .map(|b| cosine(lookup[a.as_str()], lookup[b.as_str()]))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum::<f64>()
            / from.len() as f64
    };
    let p = greedy(&cand, &refs);
    let r = greedy(&refs, &cand);
    Ok(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 })
}

/// A system summary as read from a run's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSummary {
    pub entity_id: String,
    #[serde(alias = "merged_text")]
    pub text: String,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub entity_id: String,
    pub valid: bool,
    pub r1: Option<f64>,
    pub rl: Option<f64>,
    pub embed: Option<f64>,
}

/// Per-entity scores in [0, 1] plus means over valid entities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean_r1: Option<f64>,
    pub mean_rl: Option<f64>,
    pub mean_embed: Option<f64>,
    pub valid: usize,
    pub invalid: usize,
    /// System summaries whose entity has no reference.
    pub unreferenced: usize,
}

/// Scale to a percentage with two decimals.
pub fn percent(x: f64) -> f64 {
    (x * 10_000.0).round() / 100.0
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl EvalReport {
    /// Table-style JSON: scores multiplied by 100 and rounded to 2 decimals.
    pub fn to_json(&self) -> Value {
        let p = |x: Option<f64>| x.map(percent);
        json!({
            "corpus": {
                "r1": p(self.mean_r1),
                "rl": p(self.mean_rl),
                "embed": p(self.mean_embed),
                "valid": self.valid,
                "invalid": self.invalid,
                "unreferenced": self.unreferenced,
            },
            "entities": self.rows.iter().map(|r| json!({
                "entity_id": r.entity_id,
                "valid": r.valid,
                "r1": p(r.r1),
                "rl": p(r.rl),
                "embed": p(r.embed),
            })).collect::<Vec<_>>(),
        })
    }
}

/// Score system summaries against merged references. Invalid summaries get
/// a row without scores and are left out of the means.
pub fn evaluate_rouge(
    system: &[SystemSummary],
    corpus: &[Entity],
    embedder: Option<&dyn Embedder>,
) -> Result<EvalReport, EvalError> {
    let by_id: HashMap<&str, &Entity> = corpus.iter().map(|e| (e.entity_id.as_str(), e)).collect();
    let mut seen = HashSet::new();
    let mut jobs = Vec::new();
    let mut unreferenced = 0;
    for s in system {
        let entity = by_id
            .get(s.entity_id.as_str())
            .ok_or_else(|| EvalError::UnknownEntity(s.entity_id.clone()))?;
        if !seen.insert(s.entity_id.as_str()) {
            return Err(EvalError::DuplicateEntity(s.entity_id.clone()));
        }
        match &entity.reference {
            Some(r) => jobs.push((s, merge_reference(r)?)),
            None => unreferenced += 1,
        }
    }

    let mut rows = jobs
        .par_iter()
        .map(|(s, reference)| -> Result<EvalRow, EvalError> {
            if !s.valid {
                return Ok(EvalRow {
                    entity_id: s.entity_id.clone(),
                    valid: false,
                    r1: None,
                    rl: None,
                    embed: None,
                });
            }
            let embed = embedder.map(|e| greedy_embed_score(&s.text, reference, e)).transpose()?;
            Ok(EvalRow {
                entity_id: s.entity_id.clone(),
                valid: true,
                r1: Some(rouge1_f1(&s.text, reference).f1),
                rl: Some(rouge_l_f1(&s.text, reference).f1),
                embed,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));

    let valid = rows.iter().filter(|r| r.valid).count();
    Ok(EvalReport {
        mean_r1: mean(rows.iter().filter_map(|r| r.r1)),
        mean_rl: mean(rows.iter().filter_map(|r| r.rl)),
        mean_embed: mean(rows.iter().filter_map(|r| r.embed)),
        invalid: rows.len() - valid,
        valid,
        unreferenced,
        rows,
    })
}
