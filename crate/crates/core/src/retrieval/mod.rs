//! Evidence retrieval: rank review sentences per query term and hand each
//! sentence to at most one term.

mod bm25;
mod embed;

use std::collections::HashSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SentenceRef;
use crate::queryterms::{QueryTermSet, Term};

pub use bm25::{Bm25Index, Bm25Params};
pub use embed::{
    cosine, fnv1a, validate_embed_response, EmbedError, EmbedRequest, EmbedResponse, Embedder,
    HashingEmbedder, HttpEmbedder,
};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("retrieval failed: {0}")]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSentence {
    pub sentence: SentenceRef,
    pub score: f64,
}

/// Per-term evidence lists, in term rank order. Lists are pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub assignments: IndexMap<String, Vec<ScoredSentence>>,
    pub k: usize,
}

impl RetrievalResult {
    pub fn evidence(&self, term: &str) -> &[ScoredSentence] {
        self.assignments.get(term).map_or(&[], Vec::as_slice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankerKind {
    Bm25,
    Dense,
}

impl std::str::FromStr for RankerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bm25" => Ok(RankerKind::Bm25),
            "dense" => Ok(RankerKind::Dense),
            other => Err(format!("unknown ranker {other:?} (expected bm25 or dense)")),
        }
    }
}

pub enum Ranker<'a> {
    Bm25(Bm25Params),
    Dense(&'a dyn Embedder),
}

impl Ranker<'_> {
    pub fn kind(&self) -> RankerKind {
        match self {
            Ranker::Bm25(_) => RankerKind::Bm25,
            Ranker::Dense(_) => RankerKind::Dense,
        }
    }
}

/// A ranker bound to one pool, so pool-side work happens once per entity.
pub enum PoolIndex<'a> {
    Bm25(Bm25Index),
    Dense {
        embedder: &'a dyn Embedder,
        vectors: Vec<Vec<f64>>,
    },
}

impl<'a> PoolIndex<'a> {
    pub fn build(pool: &[SentenceRef], ranker: &Ranker<'a>) -> Result<Self, RetrievalError> {
        Ok(match ranker {
            Ranker::Bm25(params) => PoolIndex::Bm25(Bm25Index::new(pool, *params)),
            Ranker::Dense(embedder) => {
                let texts: Vec<String> = pool.iter().map(|s| s.text.clone()).collect();
                let vectors = embedder.embed(&texts)?;
                if vectors.len() != pool.len() {
                    return Err(EmbedError::Malformed(format!(
                        "expected {} vectors, got {}",
                        pool.len(),
                        vectors.len()
                    ))
                    .into());
                }
                PoolIndex::Dense {
                    embedder: *embedder,
                    vectors,
                }
            }
        })
    }

    /// Scores in pool order.
    pub fn scores(&self, query: &str) -> Result<Vec<f64>, RetrievalError> {
        match self {
            PoolIndex::Bm25(index) => Ok(index.scores(query)),
            PoolIndex::Dense { embedder, vectors } => {
                let q = embedder.embed_one(query)?;
                Ok(vectors.iter().map(|v| cosine(&q, v)).collect())
            }
        }
    }

    /// Pool indices with scores, best first, ties in pool order.
    pub fn ranking(&self, query: &str) -> Result<Vec<(usize, f64)>, RetrievalError> {
        Ok(rank_scores(self.scores(query)?))
    }
}

/// Stable descending sort of `(index, score)` pairs.
pub fn rank_scores(scores: Vec<f64>) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked
}

fn to_scored(pool: &[SentenceRef], ranked: Vec<(usize, f64)>) -> Vec<ScoredSentence> {
    ranked
        .into_iter()
        .map(|(i, score)| ScoredSentence {
            sentence: pool[i].clone(),
            score,
        })
        .collect()
}

/// Full BM25 ranking of `pool` for `query`.
pub fn bm25_rank(query: &str, pool: &[SentenceRef], k1: f64, b: f64) -> Vec<ScoredSentence> {
    let index = Bm25Index::new(pool, Bm25Params { k1, b });
    to_scored(pool, rank_scores(index.scores(query)))
}

/// Full cosine-similarity ranking of `pool` for `query`.
pub fn dense_rank(
    query: &str,
    pool: &[SentenceRef],
    embedder: &dyn Embedder,
) -> Result<Vec<ScoredSentence>, RetrievalError> {
    let index = PoolIndex::build(pool, &Ranker::Dense(embedder))?;
    Ok(to_scored(pool, index.ranking(query)?))
}

/// Top-`k` evidence per term, processing terms in rank order and skipping
/// sentences already taken by an earlier term.
pub fn retrieve_exclusive(
    terms: &QueryTermSet,
    pool: &[SentenceRef],
    k: usize,
    ranker: &Ranker<'_>,
) -> Result<RetrievalResult, RetrievalError> {
    let terms: Vec<&Term> = terms.iter().collect();
    retrieve_exclusive_terms(&terms, pool, k, ranker)
}

pub fn retrieve_exclusive_terms(
    terms: &[&Term],
    pool: &[SentenceRef],
    k: usize,
    ranker: &Ranker<'_>,
) -> Result<RetrievalResult, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    let mut assignments = IndexMap::new();
    if pool.is_empty() {
        for term in terms {
            assignments.insert(term.to_string(), Vec::new());
        }
        return Ok(RetrievalResult { assignments, k });
    }
    let index = PoolIndex::build(pool, ranker)?;
    let mut taken: HashSet<(String, usize, usize)> = HashSet::new();
    for term in terms {
        let query = term.to_string();
        let mut picked = Vec::with_capacity(k);
        for (i, score) in index.ranking(&query)? {
            if picked.len() == k {
                break;
            }
            let s = &pool[i];
            let key = (s.entity_id.clone(), s.review_index, s.sentence_index);
            if taken.insert(key) {
                picked.push(ScoredSentence {
                    sentence: s.clone(),
                    score,
                });
            }
        }
        assignments.insert(query, picked);
    }
    Ok(RetrievalResult { assignments, k })
}
