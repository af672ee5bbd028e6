//! Okapi BM25 over a pool of sentences (each sentence is one document).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::SentenceRef;
use crate::text::word_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// Pre-tokenized pool statistics, built once and queried per term.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    term_freqs: Vec<HashMap<String, u32>>,
    doc_lens: Vec<f64>,
    doc_freq: HashMap<String, u32>,
    avgdl: f64,
}

impl Bm25Index {
    pub fn new(pool: &[SentenceRef], params: Bm25Params) -> Self {
        let mut term_freqs = Vec::with_capacity(pool.len());
        let mut doc_lens = Vec::with_capacity(pool.len());
        let mut doc_freq: HashMap<String, u32> = HashMap::new();
        for sentence in pool {
            let tokens = word_tokens(&sentence.text);
            doc_lens.push(tokens.len() as f64);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for t in tf.keys() {
                *doc_freq.entry(t.clone()).or_default() += 1;
            }
            term_freqs.push(tf);
        }
        let avgdl = if doc_lens.is_empty() {
            0.0
        } else {
            doc_lens.iter().sum::<f64>() / doc_lens.len() as f64
        };
        Bm25Index {
            params,
            term_freqs,
            doc_lens,
            doc_freq,
            avgdl,
        }
    }

    pub fn len(&self) -> usize {
        self.doc_lens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_lens.is_empty()
    }

    /// `ln((N - n + 0.5) / (n + 0.5) + 1)`, always positive.
    pub fn idf(&self, token: &str) -> f64 {
        let n_docs = self.len() as f64;
        let n = self.doc_freq.get(token).copied().unwrap_or(0) as f64;
        ((n_docs - n + 0.5) / (n + 0.5) + 1.0).ln()
    }

    /// Score of every pool sentence, in pool order. Multi-token queries sum per-token scores.
    pub fn scores(&self, query: &str) -> Vec<f64> {
        let Bm25Params { k1, b } = self.params;
        let query_tokens = word_tokens(query);
        let idfs: Vec<f64> = query_tokens.iter().map(|t| self.idf(t)).collect();
        self.term_freqs
            .iter()
            .zip(&self.doc_lens)
            .map(|(tf, &dl)| {
                let norm = if self.avgdl > 0.0 { dl / self.avgdl } else { 0.0 };
                query_tokens
                    .iter()
                    .zip(&idfs)
                    .map(|(t, idf)| match tf.get(t) {
                        Some(&f) => {
                            let f = f as f64;
                            idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * norm))
                        }
                        None => 0.0,
                    })
                    .sum()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(texts: &[&str]) -> Vec<SentenceRef> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| SentenceRef {
                entity_id: "e".into(),
                review_index: 0,
                sentence_index: i,
                text: t.to_string(),
            })
            .collect()
    }

    #[test]
    fn absent_term_scores_zero() {
        let idx = Bm25Index::new(&pool(&["the room", "nice bar"]), Bm25Params::default());
        assert_eq!(idx.scores("pool"), [0.0, 0.0]);
    }

    #[test]
    fn toy_pool_against_hand_evaluation() {
        // N = 3, n(pool) = 2, dl = [4, 4, 3], avgdl = 11/3
        let idx = Bm25Index::new(
            &pool(&["the pool is warm", "the room is big", "pool pool pool"]),
            Bm25Params::default(),
        );
        let idf = (1.5f64 / 2.5 + 1.0).ln();
        let avgdl = 11.0 / 3.0;
        let s0 = idf * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 4.0 / avgdl));
        let s2 = idf * 3.0 * 2.2 / (3.0 + 1.2 * (0.25 + 0.75 * 3.0 / avgdl));
        let got = idx.scores("pool");
        assert!((got[0] - s0).abs() < 1e-12);
        assert_eq!(got[1], 0.0);
        assert!((got[2] - s2).abs() < 1e-12);
        assert!(got[2] > got[0]);
    }
}
