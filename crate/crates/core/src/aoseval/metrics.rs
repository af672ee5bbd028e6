use std::collections::{BTreeMap, HashSet};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::triplet::{AosTriplet, Sentiment, TripletExtractor};
use crate::refeval::percent;
use crate::retrieval::{cosine, EmbedError, Embedder, RetrievalResult};

#[derive(Debug, Error)]
pub enum AosError {
    #[error("generated sentence for term {0:?} has no retrieval assignment")]
    UnknownTerm(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// One query term: triplets of its evidence and of its generated sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationUnit {
    pub query: String,
    pub retrieved_triplets: Vec<AosTriplet>,
    pub generated_triplets: Vec<AosTriplet>,
}

fn token_set(s: &str) -> HashSet<&str> {
    s.split_whitespace().collect()
}

/// True when one aspect's tokens are a subset of the other's.
pub fn aspects_match(a: &str, b: &str) -> bool {
    let (a, b) = (token_set(a), token_set(b));
    !a.is_empty() && !b.is_empty() && (a.is_subset(&b) || b.is_subset(&a))
}

/// Most frequent retrieved aspect; ties go to the lexicographically smallest.
pub fn target_aspect(unit: &VerificationUnit) -> Option<&str> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &unit.retrieved_triplets {
        *counts.entry(t.aspect.as_str()).or_default() += 1;
    }
    // BTreeMap iterates in ascending key order, so the first maximum wins.
    let mut best: Option<(&str, usize)> = None;
    for (aspect, n) in counts {
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((aspect, n));
        }
    }
    best.map(|(a, _)| a)
}

fn generated_for<'u>(unit: &'u VerificationUnit, aspect: &str) -> Vec<&'u AosTriplet> {
    unit.generated_triplets
        .iter()
        .filter(|g| aspects_match(aspect, &g.aspect))
        .collect()
}

/// 1 when the top evidence aspect appears among the generated aspects.
/// Undefined without evidence triplets.
pub fn aspect_relevance(unit: &VerificationUnit) -> Option<f64> {
    let target = target_aspect(unit)?;
    Some(if generated_for(unit, target).is_empty() { 0.0 } else { 1.0 })
}

/// 1 when the generated sentiment for the top aspect equals the majority
/// non-neutral evidence sentiment for it (ties count as positive).
pub fn sentiment_factuality(unit: &VerificationUnit) -> Option<f64> {
    let target = target_aspect(unit)?;
    let generated = *generated_for(unit, target).first()?;
    if generated.sentiment == Sentiment::Neutral {
        return None;
    }
    let (mut pos, mut neg) = (0usize, 0usize);
    for t in unit.retrieved_triplets.iter().filter(|t| t.aspect == target) {
        match t.sentiment {
            Sentiment::Positive => pos += 1,
            Sentiment::Negative => neg += 1,
            Sentiment::Neutral => {}
        }
    }
    if pos + neg == 0 {
        return None;
    }
    let majority = if pos >= neg { Sentiment::Positive } else { Sentiment::Negative };
    Some(if generated.sentiment == majority { 1.0 } else { 0.0 })
}

/// 1 on an exact opinion match, else the best cosine similarity between the
/// generated opinion and evidence opinions with the same aspect and
/// sentiment, clamped to [0, 1].
pub fn opinion_faithfulness(unit: &VerificationUnit, embedder: &dyn Embedder) -> Result<Option<f64>, AosError> {
    let Some(target) = target_aspect(unit) else {
        return Ok(None);
    };
    let Some(&generated) = generated_for(unit, target).first() else {
        return Ok(None);
    };
    let mut opinions: Vec<String> = Vec::new();
    for t in &unit.retrieved_triplets {
        if t.aspect == target && t.sentiment == generated.sentiment && !opinions.contains(&t.opinion) {
            opinions.push(t.opinion.clone());
        }
    }
    if opinions.is_empty() {
        return Ok(None);
    }
    if opinions.contains(&generated.opinion) {
        return Ok(Some(1.0));
    }
    let g = embedder.embed_one(&generated.opinion)?;
    let vectors = embedder.embed(&opinions)?;
    let best = vectors
        .iter()
        .map(|v| cosine(&g, v))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Some(best.clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRow {
    pub query: String,
    pub target_aspect: Option<String>,
    pub ar: Option<f64>,
    pub sf: Option<f64>,
    pub of: Option<f64>,
    /// More than one generated triplet matched the target aspect.
    pub ambiguous: bool,
    /// Triplet extraction failed; the unit counts toward no metric.
    pub extraction_failed: bool,
}

/// Means over units where each metric is defined, with their denominators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub ar: Option<f64>,
    pub sf: Option<f64>,
    pub of: Option<f64>,
    pub ar_defined: usize,
    pub sf_defined: usize,
    pub of_defined: usize,
    pub units: usize,
    pub extraction_failures: usize,
    pub ambiguous: usize,
    pub rows: Vec<VerificationRow>,
}

impl VerificationReport {
    fn from_rows(rows: Vec<VerificationRow>) -> Self {
        let agg = |f: fn(&VerificationRow) -> Option<f64>| {
            let vals: Vec<f64> = rows.iter().filter_map(f).collect();
            let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
            (mean, vals.len())
        };
        let (ar, ar_defined) = agg(|r| r.ar);
        let (sf, sf_defined) = agg(|r| r.sf);
        let (of, of_defined) = agg(|r| r.of);
        VerificationReport {
            ar,
            sf,
            of,
            ar_defined,
            sf_defined,
            of_defined,
            units: rows.len(),
            extraction_failures: rows.iter().filter(|r| r.extraction_failed).count(),
            ambiguous: rows.iter().filter(|r| r.ambiguous).count(),
            rows,
        }
    }

    /// Pool the units of several reports (e.g. one per entity) into one.
    pub fn combine(reports: impl IntoIterator<Item = VerificationReport>) -> Self {
        Self::from_rows(reports.into_iter().flat_map(|r| r.rows).collect())
    }

    /// Table-style JSON: scores multiplied by 100 and rounded to 2 decimals.
    pub fn to_json(&self) -> Value {
        let p = |x: Option<f64>| x.map(percent);
        json!({
            "ar": p(self.ar),
            "sf": p(self.sf),
            "of": p(self.of),
            "denominators": {"ar": self.ar_defined, "sf": self.sf_defined, "of": self.of_defined},
            "units": self.units,
            "extraction_failures": self.extraction_failures,
            "ambiguous": self.ambiguous,
            "queries": self.rows.iter().map(|r| json!({
                "query": r.query,
                "target_aspect": r.target_aspect,
                "ar": p(r.ar),
                "sf": p(r.sf),
                "of": p(r.of),
                "ambiguous": r.ambiguous,
                "extraction_failed": r.extraction_failed,
            })).collect::<Vec<_>>(),
        })
    }
}

fn score_unit(unit: &VerificationUnit, embedder: &dyn Embedder) -> Result<VerificationRow, AosError> {
    let target = target_aspect(unit);
    Ok(VerificationRow {
        query: unit.query.clone(),
        target_aspect: target.map(str::to_owned),
        ar: aspect_relevance(unit),
        sf: sentiment_factuality(unit),
        of: opinion_faithfulness(unit, embedder)?,
        ambiguous: target.is_some_and(|a| generated_for(unit, a).len() > 1),
        extraction_failed: false,
    })
}

pub fn verify_units(units: &[VerificationUnit], embedder: &dyn Embedder) -> Result<VerificationReport, AosError> {
    let rows = units
        .iter()
        .map(|u| score_unit(u, embedder))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VerificationReport::from_rows(rows))
}

/// Build one unit per generated term from its exclusive evidence and score it.
/// Units are reported in retrieval (rank) order.
pub fn verify_rag(
    assignments: &RetrievalResult,
    generated: &IndexMap<String, String>,
    extractor: &dyn TripletExtractor,
    embedder: &dyn Embedder,
) -> Result<VerificationReport, AosError> {
    if let Some(term) = generated.keys().find(|t| !assignments.assignments.contains_key(*t)) {
        return Err(AosError::UnknownTerm(term.clone()));
    }
    let jobs: Vec<(&String, &String)> = assignments
        .assignments
        .keys()
        .filter_map(|term| generated.get(term).map(|g| (term, g)))
        .collect();

    let rows = jobs
        .par_iter()
        .map(|&(term, sentence)| -> Result<VerificationRow, AosError> {
            let mut texts: Vec<String> = assignments
                .evidence(term)
                .iter()
                .map(|s| s.sentence.text.clone())
                .collect();
            texts.push(sentence.clone());
            match extractor.extract(&texts) {
                Ok(mut lists) if lists.len() == texts.len() => {
                    let generated_triplets = lists.pop().unwrap_or_default();
                    let unit = VerificationUnit {
                        query: term.clone(),
                        retrieved_triplets: lists.into_iter().flatten().collect(),
                        generated_triplets,
                    };
                    score_unit(&unit, embedder)
                }
                _ => Ok(VerificationRow {
                    query: term.clone(),
                    target_aspect: None,
                    ar: None,
                    sf: None,
                    of: None,
                    ambiguous: false,
                    extraction_failed: true,
                }),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VerificationReport::from_rows(rows))
}
