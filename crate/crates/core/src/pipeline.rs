//! End-to-end runs: critic and RAG summarization, extractive baselines,
//! validity accounting, length-control adherence and report rendering.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::{accept_all, split_sentences, Entity, SentenceFilter, SentenceRef};
use crate::llm::{
    build_critic_prompt, build_rag_prompt, complete_cached, GenerationConfig, LengthControl, LlmBackend, LlmError,
    MockBackend, PromptBundle, RagMode, ResponseCache, RetryPolicy,
};
use crate::queryterms::{
    query_terms, GoldTerms, QueryTermSet, Stopwords, TermError, DEFAULT_MIN_FREQUENCY, DEFAULT_Q_MAX, DEFAULT_WINDOW,
};
use crate::refeval::{join_sentences, oracle_selection, random_selection, EvalError};
use crate::retrieval::{
    fnv1a, retrieve_exclusive, Bm25Params, Embedder, Ranker, RankerKind, RetrievalError, RetrievalResult,
};
use crate::sff::{recover, ParseMethod, SummarySketch};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("mode {0} needs an LLM backend")]
    NoBackend(Mode),
    #[error("entity {0:?} has no reference summary for length control")]
    MissingReference(String),
    #[error("{0} is not a critic mode")]
    NotCritic(Mode),
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Terms(#[from] TermError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Critic,
    CriticLength,
    RagExtractive,
    RagAbstractive,
    BaselineRandom,
    BaselineOracle,
    BaselineBm25,
    BaselineDense,
}

impl Mode {
    pub const ALL: [Mode; 8] = [
        Mode::Critic,
        Mode::CriticLength,
        Mode::RagExtractive,
        Mode::RagAbstractive,
        Mode::BaselineRandom,
        Mode::BaselineOracle,
        Mode::BaselineBm25,
        Mode::BaselineDense,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Critic => "critic",
            Mode::CriticLength => "critic-length",
            Mode::RagExtractive => "rag-extractive",
            Mode::RagAbstractive => "rag-abstractive",
            Mode::BaselineRandom => "baseline-random",
            Mode::BaselineOracle => "baseline-oracle",
            Mode::BaselineBm25 => "baseline-bm25",
            Mode::BaselineDense => "baseline-dense",
        }
    }

    pub fn needs_backend(self) -> bool {
        matches!(self, Mode::Critic | Mode::CriticLength | Mode::RagExtractive | Mode::RagAbstractive)
    }

    pub fn is_critic(self) -> bool {
        matches!(self, Mode::Critic | Mode::CriticLength)
    }

    /// Modes that mine query terms and assign evidence exclusively.
    pub fn uses_retrieval(self) -> bool {
        matches!(
            self,
            Mode::RagExtractive | Mode::RagAbstractive | Mode::BaselineBm25 | Mode::BaselineDense
        )
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub ranker: RankerKind,
    pub q_max: usize,
    pub k: usize,
    pub seed: u64,
    pub window: usize,
    pub min_frequency: usize,
    pub rag_generation: GenerationConfig,
    pub critic_generation: GenerationConfig,
    pub workers: usize,
}

impl RunConfig {
    pub fn new(mode: Mode, model_id: &str, context_limit_tokens: u64) -> Self {
        RunConfig {
            mode,
            ranker: RankerKind::Bm25,
            q_max: DEFAULT_Q_MAX,
            k: 20,
            seed: 0,
            window: DEFAULT_WINDOW,
            min_frequency: DEFAULT_MIN_FREQUENCY,
            rag_generation: GenerationConfig::rag(model_id, context_limit_tokens),
            critic_generation: GenerationConfig::critic(model_id, context_limit_tokens),
            workers: 4,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.k == 0 || self.q_max == 0 || self.workers == 0 {
            return Err(PipelineError::Config("k, q_max and workers must be positive".into()));
        }
        self.rag_generation.validate()?;
        self.critic_generation.validate()?;
        Ok(())
    }
}

/// How an output was parsed. `none` for baselines that call no model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseOutcome {
    Direct,
    Sff,
    Failed,
    None,
}

impl From<ParseMethod> for ParseOutcome {
    fn from(m: ParseMethod) -> Self {
        match m {
            ParseMethod::Direct => ParseOutcome::Direct,
            ParseMethod::Sff => ParseOutcome::Sff,
        }
    }
}

/// `valid`: usable summary. `invalid`: parsed (or nothing to parse) but
/// empty. `parse-failed`: the model output could not be read, or no output
/// was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Validity {
    Valid,
    Invalid,
    ParseFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermOutput {
    pub term: String,
    pub sentence: String,
    pub parse_method: ParseOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryOutput {
    pub entity_id: String,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pros: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cons: Vec<String>,
    /// RAG modes: one entry per term that produced a sentence, in rank order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<TermOutput>,
    /// Random and oracle baselines: the chosen pool sentences.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selection: Vec<SentenceRef>,
    pub merged_text: String,
    pub parse_method: ParseOutcome,
    pub validity: Validity,
    pub valid: bool,
    #[serde(default)]
    pub failed_terms: usize,
    #[serde(default)]
    pub cache_hits: usize,
    #[serde(default)]
    pub backend_calls: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SummaryOutput {
    fn empty(entity: &Entity, mode: Mode) -> Self {
        SummaryOutput {
            entity_id: entity.entity_id.clone(),
            mode,
            pros: Vec::new(),
            cons: Vec::new(),
            terms: Vec::new(),
            selection: Vec::new(),
            merged_text: String::new(),
            parse_method: ParseOutcome::None,
            validity: Validity::Invalid,
            valid: false,
            failed_terms: 0,
            cache_hits: 0,
            backend_calls: 0,
            error: None,
        }
    }

    fn set_validity(&mut self, v: Validity) {
        self.validity = v;
        self.valid = v == Validity::Valid;
    }

    /// Term to generated sentence, in rank order.
    pub fn generated(&self) -> IndexMap<String, String> {
        self.terms.iter().map(|t| (t.term.clone(), t.sentence.clone())).collect()
    }
}

/// Everything a run needs besides the entities themselves.
pub struct Runner<'a> {
    pub config: RunConfig,
    pub backend: Option<&'a dyn LlmBackend>,
    pub embedder: &'a dyn Embedder,
    pub cache: Option<&'a ResponseCache>,
    pub retry: RetryPolicy,
    pub stopwords: Stopwords,
    pub gold: GoldTerms,
    pub filter: SentenceFilter<'a>,
}

impl<'a> Runner<'a> {
    pub fn new(config: RunConfig, embedder: &'a dyn Embedder) -> Self {
        Runner {
            config,
            backend: None,
            embedder,
            cache: None,
            retry: RetryPolicy::default(),
            stopwords: Stopwords::default(),
            gold: GoldTerms::hotel(),
            filter: &accept_all,
        }
    }

    pub fn with_backend(mut self, backend: &'a dyn LlmBackend) -> Self {
        self.backend = Some(backend);
        self
    }

    pub fn with_cache(mut self, cache: &'a ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn backend(&self) -> Result<&'a dyn LlmBackend, PipelineError> {
        self.backend.ok_or(PipelineError::NoBackend(self.config.mode))
    }

    pub fn terms(&self, pool: &[SentenceRef]) -> Result<QueryTermSet, PipelineError> {
        let c = &self.config;
        Ok(query_terms(pool, c.window, c.min_frequency, &self.stopwords, &self.gold, c.q_max)?)
    }

    fn ranker(&self, kind: RankerKind) -> Ranker<'a> {
        match kind {
            RankerKind::Bm25 => Ranker::Bm25(Bm25Params::default()),
            RankerKind::Dense => Ranker::Dense(self.embedder),
        }
    }

    /// Per-entity stream seed, so entities draw independently under one run seed.
    pub fn entity_seed(&self, entity_id: &str) -> u64 {
        fnv1a(format!("{}:{entity_id}", self.config.seed).as_bytes())
    }
}

/// Result of one entity: the summary plus, for retrieval modes, its
/// exclusive evidence assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityRun {
    pub summary: SummaryOutput,
    pub assignments: Option<RetrievalResult>,
}

pub fn run_entity(entity: &Entity, runner: &Runner<'_>) -> Result<EntityRun, PipelineError> {
    if runner.config.mode.is_critic() {
        Ok(EntityRun {
            summary: run_critic(entity, runner)?,
            assignments: None,
        })
    } else {
        run_rag(entity, runner)
    }
}

/// Long-form critic: the whole (recency-truncated) review set in one prompt.
pub fn run_critic(entity: &Entity, runner: &Runner<'_>) -> Result<SummaryOutput, PipelineError> {
    let mode = runner.config.mode;
    if !mode.is_critic() {
        return Err(PipelineError::NotCritic(mode));
    }
    let backend = runner.backend()?;
    let length = match mode {
        Mode::CriticLength => {
            let r = entity
                .reference
                .as_ref()
                .ok_or_else(|| PipelineError::MissingReference(entity.entity_id.clone()))?;
            Some(LengthControl {
                pros: r.pros.len(),
                cons: r.cons.len(),
            })
        }
        _ => None,
    };
    let bundle = build_critic_prompt(entity, length, &runner.config.critic_generation);
    let mut out = SummaryOutput::empty(entity, mode);
    let completion = complete_cached(
        backend,
        &bundle,
        &runner.config.critic_generation,
        runner.cache,
        &runner.retry,
    );
    let completion = match completion {
        Ok(c) => c,
        Err(e @ (LlmError::Exhausted { .. } | LlmError::EmptyCompletion)) => {
            out.parse_method = ParseOutcome::Failed;
            out.error = Some(e.to_string());
            out.set_validity(Validity::ParseFailed);
            return Ok(out);
        }
        Err(e) => return Err(e.into()),
    };
    out.cache_hits = usize::from(completion.cache_hit);
    out.backend_calls = completion.attempts;
    match recover(&completion.text, &SummarySketch::pros_cons()) {
        Some(rec) => {
            out.pros = rec.pros().to_vec();
            out.cons = rec.cons().to_vec();
            out.parse_method = rec.method.into();
            out.merged_text = join_sentences(out.pros.iter().chain(&out.cons).map(String::as_str));
            out.set_validity(if rec.valid { Validity::Valid } else { Validity::Invalid });
        }
        None => {
            out.parse_method = ParseOutcome::Failed;
            out.set_validity(Validity::ParseFailed);
        }
    }
    Ok(out)
}

enum TermAttempt {
    Done(String, ParseOutcome),
    Unparsed,
    Unanswered,
}

fn generate_for_term(
    term: &str,
    evidence: &[crate::retrieval::ScoredSentence],
    rag_mode: RagMode,
    runner: &Runner<'_>,
    out: &mut SummaryOutput,
) -> Result<TermAttempt, PipelineError> {
    let backend = runner.backend()?;
    let bundle = build_rag_prompt(term, evidence, rag_mode)?;
    let completion = match complete_cached(backend, &bundle, &runner.config.rag_generation, runner.cache, &runner.retry)
    {
        Ok(c) => c,
        Err(LlmError::Exhausted { .. } | LlmError::EmptyCompletion) => return Ok(TermAttempt::Unanswered),
        Err(e) => return Err(e.into()),
    };
    out.cache_hits += usize::from(completion.cache_hit);
    out.backend_calls += completion.attempts;
    let sketch = match rag_mode {
        RagMode::Extractive => SummarySketch::extractive_choice(),
        RagMode::Abstractive => SummarySketch::abstractive_sentence(),
    };
    let Some(rec) = recover(&completion.text, &sketch) else {
        return Ok(TermAttempt::Unparsed);
    };
    let method = rec.method.into();
    if rag_mode == RagMode::Extractive {
        let chosen = rec
            .first("index")
            .and_then(|i| i.trim().parse::<usize>().ok())
            .filter(|i| (1..=evidence.len()).contains(i));
        if let Some(i) = chosen {
            return Ok(TermAttempt::Done(evidence[i - 1].sentence.text.trim().to_string(), method));
        }
    }
    match rec.first("sentence").map(str::trim).filter(|s| !s.is_empty()) {
        Some(s) => Ok(TermAttempt::Done(s.to_string(), method)),
        None => Ok(TermAttempt::Unparsed),
    }
}

/// RAG modes and the extractive baselines.
pub fn run_rag(entity: &Entity, runner: &Runner<'_>) -> Result<EntityRun, PipelineError> {
    let mode = runner.config.mode;
    let pool = split_sentences(entity, runner.filter);
    let mut out = SummaryOutput::empty(entity, mode);

    match mode {
        Mode::Critic | Mode::CriticLength => return Err(PipelineError::Config(format!("{mode} is not a RAG mode"))),
        Mode::BaselineRandom | Mode::BaselineOracle => {
            let picks = if pool.is_empty() {
                out.error = Some("no sentences".into());
                Vec::new()
            } else if mode == Mode::BaselineRandom {
                let terms = runner.terms(&pool)?;
                let k = if terms.is_empty() { runner.config.q_max } else { terms.len() };
                random_selection(pool.len(), k.min(pool.len()), runner.entity_seed(&entity.entity_id))?
            } else {
                match &entity.reference {
                    Some(r) if r.is_valid() => oracle_selection(r, &pool)?,
                    _ => {
                        out.error = Some("no reference summary".into());
                        Vec::new()
                    }
                }
            };
            out.selection = picks.iter().map(|&i| pool[i].clone()).collect();
            out.merged_text = join_sentences(out.selection.iter().map(|s| s.text.as_str()));
            out.set_validity(if out.merged_text.is_empty() { Validity::Invalid } else { Validity::Valid });
            return Ok(EntityRun {
                summary: out,
                assignments: None,
            });
        }
        _ => {}
    }

    let ranker_kind = match mode {
        Mode::BaselineBm25 => RankerKind::Bm25,
        Mode::BaselineDense => RankerKind::Dense,
        _ => runner.config.ranker,
    };
    let terms = runner.terms(&pool)?;
    let assignments = retrieve_exclusive(&terms, &pool, runner.config.k, &runner.ranker(ranker_kind))?;

    let rag_mode = match mode {
        Mode::RagExtractive => Some(RagMode::Extractive),
        Mode::RagAbstractive => Some(RagMode::Abstractive),
        _ => None,
    };
    let mut answered = false;
    for (term, evidence) in &assignments.assignments {
        if evidence.is_empty() {
            out.failed_terms += 1;
            continue;
        }
        let Some(rag_mode) = rag_mode else {
            out.terms.push(TermOutput {
                term: term.clone(),
                sentence: evidence[0].sentence.text.trim().to_string(),
                parse_method: ParseOutcome::None,
            });
            continue;
        };
        match generate_for_term(term, evidence, rag_mode, runner, &mut out)? {
            TermAttempt::Done(sentence, parse_method) => {
                answered = true;
                out.terms.push(TermOutput {
                    term: term.clone(),
                    sentence,
                    parse_method,
                });
            }
            TermAttempt::Unparsed => {
                answered = true;
                out.failed_terms += 1;
            }
            TermAttempt::Unanswered => out.failed_terms += 1,
        }
    }

    out.merged_text = join_sentences(out.terms.iter().map(|t| t.sentence.as_str()));
    out.parse_method = if rag_mode.is_none() {
        ParseOutcome::None
    } else if out.terms.is_empty() {
        ParseOutcome::Failed
    } else if out.terms.iter().any(|t| t.parse_method == ParseOutcome::Sff) {
        ParseOutcome::Sff
    } else {
        ParseOutcome::Direct
    };
    let validity = if !out.terms.is_empty() {
        Validity::Valid
    } else if rag_mode.is_some() && (answered || out.failed_terms > 0) && !assignments.assignments.is_empty() {
        Validity::ParseFailed
    } else {
        Validity::Invalid
    };
    if terms.is_empty() {
        out.error = Some("no query terms".into());
    }
    out.set_validity(validity);
    Ok(EntityRun {
        summary: out,
        assignments: Some(assignments),
    })
}

/// Outcome counts of a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityCounts {
    pub total: usize,
    pub valid: usize,
    pub invalid: usize,
    pub parse_failed: usize,
}

impl ValidityCounts {
    pub fn tally<'s>(outputs: impl IntoIterator<Item = &'s SummaryOutput>) -> Self {
        let mut c = ValidityCounts::default();
        for o in outputs {
            c.total += 1;
            match o.validity {
                Validity::Valid => c.valid += 1,
                Validity::Invalid => c.invalid += 1,
                Validity::ParseFailed => c.parse_failed += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdherenceRow {
    pub entity_id: String,
    pub expected_pros: usize,
    pub expected_cons: usize,
    pub pros: usize,
    pub cons: usize,
}

/// How many valid critic summaries hit the reference's item counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdherenceReport {
    pub evaluated: usize,
    pub pros: usize,
    pub cons: usize,
    pub both: usize,
    /// Invalid or parse-failed summaries, left out of `evaluated`.
    pub excluded_invalid: usize,
    /// Entities without a reference to compare against.
    pub unreferenced: usize,
    pub rows: Vec<AdherenceRow>,
}

pub fn adherence_report(outputs: &[SummaryOutput], corpus: &[Entity]) -> Result<AdherenceReport, PipelineError> {
    let by_id: HashMap<&str, &Entity> = corpus.iter().map(|e| (e.entity_id.as_str(), e)).collect();
    let mut report = AdherenceReport::default();
    for o in outputs {
        if !o.mode.is_critic() {
            return Err(PipelineError::NotCritic(o.mode));
        }
        let Some(reference) = by_id.get(o.entity_id.as_str()).and_then(|e| e.reference.as_ref()) else {
            report.unreferenced += 1;
            continue;
        };
        if !o.valid {
            report.excluded_invalid += 1;
            continue;
        }
        let pros_hit = o.pros.len() == reference.pros.len();
        let cons_hit = o.cons.len() == reference.cons.len();
        report.evaluated += 1;
        report.pros += usize::from(pros_hit);
        report.cons += usize::from(cons_hit);
        report.both += usize::from(pros_hit && cons_hit);
        report.rows.push(AdherenceRow {
            entity_id: o.entity_id.clone(),
            expected_pros: reference.pros.len(),
            expected_cons: reference.cons.len(),
            pros: o.pros.len(),
            cons: o.cons.len(),
        });
    }
    report.rows.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));
    Ok(report)
}

/// What a finished run wrote and how it went.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config: RunConfig,
    pub backend: Option<String>,
    pub embedder: String,
    pub entities: Vec<String>,
    pub validity: ValidityCounts,
    pub cache_hits: usize,
    pub backend_calls: usize,
    pub failed_terms: usize,
}

/// Run every entity on a bounded worker pool. Results come back ordered by
/// entity id regardless of scheduling.
pub fn run_corpus(entities: &[Entity], runner: &Runner<'_>) -> Result<Vec<EntityRun>, PipelineError> {
    runner.config.validate()?;
    if runner.config.mode.needs_backend() && runner.backend.is_none() {
        return Err(PipelineError::NoBackend(runner.config.mode));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(runner.config.workers)
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    let mut runs = pool.install(|| {
        entities
            .par_iter()
            .map(|e| run_entity(e, runner))
            .collect::<Result<Vec<_>, _>>()
    })?;
    runs.sort_by(|a, b| a.summary.entity_id.cmp(&b.summary.entity_id));
    Ok(runs)
}

pub fn manifest(runs: &[EntityRun], runner: &Runner<'_>) -> Manifest {
    let summaries = runs.iter().map(|r| &r.summary);
    Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: runner.config.clone(),
        backend: runner
            .backend
            .filter(|_| runner.config.mode.needs_backend())
            .map(|b| b.descriptor()),
        embedder: runner.embedder.descriptor(),
        entities: runs.iter().map(|r| r.summary.entity_id.clone()).collect(),
        validity: ValidityCounts::tally(summaries.clone()),
        cache_hits: summaries.clone().map(|s| s.cache_hits).sum(),
        backend_calls: summaries.clone().map(|s| s.backend_calls).sum(),
        failed_terms: summaries.map(|s| s.failed_terms).sum(),
    }
}

/// File-name-safe form of an entity id.
pub fn file_stem(entity_id: &str) -> String {
    entity_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

fn write(path: &Path, contents: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| PipelineError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output types serialize");
    s.push('\n');
    s
}

/// Write a run's outputs:
///
/// * `summaries/<entity>.json` and `summaries.jsonl`
/// * `assignments/<entity>.json` and `generated/<entity>.json` for retrieval modes
/// * `manifest.json`
///
/// Contents depend only on inputs and configuration, never on timing.
pub fn write_run(out_dir: &Path, runs: &[EntityRun], manifest: &Manifest) -> Result<Vec<PathBuf>, PipelineError> {
    let mut written = Vec::new();
    let mut jsonl = String::new();
    for run in runs {
        let stem = file_stem(&run.summary.entity_id);
        let path = out_dir.join("summaries").join(format!("{stem}.json"));
        write(&path, &pretty(&run.summary))?;
        written.push(path);
        jsonl.push_str(&serde_json::to_string(&run.summary).expect("output types serialize"));
        jsonl.push('\n');
        if let Some(assignments) = &run.assignments {
            let path = out_dir.join("assignments").join(format!("{stem}.json"));
            write(&path, &pretty(assignments))?;
            written.push(path);
            let path = out_dir.join("generated").join(format!("{stem}.json"));
            write(&path, &pretty(&run.summary.generated()))?;
            written.push(path);
        }
    }
    let path = out_dir.join("summaries.jsonl");
    write(&path, &jsonl)?;
    written.push(path);
    let path = out_dir.join("manifest.json");
    write(&path, &pretty(manifest))?;
    written.push(path);
    Ok(written)
}

/// Deterministic stand-in for an LLM, useful offline and in tests.
///
/// Critic prompts get the first review sentences as pros and cons (as many
/// as a length constraint asks for, else two of each); reranker prompts get
/// `{"index": 1, ...}`; abstractor prompts get the first evidence sentence.
pub fn offline_backend() -> MockBackend {
    MockBackend::new("offline").with_responder(offline_answer)
}

fn offline_answer(bundle: &PromptBundle) -> String {
    let numbered: Vec<&str> = bundle
        .payload
        .lines()
        .filter_map(|l| {
            let (n, rest) = l.split_once(". ")?;
            n.parse::<usize>().ok().map(|_| rest.trim())
        })
        .collect();
    if bundle.format_instruction.contains("\"index\"") {
        let first = numbered.first().copied().unwrap_or_default();
        return json!({"index": 1, "sentence": first}).to_string();
    }
    if bundle.format_instruction.contains("\"pros\"") {
        let count = |label: &str| {
            let words: Vec<&str> = bundle.format_instruction.split_whitespace().collect();
            words
                .windows(3)
                .find(|w| w[0] == "exactly" && w[2].trim_end_matches(['.', ',']) == label)
                .and_then(|w| w[1].parse::<usize>().ok())
                .unwrap_or(2)
        };
        let sentences: Vec<String> = bundle
            .payload
            .lines()
            .filter_map(|l| l.split_once("): ").map(|(_, text)| text))
            .flat_map(crate::corpus::split_text)
            .map(str::to_string)
            .collect();
        let (np, nc) = (count("pros"), count("cons"));
        let take = |skip: usize, n: usize| -> Vec<String> {
            (0..n)
                .map(|i| sentences.get(skip + i).cloned().unwrap_or_else(|| format!("Item {}.", skip + i + 1)))
                .collect()
        };
        return json!({"pros": take(0, np), "cons": take(np, nc)}).to_string();
    }
    let first = numbered.first().copied().unwrap_or("No evidence.");
    json!({"sentence": first}).to_string()
}

/// One labelled evaluation result for [`render_report`].
#[derive(Debug, Clone, PartialEq)]
pub enum ReportEntry {
    Rouge(String, Value),
    Aos(String, Value),
    Adherence(String, Value),
}

impl ReportEntry {
    /// Classify an evaluation JSON by its shape.
    pub fn detect(label: impl Into<String>, value: Value) -> Option<Self> {
        let label = label.into();
        if value.get("corpus").is_some() {
            Some(ReportEntry::Rouge(label, value))
        } else if value.get("denominators").is_some() {
            Some(ReportEntry::Aos(label, value))
        } else if value.get("both").is_some() {
            Some(ReportEntry::Adherence(label, value))
        } else {
            None
        }
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => "n/a".into(),
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => format!("{x:.2}"),
            _ => n.to_string(),
        },
        other => other.to_string(),
    }
}

/// Markdown tables of reference-based scores, RAG verification scores and
/// length-control adherence. Scores are expected already ×100.
pub fn render_report(entries: &[ReportEntry]) -> String {
    let mut rouge = Vec::new();
    let mut aos = Vec::new();
    let mut adherence = Vec::new();
    for e in entries {
        match e {
            ReportEntry::Rouge(l, v) => rouge.push(format!(
                "| {l} | {} | {} | {} | {} | {} |",
                cell(&v["corpus"]["r1"]),
                cell(&v["corpus"]["rl"]),
                cell(&v["corpus"]["embed"]),
                cell(&v["corpus"]["valid"]),
                cell(&v["corpus"]["invalid"]),
            )),
            ReportEntry::Aos(l, v) => aos.push(format!(
                "| {l} | {} | {} | {} | {} | {} | {} |",
                cell(&v["ar"]),
                cell(&v["sf"]),
                cell(&v["of"]),
                cell(&v["denominators"]["ar"]),
                cell(&v["denominators"]["sf"]),
                cell(&v["denominators"]["of"]),
            )),
            ReportEntry::Adherence(l, v) => adherence.push(format!(
                "| {l} | {} | {} | {} | {} |",
                cell(&v["pros"]),
                cell(&v["cons"]),
                cell(&v["both"]),
                cell(&v["evaluated"]),
            )),
        }
    }
    let mut out = String::new();
    let mut section = |title: &str, header: &str, rule: &str, rows: &[String]| {
        if rows.is_empty() {
            return;
        }
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&format!("## {title}\n\n{header}\n{rule}\n"));
        for r in rows {
            out.push_str(r);
            out.push('\n');
        }
    };
    section(
        "Reference-based evaluation",
        "| System | R1 | RL | Embed | Valid | Invalid |",
        "|---|---:|---:|---:|---:|---:|",
        &rouge,
    );
    section(
        "RAG verification",
        "| System | AR | SF | OF | n(AR) | n(SF) | n(OF) |",
        "|---|---:|---:|---:|---:|---:|---:|",
        &aos,
    );
    section(
        "Length control",
        "| System | Pros | Cons | Both | Evaluated |",
        "|---|---:|---:|---:|---:|",
        &adherence,
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ReferenceSummary, Review};
    use crate::retrieval::HashingEmbedder;
    use chrono::NaiveDate;

    fn entity(id: &str, reviews: &[&str], reference: Option<(usize, usize)>) -> Entity {
        Entity {
            entity_id: id.into(),
            name: format!("Hotel {id}"),
            reviews: reviews
                .iter()
                .enumerate()
                .map(|(i, t)| Review {
                    date: NaiveDate::from_ymd_opt(2020, 1, 1 + i as u32).unwrap(),
                    text: t.to_string(),
                })
                .collect(),
            reference: reference.map(|(p, c)| ReferenceSummary {
                pros: (0..p).map(|i| format!("Pro {i}.")).collect(),
                cons: (0..c).map(|i| format!("Con {i}.")).collect(),
            }),
        }
    }

    fn embedder() -> HashingEmbedder {
        HashingEmbedder::new(HashingEmbedder::DEFAULT_DIMENSION)
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
            assert_eq!(serde_json::to_value(m).unwrap(), m.as_str());
        }
        assert!("rag".parse::<Mode>().is_err());
    }

    #[test]
    fn critic_direct_sff_and_empty() {
        let e = entity("a", &["Great pool. Rude staff."], Some((1, 1)));
        let emb = embedder();
        let cases = [
            ("{\"pros\": [\"Great pool.\"], \"cons\": [\"Rude staff.\"]}", Validity::Valid, ParseOutcome::Direct),
            ("Pros:\n- Great pool.\nCons:\n- Rude staff.", Validity::Valid, ParseOutcome::Sff),
            ("{}", Validity::ParseFailed, ParseOutcome::Failed),
            ("{\"pros\": [\"Great pool.\"], \"cons\": []}", Validity::Invalid, ParseOutcome::Direct),
        ];
        for (text, validity, method) in cases {
            let backend = MockBackend::constant(text);
            let runner = Runner::new(RunConfig::new(Mode::Critic, "m", 100_000), &emb).with_backend(&backend);
            let out = run_critic(&e, &runner).unwrap();
            assert_eq!((out.validity, out.parse_method), (validity, method), "{text}");
            assert_eq!(out.valid, validity == Validity::Valid);
        }
    }

    #[test]
    fn critic_backend_failure_is_parse_failed() {
        let e = entity("a", &["Great pool."], None);
        let emb = embedder();
        let backend = MockBackend::new("down").failing_first(100, crate::llm::BackendError::Transport("x".into()));
        let runner = Runner::new(RunConfig::new(Mode::Critic, "m", 100_000), &emb)
            .with_backend(&backend)
            .with_retry(RetryPolicy::immediate(1));
        let out = run_critic(&e, &runner).unwrap();
        assert_eq!(out.validity, Validity::ParseFailed);
        assert!(out.error.is_some());
    }

    #[test]
    fn length_control_needs_reference() {
        let e = entity("a", &["Great pool."], None);
        let emb = embedder();
        let backend = offline_backend();
        let runner = Runner::new(RunConfig::new(Mode::CriticLength, "m", 100_000), &emb).with_backend(&backend);
        assert!(matches!(run_critic(&e, &runner), Err(PipelineError::MissingReference(_))));
    }

    #[test]
    fn offline_backend_honours_length_control() {
        let e = entity("a", &["A one. B two. C three. D four. E five. F six."], Some((3, 2)));
        let emb = embedder();
        let backend = offline_backend();
        let runner = Runner::new(RunConfig::new(Mode::CriticLength, "m", 100_000), &emb).with_backend(&backend);
        let out = run_critic(&e, &runner).unwrap();
        assert_eq!(out.pros, vec!["A one.", "B two.", "C three."]);
        assert_eq!(out.cons, vec!["D four.", "E five."]);
        assert_eq!(out.merged_text, "A one. B two. C three. D four. E five.");
    }

    fn pool_reviews() -> Vec<String> {
        (0..16)
            .map(|i| format!("The room was clean and the staff were kind. Breakfast number {i} was fine."))
            .collect()
    }

    #[test]
    fn bm25_baseline_takes_top_evidence_without_backend() {
        let reviews = pool_reviews();
        let refs: Vec<&str> = reviews.iter().map(String::as_str).collect();
        let e = entity("a", &refs, Some((1, 1)));
        let emb = embedder();
        let runner = Runner::new(RunConfig::new(Mode::BaselineBm25, "m", 100_000), &emb);
        let run = run_rag(&e, &runner).unwrap();
        let a = run.assignments.unwrap();
        assert!(!run.summary.terms.is_empty());
        for t in &run.summary.terms {
            assert_eq!(t.sentence, a.evidence(&t.term)[0].sentence.text);
        }
        assert_eq!(run.summary.backend_calls, 0);
        assert!(run.summary.valid);
    }

    #[test]
    fn extractive_with_index_one_matches_top_evidence() {
        let reviews = pool_reviews();
        let refs: Vec<&str> = reviews.iter().map(String::as_str).collect();
        let e = entity("a", &refs, Some((1, 1)));
        let emb = embedder();
        let backend = MockBackend::constant("{\"index\": 1, \"sentence\": \"whatever\"}");
        let runner = Runner::new(RunConfig::new(Mode::RagExtractive, "m", 100_000), &emb).with_backend(&backend);
        let run = run_rag(&e, &runner).unwrap();
        let a = run.assignments.unwrap();
        let expected: Vec<&str> = a
            .assignments
            .values()
            .filter(|v| !v.is_empty())
            .map(|v| v[0].sentence.text.as_str())
            .collect();
        assert_eq!(run.summary.merged_text, join_sentences(expected));
        assert_eq!(run.summary.parse_method, ParseOutcome::Direct);
    }

    #[test]
    fn rag_unparseable_answers_are_parse_failed() {
        let reviews = pool_reviews();
        let refs: Vec<&str> = reviews.iter().map(String::as_str).collect();
        let e = entity("a", &refs, None);
        let emb = embedder();
        let backend = MockBackend::constant("I cannot help with that");
        let runner = Runner::new(RunConfig::new(Mode::RagAbstractive, "m", 100_000), &emb).with_backend(&backend);
        let run = run_rag(&e, &runner).unwrap();
        assert_eq!(run.summary.validity, Validity::ParseFailed);
        assert!(run.summary.failed_terms > 0);
    }

    #[test]
    fn no_terms_is_invalid() {
        let e = entity("a", &["Short stay."], None);
        let emb = embedder();
        let backend = offline_backend();
        let runner = Runner::new(RunConfig::new(Mode::RagAbstractive, "m", 100_000), &emb).with_backend(&backend);
        let run = run_rag(&e, &runner).unwrap();
        assert_eq!(run.summary.validity, Validity::Invalid);
        assert_eq!(run.summary.error.as_deref(), Some("no query terms"));
    }

    #[test]
    fn adherence_counts() {
        let corpus = vec![entity("a", &["x"], Some((11, 6))), entity("b", &["x"], Some((11, 6))), entity("c", &["x"], Some((2, 2)))];
        let out = |id: &str, p: usize, c: usize, valid: bool| SummaryOutput {
            pros: (0..p).map(|i| i.to_string()).collect(),
            cons: (0..c).map(|i| i.to_string()).collect(),
            validity: if valid { Validity::Valid } else { Validity::Invalid },
            valid,
            ..SummaryOutput::empty(&corpus[0], Mode::CriticLength)
        }
        .with_id(id);
        let outputs = vec![out("a", 11, 6, true), out("b", 10, 6, true), out("c", 2, 0, false)];
        let r = adherence_report(&outputs, &corpus).unwrap();
        assert_eq!((r.evaluated, r.pros, r.cons, r.both, r.excluded_invalid), (2, 1, 2, 1, 1));
    }

    impl SummaryOutput {
        fn with_id(mut self, id: &str) -> Self {
            self.entity_id = id.into();
            self
        }
    }

    #[test]
    fn report_renders_tables() {
        let rouge = json!({"corpus": {"r1": 41.5, "rl": 20.0, "embed": null, "valid": 5, "invalid": 0}});
        let aos = json!({"ar": 90.0, "sf": 75.25, "of": null, "denominators": {"ar": 10, "sf": 8, "of": 0}});
        let entries = vec![
            ReportEntry::detect("critic", rouge).unwrap(),
            ReportEntry::detect("rag", aos).unwrap(),
        ];
        let md = render_report(&entries);
        assert!(md.contains("| critic | 41.50 | 20.00 | n/a | 5 | 0 |"));
        assert!(md.contains("| rag | 90.00 | 75.25 | n/a | 10 | 8 | 0 |"));
        assert!(!md.contains("Length control"));
    }

    #[test]
    fn file_stems_are_safe() {
        assert_eq!(file_stem("hotel/12 a"), "hotel_12_a");
    }
}
