use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use indexmap::IndexMap;
use serde::de::DeserializeOwned;
use serde_json::Value;

use opinsum_core::aoseval::{verify_rag, HttpExtractor, LexiconExtractor, TripletExtractor, VerificationReport};
use opinsum_core::config::Config;
use opinsum_core::corpus::{load_corpus, split_sentences, accept_all, Entity};
use opinsum_core::llm::{LlmBackend, ResponseCache};
use opinsum_core::pipeline::{
    adherence_report, manifest, offline_backend, render_report, run_corpus, write_run, Mode, ReportEntry, RunConfig,
    Runner, SummaryOutput,
};
use opinsum_core::queryterms::{query_terms, GoldTerms, Stopwords};
use opinsum_core::refeval::{evaluate_rouge, SystemSummary};
use opinsum_core::retrieval::{
    retrieve_exclusive, Bm25Params, Embedder, HashingEmbedder, HttpEmbedder, Ranker, RankerKind, RetrievalResult,
};
use opinsum_core::sff::{recover, ParseMethod, SummarySketch};

#[derive(Parser)]
#[command(name = "opinsum", version, about = "Long-form opinion summarization and evaluation")]
struct Cli {
    /// TOML configuration with [backend.<name>], [modelserve], [cache] and [run] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine query terms for each entity.
    Terms(TermsArgs),
    /// Assign evidence sentences to query terms exclusively.
    Retrieve(RetrieveArgs),
    /// Recover structured output from raw model text on stdin.
    /// Exit code 0: parsed directly, 1: recovered, 2: failed.
    SffRecover(SffArgs),
    /// Summarize every entity of a corpus.
    Summarize(SummarizeArgs),
    /// Score a run.
    #[command(subcommand)]
    Evaluate(EvaluateCommand),
    /// Render evaluation reports as Markdown tables.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct TermArgs {
    #[arg(long, default_value_t = 15)]
    q_max: usize,
    #[arg(long, default_value_t = 4)]
    window: usize,
    #[arg(long, default_value_t = 15)]
    min_frequency: usize,
    /// Aspect vocabulary, one term per line (default: bundled hotel list).
    #[arg(long)]
    gold: Option<PathBuf>,
}

impl TermArgs {
    fn gold(&self) -> Result<GoldTerms> {
        match &self.gold {
            Some(p) => GoldTerms::load(p).with_context(|| format!("loading {}", p.display())),
            None => Ok(GoldTerms::hotel()),
        }
    }
}

#[derive(Args)]
struct TermsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    terms: TermArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedderChoice {
    /// Deterministic hashed bag of words.
    Hashing,
    /// The model-serving sidecar from [modelserve].
    Sidecar,
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value = "bm25")]
    ranker: RankerKind,
    #[arg(long, value_enum, default_value_t = EmbedderChoice::Hashing)]
    embedder: EmbedderChoice,
    #[command(flatten)]
    terms: TermArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum SketchChoice {
    ProsCons,
    Extractive,
    Abstractive,
}

#[derive(Args)]
struct SffArgs {
    #[arg(long, value_enum, default_value_t = SketchChoice::ProsCons)]
    sketch: SketchChoice,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long)]
    mode: Mode,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value = "bm25")]
    ranker: RankerKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Backend name from the config, or `offline` for the built-in deterministic stand-in.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long, value_enum, default_value_t = EmbedderChoice::Hashing)]
    embedder: EmbedderChoice,
    #[arg(long)]
    workers: Option<usize>,
    /// Skip the response cache.
    #[arg(long)]
    no_cache: bool,
    #[command(flatten)]
    terms: TermArgs,
}

#[derive(Subcommand)]
enum EvaluateCommand {
    /// ROUGE-1/ROUGE-L (and optionally embedding match) against references.
    Rouge {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Also compute the greedy embedding-match score.
        #[arg(long, value_enum)]
        embed: Option<EmbedderChoice>,
    },
    /// Aspect relevance, sentiment factuality and opinion faithfulness.
    Aos {
        /// An assignments JSON file, or a run's assignments/ directory.
        #[arg(long)]
        assignments: PathBuf,
        /// A generated JSON file, or a run's generated/ directory.
        #[arg(long)]
        generated: PathBuf,
        #[arg(long, value_enum, default_value_t = ExtractorChoice::Fallback)]
        extractor: ExtractorChoice,
        #[arg(long, value_enum, default_value_t = EmbedderChoice::Hashing)]
        embedder: EmbedderChoice,
        #[arg(long)]
        report: PathBuf,
    },
    /// Length-control adherence of critic summaries.
    Adherence {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExtractorChoice {
    Fallback,
    Sidecar,
}

#[derive(Args)]
struct ReportArgs {
    /// Evaluation reports as LABEL=PATH.
    #[arg(required = true)]
    inputs: Vec<String>,
    /// Write Markdown here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Terms(a) => terms(a)?,
        Command::Retrieve(a) => retrieve(a, &config)?,
        Command::SffRecover(a) => return sff(a),
        Command::Summarize(a) => summarize(a, &config)?,
        Command::Evaluate(e) => evaluate(e, &config)?,
        Command::Report(a) => report(a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn load(path: &Path) -> Result<Vec<Entity>> {
    load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn embedder(choice: EmbedderChoice, config: &Config) -> Result<Box<dyn Embedder>> {
    Ok(match choice {
        EmbedderChoice::Hashing => Box::new(HashingEmbedder::new(HashingEmbedder::DEFAULT_DIMENSION)),
        EmbedderChoice::Sidecar => {
            let ms = config.modelserve()?;
            Box::new(HttpEmbedder::connect(&ms.base_url, ms.timeout())?)
        }
    })
}

fn print_json_line(out: &mut impl Write, v: &Value) -> Result<()> {
    serde_json::to_writer(&mut *out, v)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn terms(a: TermsArgs) -> Result<()> {
    let gold = a.terms.gold()?;
    let stopwords = Stopwords::default();
    let mut out = io::stdout().lock();
    for e in load(&a.corpus)? {
        let pool = split_sentences(&e, &accept_all);
        let t = query_terms(&pool, a.terms.window, a.terms.min_frequency, &stopwords, &gold, a.terms.q_max)?;
        print_json_line(&mut out, &serde_json::json!({"entity_id": e.entity_id, "terms": t}))?;
    }
    Ok(())
}

fn retrieve(a: RetrieveArgs, config: &Config) -> Result<()> {
    let gold = a.terms.gold()?;
    let stopwords = Stopwords::default();
    let emb = embedder(a.embedder, config)?;
    let ranker = match a.ranker {
        RankerKind::Bm25 => Ranker::Bm25(Bm25Params::default()),
        RankerKind::Dense => Ranker::Dense(emb.as_ref()),
    };
    let mut out = io::stdout().lock();
    for e in load(&a.corpus)? {
        let pool = split_sentences(&e, &accept_all);
        let t = query_terms(&pool, a.terms.window, a.terms.min_frequency, &stopwords, &gold, a.terms.q_max)?;
        let r = retrieve_exclusive(&t, &pool, a.k, &ranker)?;
        print_json_line(&mut out, &serde_json::json!({"entity_id": e.entity_id, "retrieval": r}))?;
    }
    Ok(())
}

fn sff(a: SffArgs) -> Result<ExitCode> {
    let mut raw = String::new();
    io::stdin().read_to_string(&mut raw)?;
    let sketch = match a.sketch {
        SketchChoice::ProsCons => SummarySketch::pros_cons(),
        SketchChoice::Extractive => SummarySketch::extractive_choice(),
        SketchChoice::Abstractive => SummarySketch::abstractive_sentence(),
    };
    match recover(&raw, &sketch) {
        Some(rec) => {
            println!("{}", rec.to_json());
            Ok(ExitCode::from(match rec.method {
                ParseMethod::Direct => 0,
                ParseMethod::Sff => 1,
            }))
        }
        None => {
            eprintln!("no field of the sketch could be recovered");
            Ok(ExitCode::from(2))
        }
    }
}

fn summarize(a: SummarizeArgs, config: &Config) -> Result<()> {
    let entities = load(&a.corpus)?;
    let emb = embedder(a.embedder, config)?;

    let (backend, model, context): (Option<Box<dyn LlmBackend>>, String, u64) = match a.backend.as_deref() {
        None if a.mode.needs_backend() => bail!("mode {} needs --backend", a.mode),
        None => (None, "none".into(), 128_000),
        Some("offline") => (Some(Box::new(offline_backend())), "offline".into(), 128_000),
        Some(name) => {
            let b = config.backend(name)?;
            (Some(Box::new(b.connect(name)?)), b.model.clone(), b.context_limit_tokens)
        }
    };

    let mut run_config = RunConfig::new(a.mode, &model, context);
    run_config.k = a.k;
    run_config.ranker = a.ranker;
    run_config.seed = a.seed;
    run_config.q_max = a.terms.q_max;
    run_config.window = a.terms.window;
    run_config.min_frequency = a.terms.min_frequency;
    run_config.workers = a.workers.unwrap_or(config.run.workers);

    let cache = if a.no_cache || !config.cache.enabled || backend.is_none() {
        None
    } else {
        Some(ResponseCache::open(&config.cache.dir)?)
    };

    let mut runner = Runner::new(run_config, emb.as_ref());
    runner.gold = a.terms.gold()?;
    if let Some(b) = &backend {
        runner = runner.with_backend(b.as_ref());
    }
    if let Some(c) = &cache {
        runner = runner.with_cache(c);
    }

    let runs = run_corpus(&entities, &runner)?;
    let m = manifest(&runs, &runner);
    write_run(&a.out, &runs, &m)?;
    eprintln!(
        "{} entities: {} valid, {} invalid, {} parse-failed -> {}",
        m.validity.total,
        m.validity.valid,
        m.validity.invalid,
        m.validity.parse_failed,
        a.out.display()
    );
    Ok(())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_report(path: &Path, v: &Value) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(v)? + "\n").with_context(|| format!("writing {}", path.display()))
}

/// (assignments, generated) file pairs: either the two files themselves or
/// same-named files from two directories.
fn aos_pairs(assignments: &Path, generated: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    if !assignments.is_dir() {
        return Ok(vec![(assignments.to_path_buf(), generated.to_path_buf())]);
    }
    let mut names: Vec<_> = fs::read_dir(assignments)?
        .map(|e| e.map(|e| e.file_name()))
        .collect::<Result<_, _>>()?;
    names.sort();
    names
        .into_iter()
        .map(|n| {
            let g = generated.join(&n);
            if !g.exists() {
                bail!("no generated file {}", g.display());
            }
            Ok((assignments.join(&n), g))
        })
        .collect()
}

fn evaluate(cmd: EvaluateCommand, config: &Config) -> Result<()> {
    match cmd {
        EvaluateCommand::Rouge {
            system,
            corpus,
            report,
            embed,
        } => {
            let system: Vec<SystemSummary> = read_jsonl(&system)?;
            let corpus = load(&corpus)?;
            let emb = embed.map(|c| embedder(c, config)).transpose()?;
            let r = evaluate_rouge(&system, &corpus, emb.as_deref())?;
            write_report(&report, &r.to_json())?;
        }
        EvaluateCommand::Aos {
            assignments,
            generated,
            extractor,
            embedder: emb_choice,
            report,
        } => {
            let emb = embedder(emb_choice, config)?;
            let extractor: Box<dyn TripletExtractor> = match extractor {
                ExtractorChoice::Fallback => Box::new(LexiconExtractor::default()),
                ExtractorChoice::Sidecar => {
                    let ms = config.modelserve()?;
                    Box::new(HttpExtractor::new(&ms.base_url, ms.timeout())?)
                }
            };
            let mut reports = Vec::new();
            for (a, g) in aos_pairs(&assignments, &generated)? {
                let a: RetrievalResult = read_json(&a)?;
                let g: IndexMap<String, String> = read_json(&g)?;
                reports.push(verify_rag(&a, &g, extractor.as_ref(), emb.as_ref())?);
            }
            write_report(&report, &VerificationReport::combine(reports).to_json())?;
        }
        EvaluateCommand::Adherence { system, corpus, report } => {
            let outputs: Vec<SummaryOutput> = read_jsonl(&system)?;
            let corpus = load(&corpus)?;
            let r = adherence_report(&outputs, &corpus)?;
            write_report(&report, &serde_json::to_value(r)?)?;
        }
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let mut entries = Vec::new();
    for input in &a.inputs {
        let (label, path) = input
            .split_once('=')
            .with_context(|| format!("expected LABEL=PATH, got {input:?}"))?;
        let value: Value = read_json(Path::new(path))?;
        let entry = ReportEntry::detect(label, value).with_context(|| format!("{path} is not an evaluation report"))?;
        entries.push(entry);
    }
    let md = render_report(&entries);
    match a.out {
        Some(p) => fs::write(&p, md).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{md}"),
    }
    Ok(())
}
