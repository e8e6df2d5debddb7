use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use eqk::corpus::{load_dataset, split_folds, stability_filter, ClaimRecord, Dataset, StabilityOptions};
use eqk::ensemble::{combined_outcomes, MethodOutcomes};
use eqk::harness::{
    build_backend, build_engine, run_experiment, BackendConfig, BackendKind, EngineKind, ExperimentConfig,
    ExperimentReport, RunOptions, SearchConfig,
};
use eqk::par::Mode;
use eqk::promptgen::{
    find_template, generate, postprocess, render_few_shot, render_zero_shot, select_few_shot_examples,
    FewShotOptions, GenerationParams, TrainerConfig,
};
use eqk::rulegen::{generate_rule_based, load_annotations, GeneratedQuery, Method};
use eqk::searcheval::{execute_repeated, ResultList, SampleSearchOutcome, SearchMetrics, SnapshotStore};
use eqk::textmetrics::SimilarityReport;

#[derive(Parser)]
#[command(name = "eqk", version, about = "Search query generation and evaluation for claim verification")]
struct Cli {
    /// Run batch work on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dataset checks, fold assignment and stability filtering.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Generate queries for a claims file.
    Generate(GenerateArgs),
    /// Similarity of generated queries to a column of the claims file.
    Score(ScoreArgs),
    /// Execute queries against an engine, or score executed lists.
    #[command(subcommand)]
    Search(SearchCmd),
    /// Borda-combine the result lists of several methods.
    Ensemble(EnsembleArgs),
    /// Full cross-validated experiment from a TOML config.
    Run(RunArgs),
    /// Print the text tables of a saved report.
    Report {
        /// report.json or the directory holding it.
        path: PathBuf,
    },
    /// Emit the fine-tuning settings for an external trainer.
    TrainerConfig {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CorpusCmd {
    Validate {
        path: PathBuf,
    },
    Split {
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        path: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    StabilityFilter {
        #[arg(long, default_value_t = 12)]
        executions: usize,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[command(flatten)]
        engine: EngineArgs,
        /// Kept records are written here.
        #[arg(long)]
        out: PathBuf,
        /// Per-claim hit counts as JSONL.
        #[arg(long)]
        hits: Option<PathBuf>,
        path: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineChoice {
    Bing,
    Mock,
}

#[derive(Args)]
struct EngineArgs {
    #[arg(long, value_enum)]
    engine: EngineChoice,
    /// Query → lists script for the mock engine.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Search API endpoint override.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value_t = 3.0)]
    rps: f64,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    snapshot_dir: Option<PathBuf>,
    /// Compare URLs exactly instead of normalized.
    #[arg(long)]
    strict_urls: bool,
}

impl EngineArgs {
    fn config(&self, executions: usize) -> SearchConfig {
        let mut cfg = SearchConfig::new(match self.engine {
            EngineChoice::Bing => EngineKind::Bing,
            EngineChoice::Mock => EngineKind::Mock,
        });
        cfg.script = self.script.clone();
        cfg.endpoint = self.endpoint.clone();
        cfg.requests_per_second = self.rps;
        cfg.k = self.k;
        cfg.executions = executions;
        cfg.snapshot_dir = self.snapshot_dir.clone();
        cfg.strict_urls = self.strict_urls;
        cfg
    }

    fn store(&self) -> Result<Option<SnapshotStore>> {
        Ok(match &self.snapshot_dir {
            Some(d) => Some(SnapshotStore::open(d)?),
            None => None,
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GenMethod {
    Verbatim,
    Ne,
    Np,
    ZeroShot,
    FewShot,
    FineTuned,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    method: GenMethod,
    #[arg(long)]
    claims: PathBuf,
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long, default_value = "no-prompt")]
    template: String,
    #[arg(long, default_value_t = 3)]
    shots: usize,
    /// Pool the in-context examples are screened from (few-shot only).
    #[arg(long)]
    train: Option<PathBuf>,
    /// HTTP generation endpoint; without it a stub backend is used.
    #[arg(long)]
    backend_url: Option<String>,
    /// Input → output table for the stub backend.
    #[arg(long)]
    stub_responses: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    max_new_tokens: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    claims: PathBuf,
    /// Generated queries (JSONL with claim_id and text).
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, default_value = "target_query")]
    target_col: String,
    /// Per-pair reports; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SearchCmd {
    Run {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Generated queries (JSONL).
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Metrics {
        #[arg(long)]
        claims: PathBuf,
        /// Output of `search run`.
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        strict_urls: bool,
    },
}

#[derive(Args)]
struct EnsembleArgs {
    #[arg(long)]
    claims: PathBuf,
    /// Output of `search run` holding every listed method.
    #[arg(long)]
    results: PathBuf,
    /// Comma-separated labels: a method, or method/template.
    #[arg(long, value_delimiter = ',', required = true)]
    methods: Vec<String>,
    /// One per method, 1 = strongest; defaults to listing order.
    #[arg(long, value_delimiter = ',')]
    priorities: Vec<u32>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    strict_urls: bool,
    /// Combined lists as JSONL.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// One executed query, as written by `search run`.
#[derive(Serialize, Deserialize)]
struct SearchRecord {
    claim_id: String,
    method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    template_id: Option<String>,
    query: String,
    lists: Vec<ResultList>,
}

impl SearchRecord {
    fn label(&self) -> String {
        match &self.template_id {
            Some(t) => format!("{}/{t}", self.method),
            None => self.method.to_string(),
        }
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mode = if cli.sequential { Mode::Sequential } else { Mode::Parallel };
    match cli.command {
        Command::Corpus(cmd) => corpus(cmd, mode),
        Command::Generate(args) => generate_cmd(args, mode),
        Command::Score(args) => score(args),
        Command::Search(cmd) => search(cmd, mode),
        Command::Ensemble(args) => ensemble(args),
        Command::Run(args) => {
            let cfg = ExperimentConfig::from_file(&args.config)?;
            let report = run_experiment(&cfg, &RunOptions { mode })?;
            report.write(&args.out)?;
            println!("wrote {}", args.out.join("report.json").display());
            Ok(())
        }
        Command::Report { path } => {
            let path = if path.is_dir() { path.join("report.json") } else { path };
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let report: ExperimentReport = serde_json::from_str(&text)?;
            print!("{}", report.render_text());
            Ok(())
        }
        Command::TrainerConfig { out } => {
            let mut w = sink(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &TrainerConfig::default())?;
            writeln!(w)?;
            Ok(())
        }
    }
}

fn corpus(cmd: CorpusCmd, mode: Mode) -> Result<()> {
    match cmd {
        CorpusCmd::Validate { path } => {
            let ds = load_dataset(&path)?;
            println!("ok: {} claims in {} articles", ds.len(), ds.articles().len());
        }
        CorpusCmd::Split { k, seed, path, out } => {
            let ds = load_dataset(&path)?;
            let folds = split_folds(&ds, k, seed)?;
            let mut w = sink(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &folds)?;
            writeln!(w)?;
            eprintln!("fold sizes {:?}", folds.fold_sizes());
        }
        CorpusCmd::StabilityFilter {
            executions,
            threshold,
            engine,
            out,
            hits,
            path,
        } => {
            let ds = load_dataset(&path)?;
            let eng = build_engine(&engine.config(executions))?;
            let store = engine.store()?;
            let opts = StabilityOptions {
                executions,
                threshold,
                k: engine.k,
                strict_urls: engine.strict_urls,
                mode,
            };
            let report = stability_filter(&ds, eng.as_ref(), &opts, store.as_ref())?;
            report.kept.write(&out)?;
            if let Some(h) = hits {
                write_jsonl(&h, &report.hits)?;
            }
            println!("kept {} of {} claims", report.kept.len(), ds.len());
        }
    }
    Ok(())
}

fn generate_cmd(args: GenerateArgs, mode: Mode) -> Result<()> {
    let ds = load_dataset(&args.claims)?;
    let queries: Vec<GeneratedQuery> = match args.method {
        GenMethod::Verbatim | GenMethod::Ne | GenMethod::Np => {
            let method = match args.method {
                GenMethod::Verbatim => Method::Verbatim,
                GenMethod::Ne => Method::NamedEntities,
                _ => Method::NounPhrases,
            };
            let anns = match &args.annotations {
                Some(p) => load_annotations(p, &ds)?,
                None if method == Method::Verbatim => HashMap::new(),
                None => bail!("--annotations is required for {method}"),
            };
            ds.records
                .iter()
                .map(|r| generate_rule_based(method, r, anns.get(&r.claim_id)))
                .collect::<eqk::Result<_>>()?
        }
        GenMethod::ZeroShot | GenMethod::FewShot | GenMethod::FineTuned => prompted(&args, &ds, mode)?,
    };
    write_jsonl(&args.out, &queries)?;
    let empty = queries.iter().filter(|q| q.empty).count();
    println!("wrote {} queries ({empty} empty)", queries.len());
    Ok(())
}

fn prompted(args: &GenerateArgs, ds: &Dataset, mode: Mode) -> Result<Vec<GeneratedQuery>> {
    let tpl = find_template(&args.template)?;
    let backend = build_backend(
        &BackendConfig {
            kind: if args.backend_url.is_some() { BackendKind::Http } else { BackendKind::Stub },
            url: args.backend_url.clone(),
            responses: args.stub_responses.clone(),
            timeout_secs: 60,
            retries: 3,
            ..Default::default()
        },
        0,
    )?;
    let params = GenerationParams {
        max_new_tokens: args.max_new_tokens,
        ..Default::default()
    };
    let (method, examples) = match args.method {
        GenMethod::FewShot => {
            let method = Method::few_shot(args.shots).context("--shots must be 1, 2 or 3")?;
            let train_path = args.train.as_ref().context("--train is required for few-shot")?;
            let train = load_dataset(train_path)?;
            let opts = FewShotOptions {
                params,
                mode,
                checkpoint: None,
            };
            let sel = select_few_shot_examples(&train.records, backend.as_ref(), &tpl, &opts)?;
            let ids: Vec<&str> = sel.examples.iter().map(|e| e.source_claim_id.as_str()).collect();
            eprintln!("in-context examples: {}", ids.join(", "));
            (method, sel.examples[..args.shots].to_vec())
        }
        GenMethod::FineTuned => (Method::FineTuned, Vec::new()),
        _ => (Method::ZeroShot, Vec::new()),
    };
    let one = |r: &ClaimRecord| -> eqk::Result<GeneratedQuery> {
        let input = if examples.is_empty() {
            render_zero_shot(&tpl, &r.claim_text)
        } else {
            render_few_shot(&tpl, &examples, &r.claim_text)?
        };
        let raw = generate(backend.as_ref(), &input, &params)?;
        Ok(GeneratedQuery::new(&r.claim_id, method, Some(&tpl.template_id), postprocess(&raw, &tpl)))
    };
    Ok(eqk::par::map(mode, &ds.records, one).into_iter().collect::<eqk::Result<_>>()?)
}

#[derive(Serialize)]
struct ScoredPair<'a> {
    claim_id: &'a str,
    target: &'a str,
    generated: &'a str,
    #[serde(flatten)]
    report: SimilarityReport,
}

fn target_field<'a>(r: &'a ClaimRecord, col: &str) -> Result<&'a str> {
    Ok(match col {
        "target_query" => &r.target_query,
        "claim_text" => &r.claim_text,
        "target_url" => &r.target_url,
        other => bail!("unknown target column {other:?}"),
    })
}

fn score(args: ScoreArgs) -> Result<()> {
    let ds = load_dataset(&args.claims)?;
    let preds: Vec<GeneratedQuery> = read_jsonl(&args.pred)?;
    let mut w = sink(args.out.as_deref())?;
    let mut sums = [0.0f64; 4];
    for p in &preds {
        let rec = ds.get(&p.claim_id).with_context(|| format!("no claim {:?}", p.claim_id))?;
        let target = target_field(rec, &args.target_col)?;
        let report = SimilarityReport::compute(target, &p.text);
        for (s, v) in sums.iter_mut().zip([
            report.rouge1.f1,
            report.rouge2.f1,
            report.rouge_l.f1,
            report.levenshtein_ratio,
        ]) {
            *s += v;
        }
        serde_json::to_writer(&mut w, &ScoredPair {
            claim_id: &p.claim_id,
            target,
            generated: &p.text,
            report,
        })?;
        writeln!(w)?;
    }
    w.flush()?;
    let n = preds.len().max(1) as f64;
    let means = serde_json::json!({
        "pairs": preds.len(),
        "rouge1": sums[0] / n,
        "rouge2": sums[1] / n,
        "rougeL": sums[2] / n,
        "levenshtein_ratio": sums[3] / n,
    });
    eprintln!("{means}");
    Ok(())
}

fn search(cmd: SearchCmd, mode: Mode) -> Result<()> {
    match cmd {
        SearchCmd::Run {
            engine,
            n,
            queries,
            out,
        } => {
            let queries: Vec<GeneratedQuery> = read_jsonl(&queries)?;
            let eng = build_engine(&engine.config(n))?;
            let store = engine.store()?;
            let lists = eqk::par::map(mode, &queries, |q| {
                execute_repeated(eng.as_ref(), &q.text, n, engine.k, store.as_ref())
            });
            let mut records = Vec::with_capacity(queries.len());
            for (q, l) in queries.into_iter().zip(lists) {
                records.push(SearchRecord {
                    claim_id: q.claim_id,
                    method: q.method,
                    template_id: q.template_id,
                    query: q.text,
                    lists: l?,
                });
            }
            let failed = records.iter().flat_map(|r| &r.lists).filter(|l| l.failed).count();
            write_jsonl(&out, &records)?;
            println!("executed {} queries x {n} ({failed} failed lists)", records.len());
        }
        SearchCmd::Metrics {
            claims,
            results,
            k,
            strict_urls,
        } => {
            let ds = load_dataset(&claims)?;
            let records: Vec<SearchRecord> = read_jsonl(&results)?;
            let mut groups: BTreeMap<String, Vec<SampleSearchOutcome>> = BTreeMap::new();
            for r in records {
                let rec = ds.get(&r.claim_id).with_context(|| format!("no claim {:?}", r.claim_id))?;
                let label = r.label();
                let o = SampleSearchOutcome::evaluate(&r.claim_id, &label, r.lists, &rec.target_url, strict_urls);
                groups.entry(label).or_default().push(o);
            }
            for (label, outcomes) in groups {
                let m = SearchMetrics::compute(&outcomes, k)?;
                println!("{}", serde_json::json!({"method": label, "samples": outcomes.len(), "metrics": m}));
            }
        }
    }
    Ok(())
}

fn ensemble(args: EnsembleArgs) -> Result<()> {
    let ds = load_dataset(&args.claims)?;
    let records: Vec<SearchRecord> = read_jsonl(&args.results)?;
    let priorities: Vec<u32> = if args.priorities.is_empty() {
        (1..=args.methods.len() as u32).collect()
    } else if args.priorities.len() == args.methods.len() {
        args.priorities.clone()
    } else {
        bail!("{} priorities for {} methods", args.priorities.len(), args.methods.len());
    };
    let targets: HashMap<String, String> = ds
        .records
        .iter()
        .map(|r| (r.claim_id.clone(), r.target_url.clone()))
        .collect();

    let mut methods = Vec::new();
    for (want, prio) in args.methods.iter().zip(&priorities) {
        let matching: Vec<&SearchRecord> = records
            .iter()
            .filter(|r| r.label() == *want || r.method.to_string() == *want)
            .collect();
        let mut labels: Vec<String> = matching.iter().map(|r| r.label()).collect();
        labels.sort();
        labels.dedup();
        match labels.len() {
            0 => bail!("no results for {want:?}"),
            1 => {}
            _ => bail!("{want:?} is ambiguous, pick one of {labels:?}"),
        }
        let outcomes = matching
            .into_iter()
            .map(|r| {
                let target = targets.get(&r.claim_id).with_context(|| format!("no claim {:?}", r.claim_id))?;
                Ok(SampleSearchOutcome::evaluate(&r.claim_id, want, r.lists.clone(), target, args.strict_urls))
            })
            .collect::<Result<Vec<_>>>()?;
        methods.push(MethodOutcomes {
            method: want.clone(),
            priority: *prio,
            outcomes,
        });
    }
    let combined = combined_outcomes(&methods, &targets, args.k, args.strict_urls)?;
    let m = SearchMetrics::compute(&combined, args.k)?;
    if let Some(out) = &args.out {
        write_jsonl(out, &combined)?;
    }
    println!(
        "{}",
        serde_json::json!({"methods": args.methods, "priorities": priorities, "samples": combined.len(), "metrics": m})
    );
    Ok(())
}
