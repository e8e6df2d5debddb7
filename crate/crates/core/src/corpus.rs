//! Claim dataset: JSON-Lines I/O, article-grouped fold splits, and the
//! repeated-search stability filter used when building the dataset.
//!
//! Each line of a dataset file is one [`ClaimRecord`]. A file may optionally
//! start with a `{"metadata": {...}}` line carrying free-form key/value pairs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::par::{self, Mode};
use crate::searcheval::{execute_repeated, SampleSearchOutcome, SearchEngine, SnapshotStore};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimRecord {
    pub claim_id: String,
    pub article_id: String,
    pub claim_text: String,
    pub target_query: String,
    pub target_url: String,
    /// Preceding sentences and article title. Carried through, not yet used
    /// by any generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_sentences: Option<Vec<String>>,
}

impl ClaimRecord {
    pub fn validate(&self) -> Result<()> {
        let invalid = |field, message: &str| Error::InvalidRecord {
            claim_id: self.claim_id.clone(),
            field,
            message: message.to_string(),
        };
        if self.claim_text.is_empty() {
            return Err(invalid("claim_text", "must not be empty"));
        }
        if self.target_query.is_empty() {
            return Err(invalid("target_query", "must not be empty"));
        }
        url::Url::parse(&self.target_url)
            .map_err(|e| invalid("target_url", &format!("{e}: {:?}", self.target_url)))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<ClaimRecord>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MetadataLine {
    metadata: BTreeMap<String, String>,
}

impl Dataset {
    pub fn new(records: Vec<ClaimRecord>) -> Result<Self> {
        let ds = Self {
            records,
            metadata: BTreeMap::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            r.validate()?;
            if !seen.insert(r.claim_id.as_str()) {
                return Err(Error::DuplicateClaim(r.claim_id.clone()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, claim_id: &str) -> Option<&ClaimRecord> {
        self.records.iter().find(|r| r.claim_id == claim_id)
    }

    /// Claim indices grouped by article, articles in first-appearance order.
    pub fn articles(&self) -> Vec<(String, Vec<usize>)> {
        group_by_article(&self.records)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut buf = String::new();
        if !self.metadata.is_empty() {
            buf.push_str(&serde_json::to_string(&serde_json::json!({ "metadata": self.metadata }))?);
            buf.push('\n');
        }
        for r in &self.records {
            buf.push_str(&serde_json::to_string(r)?);
            buf.push('\n');
        }
        f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn group_by_article(records: &[ClaimRecord]) -> Vec<(String, Vec<usize>)> {
    let mut order: Vec<(String, Vec<usize>)> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        match index.get(r.article_id.as_str()) {
            Some(&slot) => order[slot].1.push(i),
            None => {
                index.insert(&r.article_id, order.len());
                order.push((r.article_id.clone(), vec![i]));
            }
        }
    }
    order
}

/// Reads and validates a JSON-Lines dataset. Errors carry 1-based line numbers.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ds = Dataset::default();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        if ds.records.is_empty() && ds.metadata.is_empty() {
            if let Ok(meta) = serde_json::from_str::<MetadataLine>(&line) {
                ds.metadata = meta.metadata;
                continue;
            }
        }
        let rec: ClaimRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        rec.validate().map_err(|e| parse_err(e.to_string()))?;
        if !seen.insert(rec.claim_id.clone()) {
            return Err(parse_err(Error::DuplicateClaim(rec.claim_id).to_string()));
        }
        ds.records.push(rec);
    }
    Ok(ds)
}

/// Claim → fold mapping where every claim of an article shares a fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub assignments: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, claim_id: &str) -> Option<usize> {
        self.assignments.get(claim_id).copied()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// (train, test) records for `fold`, each in dataset order.
    pub fn partition(&self, dataset: &Dataset, fold: usize) -> (Vec<ClaimRecord>, Vec<ClaimRecord>) {
        dataset
            .records
            .iter()
            .cloned()
            .partition(|r| self.fold_of(&r.claim_id) != Some(fold))
    }
}

/// Article-grouped k-fold split.
///
/// Articles are shuffled with `seed`, stably sorted by size (largest first),
/// then each goes to the currently smallest fold (lowest index on ties).
pub fn split_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be >= 2, got {k}")));
    }
    let mut articles = dataset.articles();
    if articles.len() < k {
        return Err(Error::TooFewArticles {
            needed: k,
            found: articles.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    articles.shuffle(&mut rng);
    articles.sort_by_key(|a| std::cmp::Reverse(a.1.len()));

    let mut load = vec![0usize; k];
    let mut assignments = BTreeMap::new();
    for (_, members) in &articles {
        let fold = (0..k).min_by_key(|&f| (load[f], f)).unwrap();
        load[fold] += members.len();
        for &i in members {
            assignments.insert(dataset.records[i].claim_id.clone(), fold);
        }
    }
    Ok(FoldAssignment { k, assignments })
}

/// Carves an article-grouped validation set out of a training split.
///
/// The validation size is the achievable article-sum closest to
/// `round(fraction * len)`, ties going to the smaller size. Among subsets with
/// that size, the one built from the earliest articles in seeded shuffle order
/// wins. Returns `(train_rest, validation)`, both in input order.
pub fn select_validation(
    train: &[ClaimRecord],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<ClaimRecord>, Vec<ClaimRecord>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "validation fraction must be in (0, 1), got {fraction}"
        )));
    }
    if train.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let target = (fraction * train.len() as f64).round() as usize;
    let mut articles = group_by_article(train);
    articles.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    // Subset-sum over article sizes. `reach[s]` holds the article index that
    // first reached sum s, so earlier articles are preferred.
    let total = train.len();
    let mut reach: Vec<Option<usize>> = vec![None; total + 1];
    let mut reachable = vec![false; total + 1];
    reachable[0] = true;
    for (a, (_, members)) in articles.iter().enumerate() {
        let size = members.len();
        for s in (size..=total).rev() {
            if !reachable[s] && reachable[s - size] {
                reachable[s] = true;
                reach[s] = Some(a);
            }
        }
    }
    let best = (0..=total)
        .filter(|&s| reachable[s])
        .min_by_key(|&s| (s.abs_diff(target), s))
        .unwrap_or(0);

    // Walk back; the article recorded at each sum was added after every
    // article recorded for the smaller remainder, so indices strictly drop.
    let mut chosen = HashSet::new();
    let mut s = best;
    while s > 0 {
        let a = reach[s].expect("reachable sum has a parent");
        chosen.insert(a);
        s -= articles[a].1.len();
    }
    let mut in_validation = vec![false; train.len()];
    for a in chosen {
        for &i in &articles[a].1 {
            in_validation[i] = true;
        }
    }
    let (val, rest): (Vec<_>, Vec<_>) = train
        .iter()
        .cloned()
        .zip(in_validation)
        .partition(|(_, v)| *v);
    Ok((
        rest.into_iter().map(|(r, _)| r).collect(),
        val.into_iter().map(|(r, _)| r).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitCount {
    pub claim_id: String,
    pub hits: usize,
    pub executions: usize,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub kept: Dataset,
    pub hits: Vec<HitCount>,
}

#[derive(Debug, Clone)]
pub struct StabilityOptions {
    pub executions: usize,
    pub threshold: f64,
    pub k: usize,
    pub strict_urls: bool,
    pub mode: Mode,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            executions: 12,
            threshold: 0.5,
            k: crate::searcheval::DEFAULT_K,
            strict_urls: false,
            mode: Mode::Parallel,
        }
    }
}

/// Minimum hits out of `executions` for a claim to be kept.
pub fn required_hits(executions: usize, threshold: f64) -> usize {
    // guard against 0.5 * 12 landing a hair above 6.0
    let raw = threshold * executions as f64;
    let rounded = raw.round();
    if (raw - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        raw.ceil() as usize
    }
}

/// Keeps claims whose target query returns the target URL in at least
/// `ceil(threshold * executions)` of `executions` runs.
///
/// Engine failures count as misses. Each distinct target query is executed
/// once per run and shared between claims that use it.
pub fn stability_filter(
    dataset: &Dataset,
    engine: &dyn SearchEngine,
    opts: &StabilityOptions,
    store: Option<&SnapshotStore>,
) -> Result<StabilityReport> {
    if opts.executions == 0 {
        return Err(Error::InvalidArgument("executions must be >= 1".into()));
    }
    if !(opts.threshold > 0.0 && opts.threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be in (0, 1], got {}",
            opts.threshold
        )));
    }
    let needed = required_hits(opts.executions, opts.threshold);

    let mut queries: Vec<&str> = dataset.records.iter().map(|r| r.target_query.as_str()).collect();
    queries.sort_unstable();
    queries.dedup();
    let results = par::map(opts.mode, &queries, |q| {
        execute_repeated(engine, q, opts.executions, opts.k, store)
    });
    let mut by_query = HashMap::new();
    for (q, lists) in queries.into_iter().zip(results) {
        by_query.insert(q, lists?);
    }

    let mut kept = Dataset {
        records: Vec::new(),
        metadata: dataset.metadata.clone(),
    };
    let mut hits = Vec::with_capacity(dataset.len());
    for r in &dataset.records {
        let lists = by_query[r.target_query.as_str()].clone();
        let outcome =
            SampleSearchOutcome::evaluate(&r.claim_id, "target", lists, &r.target_url, opts.strict_urls);
        let count = outcome.hits();
        let keep = count >= needed;
        if keep {
            kept.records.push(r.clone());
        }
        hits.push(HitCount {
            claim_id: r.claim_id.clone(),
            hits: count,
            executions: opts.executions,
            kept: keep,
        });
    }
    Ok(StabilityReport { kept, hits })
}
