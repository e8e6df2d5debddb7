use std::collections::{BTreeSet, HashMap};
use std::time::Duration;

use super::analysis::{
    correlation_report, load_error_labels, overlap_table, prompt_sensitivity, ErrorTally,
};
use super::config::{BackendConfig, BackendKind, EngineKind, ExperimentConfig, SearchConfig};
use super::report::{
    BestRow, CellAggregates, CellReport, DetailRow, EnsembleReport, ExperimentReport,
    ReportHeader, SearchDetail,
};
use crate::corpus::{load_dataset, split_folds, ClaimRecord};
use crate::ensemble::{combined_outcomes, MethodOutcomes};
use crate::par::{self, Mode};
use crate::promptgen::{
    find_template, generate, postprocess, render_few_shot, render_zero_shot,
    select_few_shot_examples, FewShotOptions, FewShotSelection, GenerationBackend, HttpBackend,
    PromptTemplate, StubBackend,
};
use crate::rulegen::{generate_rule_based, load_annotations, GeneratedQuery, Method};
use crate::searcheval::{
    execute_repeated, BingEngine, FoundRule, MockEngine, ResultList, Retrying, SampleSearchOutcome,
    SearchEngine, SearchMetrics, SnapshotStore,
};
use crate::textmetrics::SimilarityReport;
use crate::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub mode: Mode,
}

struct Cell {
    method: Method,
    template: Option<PromptTemplate>,
}

impl Cell {
    fn template_id(&self) -> Option<&str> {
        self.template.as_ref().map(|t| t.template_id.as_str())
    }
}

/// Generation backends for one fold.
struct FoldBackends {
    prompt: Box<dyn GenerationBackend>,
    fine_tuned: Box<dyn GenerationBackend>,
}

/// Instantiates a generation backend; `fold` picks from `fold_urls` when set.
pub fn build_backend(cfg: &BackendConfig, fold: usize) -> Result<Box<dyn GenerationBackend>> {
    match cfg.kind {
        BackendKind::Stub => Ok(Box::new(match &cfg.responses {
            Some(p) => StubBackend::from_file(p)?,
            None => StubBackend::default(),
        })),
        BackendKind::Http => {
            let url = cfg
                .fold_urls
                .get(fold)
                .or(cfg.url.as_ref())
                .ok_or_else(|| Error::Config("http backend has no url".into()))?;
            Ok(Box::new(
                HttpBackend::new(url.clone(), Duration::from_secs(cfg.timeout_secs))?
                    .with_retries(cfg.retries, Duration::from_secs(1)),
            ))
        }
    }
}

fn describe_backend(cfg: &BackendConfig) -> String {
    match cfg.kind {
        BackendKind::Stub => "stub".into(),
        BackendKind::Http if !cfg.fold_urls.is_empty() => "http (per-fold endpoints)".into(),
        BackendKind::Http => format!("http {}", cfg.url.as_deref().unwrap_or("")),
    }
}

/// Instantiates the configured engine. Bing is wrapped in retries.
pub fn build_engine(cfg: &SearchConfig) -> Result<Box<dyn SearchEngine>> {
    match cfg.engine {
        EngineKind::Mock => {
            let script = cfg.script.as_ref().ok_or_else(|| Error::Config("mock engine needs a script".into()))?;
            Ok(Box::new(MockEngine::from_file(script)?.with_dropout(cfg.dropout, cfg.dropout_seed)))
        }
        EngineKind::Bing => Ok(Box::new(Retrying::new(
            BingEngine::from_env(cfg.endpoint.as_deref(), cfg.requests_per_second)?,
            cfg.retries,
            Duration::from_secs(1),
        ))),
    }
}

fn generate_prompted(
    backend: &dyn GenerationBackend,
    cell: &Cell,
    claim: &ClaimRecord,
    examples: Option<&FewShotSelection>,
    config: &ExperimentConfig,
) -> Result<GeneratedQuery> {
    let tpl = cell.template.as_ref().expect("prompted cell has a template");
    let input = match cell.method.shots() {
        Some(shots) => {
            let sel = examples.expect("few-shot selection computed");
            render_few_shot(tpl, &sel.examples[..shots], &claim.claim_text)?
        }
        None => render_zero_shot(tpl, &claim.claim_text),
    };
    let raw = generate(backend, &input, &config.generation)?;
    Ok(GeneratedQuery::new(
        &claim.claim_id,
        cell.method,
        Some(&tpl.template_id),
        postprocess(&raw, tpl),
    ))
}

/// Executes every distinct query once (n times), reusing snapshots when asked.
fn run_searches(
    engine: &dyn SearchEngine,
    cfg: &SearchConfig,
    queries: Vec<String>,
    store: Option<&SnapshotStore>,
    mode: Mode,
) -> Result<HashMap<String, Vec<ResultList>>> {
    let lists = par::map(mode, &queries, |q| -> Result<Vec<ResultList>> {
        if cfg.reuse_snapshots {
            if let Some(store) = store {
                let stored = store.get(q, engine.id(), None)?;
                if stored.len() >= cfg.executions {
                    return Ok(stored.into_iter().take(cfg.executions).collect());
                }
            }
        }
        execute_repeated(engine, q, cfg.executions, cfg.k, store)
    });
    queries
        .into_iter()
        .zip(lists)
        .map(|(q, l)| l.map(|l| (q, l)))
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 { 0.0 } else { s / n as f64 }
}

fn fold_aggregate(rows: &[DetailRow], search: Option<SearchMetrics>) -> CellAggregates {
    CellAggregates {
        rouge1: mean(rows.iter().map(|r| r.rouge1)),
        rouge2: mean(rows.iter().map(|r| r.rouge2)),
        rouge_l: mean(rows.iter().map(|r| r.rouge_l)),
        levenshtein_ratio: mean(rows.iter().map(|r| r.levenshtein_ratio)),
        ..Default::default()
    }
    .with_search(search)
}

fn mean_search(per_fold: &[SearchMetrics]) -> Option<SearchMetrics> {
    if per_fold.is_empty() {
        return None;
    }
    let n = per_fold.len() as f64;
    Some(SearchMetrics {
        fa_pct: per_fold.iter().map(|m| m.fa_pct).sum::<f64>() / n,
        fm_pct: per_fold.iter().map(|m| m.fm_pct).sum::<f64>() / n,
        fo_pct: per_fold.iter().map(|m| m.fo_pct).sum::<f64>() / n,
        mrr: per_fold.iter().map(|m| m.mrr).sum::<f64>() / n,
    })
}

/// Loads everything the config names and runs the full protocol.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentReport> {
    config.validate()?;
    let mode = opts.mode;
    let dataset = load_dataset(&config.dataset)?;
    let annotations = match &config.annotations {
        Some(p) => load_annotations(p, &dataset)?,
        None => HashMap::new(),
    };
    let folds = split_folds(&dataset, config.folds, config.seed)?;

    let mut cells = Vec::new();
    for &method in &config.methods {
        if method.is_rule_based() {
            cells.push(Cell { method, template: None });
        } else {
            for id in config.template_ids() {
                cells.push(Cell { method, template: Some(find_template(&id)?) });
            }
        }
    }
    let backends: Vec<FoldBackends> = (0..config.folds)
        .map(|f| {
            Ok(FoldBackends {
                prompt: build_backend(&config.backend, f)?,
                fine_tuned: build_backend(config.fine_tuned_backend.as_ref().unwrap_or(&config.backend), f)?,
            })
        })
        .collect::<Result<_>>()?;

    // generation: per fold, per cell
    let mut generated: Vec<Vec<Result<Vec<GeneratedQuery>>>> = Vec::new();
    let mut selections: Vec<HashMap<String, Result<FewShotSelection>>> = Vec::new();
    let mut test_sets: Vec<Vec<ClaimRecord>> = Vec::new();
    for (fold, fb) in backends.iter().enumerate() {
        let (train, test) = folds.partition(&dataset, fold);
        let mut fold_sel: HashMap<String, Result<FewShotSelection>> = HashMap::new();
        for cell in cells.iter().filter(|c| c.method.shots().is_some()) {
            let tpl = cell.template.as_ref().unwrap();
            if fold_sel.contains_key(&tpl.template_id) {
                continue;
            }
            let fs_opts = FewShotOptions {
                params: config.generation,
                mode,
                checkpoint: config
                    .checkpoint_dir
                    .as_ref()
                    .map(|d| d.join(format!("fewshot-fold{fold}-{}.jsonl", tpl.template_id))),
            };
            if let Some(d) = &config.checkpoint_dir {
                std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            }
            let sel = select_few_shot_examples(&train, fb.prompt.as_ref(), tpl, &fs_opts);
            fold_sel.insert(tpl.template_id.clone(), sel);
        }

        let mut fold_gen = Vec::with_capacity(cells.len());
        for cell in &cells {
            let sel = match cell.template_id().filter(|_| cell.method.shots().is_some()) {
                Some(t) => match &fold_sel[t] {
                    Ok(s) => Some(s),
                    Err(e) => {
                        fold_gen.push(Err(Error::Backend {
                            attempts: 1,
                            message: format!("few-shot example selection failed: {e}"),
                        }));
                        continue;
                    }
                },
                None => None,
            };
            let backend = if cell.method == Method::FineTuned {
                fb.fine_tuned.as_ref()
            } else {
                fb.prompt.as_ref()
            };
            let results = par::map(mode, &test, |claim| {
                if cell.method.is_rule_based() {
                    generate_rule_based(cell.method, claim, annotations.get(&claim.claim_id))
                } else {
                    generate_prompted(backend, cell, claim, sel, config)
                }
            });
            fold_gen.push(results.into_iter().collect());
        }
        generated.push(fold_gen);
        selections.push(fold_sel);
        test_sets.push(test);
    }

    // search: every distinct query runs once
    let search_cfg = config.search.as_ref();
    let engine = search_cfg.map(build_engine).transpose()?;
    let store = search_cfg
        .and_then(|s| s.snapshot_dir.as_ref())
        .map(SnapshotStore::open)
        .transpose()?;
    let results = match (search_cfg, &engine) {
        (Some(cfg), Some(engine)) => {
            let mut queries = BTreeSet::new();
            for fold_gen in &generated {
                for qs in fold_gen.iter().flatten() {
                    queries.extend(qs.iter().map(|q| q.text.clone()));
                }
            }
            if cfg.target_queries {
                queries.extend(dataset.records.iter().map(|r| r.target_query.clone()));
            }
            run_searches(engine.as_ref(), cfg, queries.into_iter().collect(), store.as_ref(), mode)?
        }
        _ => HashMap::new(),
    };
    let targets: HashMap<String, String> = dataset
        .records
        .iter()
        .map(|r| (r.claim_id.clone(), r.target_url.clone()))
        .collect();
    let strict = search_cfg.is_some_and(|s| s.strict_urls);
    let k = search_cfg.map_or(crate::searcheval::DEFAULT_K, |s| s.k);

    // scoring
    let mut details = Vec::new();
    let mut cell_reports = Vec::with_capacity(cells.len());
    // outcomes[cell][fold]
    let mut outcomes: Vec<Vec<Vec<SampleSearchOutcome>>> = vec![Vec::new(); cells.len()];
    for (ci, cell) in cells.iter().enumerate() {
        let mut report = CellReport {
            method: cell.method.to_string(),
            template_id: cell.template_id().map(str::to_string),
            format_class: cell.template.as_ref().map(|t| t.format_class),
            error: None,
            per_fold: Vec::new(),
            mean: None,
            few_shot_examples: Vec::new(),
        };
        let mut cell_details = Vec::new();
        for fold in 0..config.folds {
            let queries = match &generated[fold][ci] {
                Ok(q) => q,
                Err(e) => {
                    report.error = Some(format!("fold {fold}: {e}"));
                    break;
                }
            };
            if let (Some(_), Some(t)) = (cell.method.shots(), cell.template_id()) {
                if let Ok(sel) = &selections[fold][t] {
                    report
                        .few_shot_examples
                        .push(sel.examples.iter().map(|e| e.source_claim_id.clone()).collect());
                }
            }
            let test = &test_sets[fold];
            let rows: Vec<(DetailRow, Option<SampleSearchOutcome>)> = par::map_range(mode, test.len(), |i| {
                let claim = &test[i];
                let q = &queries[i];
                let sim = SimilarityReport::compute(&claim.target_query, &q.text);
                let outcome = results.get(&q.text).map(|lists| {
                    SampleSearchOutcome::evaluate(&claim.claim_id, cell.method.as_str(), lists.clone(), &claim.target_url, strict)
                });
                let row = DetailRow {
                    fold,
                    claim_id: claim.claim_id.clone(),
                    method: cell.method.to_string(),
                    template_id: cell.template_id().map(str::to_string),
                    query: q.text.clone(),
                    empty: q.empty,
                    rouge1: sim.rouge1.f1,
                    rouge2: sim.rouge2.f1,
                    rouge_l: sim.rouge_l.f1,
                    levenshtein_distance: sim.levenshtein_distance,
                    levenshtein_ratio: sim.levenshtein_ratio,
                    search: outcome.as_ref().map(|o| SearchDetail {
                        hits: o.hits(),
                        executions: o.executions(),
                        ranks: o.best_rank_per_list.clone(),
                    }),
                };
                (row, outcome)
            });
            let (rows, fold_outcomes): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
            let fold_outcomes: Vec<SampleSearchOutcome> = fold_outcomes.into_iter().flatten().collect();
            let search = if engine.is_some() {
                Some(SearchMetrics::compute(&fold_outcomes, k)?)
            } else {
                None
            };
            report.per_fold.push(fold_aggregate(&rows, search));
            outcomes[ci].push(fold_outcomes);
            cell_details.extend(rows);
        }
        if report.error.is_some() {
            report.per_fold.clear();
            report.few_shot_examples.clear();
            outcomes[ci].clear();
        } else {
            report.mean = CellAggregates::mean(&report.per_fold);
            details.extend(cell_details);
        }
        cell_reports.push(report);
    }

    // best template per method
    let selection_metric = if engine.is_some() { "fm_pct" } else { "rouge2" };
    let score = |c: &CellReport| {
        let m = c.mean.unwrap();
        if engine.is_some() { m.fm_pct.unwrap_or(0.0) } else { m.rouge2 }
    };
    let mut best: Vec<(Method, usize)> = Vec::new();
    for &method in &config.methods {
        let winner = cell_reports
            .iter()
            .enumerate()
            .filter(|(_, c)| c.method == method.as_str() && c.mean.is_some())
            .fold(None::<usize>, |acc, (i, c)| match acc {
                Some(j) if score(&cell_reports[j]) >= score(c) => Some(j),
                _ => Some(i),
            });
        if let Some(i) = winner {
            best.push((method, i));
        }
    }
    let best_per_method = best
        .iter()
        .map(|&(m, i)| BestRow {
            method: m.to_string(),
            template_id: cell_reports[i].template_id.clone(),
            aggregates: cell_reports[i].mean.unwrap(),
        })
        .collect();

    let mut target_queries = None;
    let mut ensembles = Vec::new();
    let mut overlaps = Vec::new();
    if let Some(cfg) = search_cfg {
        if cfg.target_queries {
            let per_fold = test_sets
                .iter()
                .map(|test| {
                    let outs: Vec<_> = test
                        .iter()
                        .map(|c| SampleSearchOutcome::evaluate(&c.claim_id, "target_query", results[&c.target_query].clone(), &c.target_url, strict))
                        .collect();
                    SearchMetrics::compute(&outs, k)
                })
                .collect::<Result<Vec<_>>>()?;
            target_queries = mean_search(&per_fold);
        }

        let best_of = |m: Method| best.iter().find(|(bm, _)| *bm == m).map(|(_, i)| *i);
        for ens in &config.ensembles {
            let members: Vec<Option<usize>> = ens.methods.iter().map(|m| best_of(*m)).collect();
            let mut er = EnsembleReport {
                methods: ens.methods.iter().map(|m| m.to_string()).collect(),
                templates: members.iter().map(|i| i.and_then(|i| cell_reports[i].template_id.clone())).collect(),
                priorities: Vec::new(),
                error: None,
                per_fold: Vec::new(),
                mean: None,
            };
            if members.iter().any(Option::is_none) {
                er.error = Some("a member method has no successful cell".into());
                ensembles.push(er);
                continue;
            }
            let members: Vec<usize> = members.into_iter().flatten().collect();
            er.priorities = if ens.priorities.is_empty() {
                // standalone FM%, best first; config order breaks ties
                let mut order: Vec<usize> = (0..members.len()).collect();
                order.sort_by(|&a, &b| score(&cell_reports[members[b]]).total_cmp(&score(&cell_reports[members[a]])).then(a.cmp(&b)));
                let mut p = vec![0; members.len()];
                for (rank, idx) in order.into_iter().enumerate() {
                    p[idx] = rank as u32 + 1;
                }
                p
            } else {
                ens.priorities.clone()
            };
            let run = || -> Result<Vec<SearchMetrics>> {
                (0..config.folds)
                    .map(|fold| {
                        let inputs: Vec<MethodOutcomes> = members
                            .iter()
                            .zip(&er.priorities)
                            .map(|(&ci, &p)| MethodOutcomes {
                                method: cell_reports[ci].method.clone(),
                                priority: p,
                                outcomes: outcomes[ci][fold].clone(),
                            })
                            .collect();
                        SearchMetrics::compute(&combined_outcomes(&inputs, &targets, k, strict)?, k)
                    })
                    .collect()
            };
            match run() {
                Ok(per_fold) => {
                    er.mean = mean_search(&per_fold);
                    er.per_fold = per_fold;
                }
                Err(e) => er.error = Some(e.to_string()),
            }
            ensembles.push(er);
        }

        for (x, &(ma, ia)) in best.iter().enumerate() {
            for &(mb, ib) in &best[x + 1..] {
                let a: Vec<_> = outcomes[ia].concat();
                let b: Vec<_> = outcomes[ib].concat();
                overlaps.push(overlap_table(ma.as_str(), &a, mb.as_str(), &b, FoundRule::Majority)?);
            }
        }
    }

    let error_labels = match &config.error_labels {
        Some(p) => Some(ErrorTally::from_labels(&load_error_labels(p)?)),
        None => None,
    };
    let correlations = if engine.is_some() { correlation_report(&cell_reports).ok() } else { None };

    let header = ReportHeader {
        dataset: config.dataset.display().to_string(),
        records: dataset.len(),
        folds: config.folds,
        fold_test_sizes: folds.fold_sizes(),
        seed: config.seed,
        generation: config.generation,
        backend: describe_backend(&config.backend),
        engine: engine.as_ref().map(|e| e.id().to_string()),
        executions: search_cfg.map(|s| s.executions),
        k: search_cfg.map(|s| s.k),
        selection_metric: selection_metric.into(),
        correlation_points: "one point per (method, template) cell, fold-averaged".into(),
    };
    Ok(ExperimentReport {
        header,
        prompt_sensitivity: prompt_sensitivity(&cell_reports),
        cells: cell_reports,
        best_per_method,
        target_queries,
        ensembles,
        correlations,
        overlaps,
        error_labels,
        trainer: config.trainer.clone(),
        details,
    })
}
