use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::report::{CellAggregates, CellReport};
use crate::promptgen::FormatClass;
use crate::searcheval::{FoundRule, SampleSearchOutcome};
use crate::textmetrics::pearson;
use crate::{Error, Result};

/// 2×2 contingency of samples solved by method `a` and method `b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapTable {
    pub a: String,
    pub b: String,
    pub rule: FoundRule,
    pub both: usize,
    pub a_only: usize,
    pub b_only: usize,
    pub neither: usize,
    pub a_found: usize,
    pub b_found: usize,
    pub total: usize,
}

pub fn overlap_table(
    a_label: &str,
    a: &[SampleSearchOutcome],
    b_label: &str,
    b: &[SampleSearchOutcome],
    rule: FoundRule,
) -> Result<OverlapTable> {
    let b_by_id: HashMap<&str, &SampleSearchOutcome> =
        b.iter().map(|o| (o.claim_id.as_str(), o)).collect();
    let a_ids: HashSet<&str> = a.iter().map(|o| o.claim_id.as_str()).collect();
    if a_ids.len() != a.len() || b_by_id.len() != b.len() || a_ids.len() != b_by_id.len()
        || a_ids.iter().any(|id| !b_by_id.contains_key(id))
    {
        return Err(Error::SampleMismatch(format!(
            "{a_label} and {b_label} were evaluated on different samples"
        )));
    }
    let mut t = OverlapTable {
        a: a_label.to_string(),
        b: b_label.to_string(),
        rule,
        both: 0,
        a_only: 0,
        b_only: 0,
        neither: 0,
        a_found: 0,
        b_found: 0,
        total: a.len(),
    };
    for oa in a {
        let fa = rule.is_found(oa);
        let fb = rule.is_found(b_by_id[oa.claim_id.as_str()]);
        match (fa, fb) {
            (true, true) => t.both += 1,
            (true, false) => t.a_only += 1,
            (false, true) => t.b_only += 1,
            (false, false) => t.neither += 1,
        }
        t.a_found += usize::from(fa);
        t.b_found += usize::from(fb);
    }
    Ok(t)
}

pub const SIMILARITY_METRICS: [&str; 3] = ["rouge1", "rouge2", "rougeL"];
pub const SEARCH_METRICS: [&str; 4] = ["fa_pct", "fm_pct", "fo_pct", "mrr"];

/// Pearson correlation of each similarity metric with each search metric,
/// one point per evaluated (method, template) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    /// `None` where a series is constant.
    pub values: Vec<Vec<Option<f64>>>,
    pub points: Vec<String>,
}

pub fn correlation_report(cells: &[CellReport]) -> Result<CorrelationMatrix> {
    let usable: Vec<(&CellReport, CellAggregates)> = cells
        .iter()
        .filter_map(|c| c.mean.filter(|m| m.search().is_some()).map(|m| (c, m)))
        .collect();
    if usable.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "correlation needs at least 2 cells with search metrics, have {}",
            usable.len()
        )));
    }
    let sim = |m: &CellAggregates, i: usize| [m.rouge1, m.rouge2, m.rouge_l][i];
    let search = |m: &CellAggregates, j: usize| {
        let s = m.search().unwrap();
        [s.fa_pct, s.fm_pct, s.fo_pct, s.mrr][j]
    };
    let values = (0..3)
        .map(|i| {
            let xs: Vec<f64> = usable.iter().map(|(_, m)| sim(m, i)).collect();
            (0..4)
                .map(|j| {
                    let ys: Vec<f64> = usable.iter().map(|(_, m)| search(m, j)).collect();
                    match pearson(&xs, &ys) {
                        Ok(r) => Some(r),
                        Err(Error::Undefined(_)) => None,
                        Err(e) => panic!("pearson on equal-length series: {e}"),
                    }
                })
                .collect()
        })
        .collect();
    Ok(CorrelationMatrix {
        rows: SIMILARITY_METRICS.iter().map(|s| s.to_string()).collect(),
        columns: SEARCH_METRICS.iter().map(|s| s.to_string()).collect(),
        values,
        points: usable.iter().map(|(c, _)| c.label()).collect(),
    })
}

/// Spread of one method's results across templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub method: String,
    /// True for the few-shot rows that leave out no-prompt and short-prefix
    /// templates.
    pub excludes_weak_prompts: bool,
    pub templates: Vec<String>,
    pub mean: CellAggregates,
    /// Sample standard deviation over templates divided by sqrt(count);
    /// absent with a single template.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<CellAggregates>,
}

fn summarize(method: &str, excludes: bool, cells: &[&CellReport]) -> Option<SensitivityRow> {
    let aggs: Vec<CellAggregates> = cells.iter().filter_map(|c| c.mean).collect();
    let mean = CellAggregates::mean(&aggs)?;
    let std_error = (aggs.len() >= 2).then(|| {
        let n = aggs.len() as f64;
        let mv = mean.to_vec();
        let mut out = [None; 8];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = mv[i].map(|m| {
                let ss: f64 = aggs.iter().map(|a| (a.to_vec()[i].unwrap() - m).powi(2)).sum();
                (ss / (n - 1.0)).sqrt() / n.sqrt()
            });
        }
        CellAggregates::from_vec(out)
    });
    Some(SensitivityRow {
        method: method.to_string(),
        excludes_weak_prompts: excludes,
        templates: cells.iter().filter_map(|c| c.template_id.clone()).collect(),
        mean,
        std_error,
    })
}

pub fn prompt_sensitivity(cells: &[CellReport]) -> Vec<SensitivityRow> {
    let mut by_method: BTreeMap<&str, Vec<&CellReport>> = BTreeMap::new();
    let mut order = Vec::new();
    for c in cells.iter().filter(|c| c.template_id.is_some() && c.mean.is_some()) {
        if !by_method.contains_key(c.method.as_str()) {
            order.push(c.method.as_str());
        }
        by_method.entry(&c.method).or_default().push(c);
    }
    let mut rows = Vec::new();
    for method in order {
        let group = &by_method[method];
        rows.extend(summarize(method, false, group));
        if method.starts_with("few_shot") {
            let strong: Vec<&CellReport> = group
                .iter()
                .copied()
                .filter(|c| {
                    !matches!(
                        c.format_class,
                        Some(FormatClass::NoPrompt | FormatClass::ShortPrefix)
                    )
                })
                .collect();
            if strong.len() < group.len() {
                rows.extend(summarize(method, true, &strong));
            }
        }
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    MissingKeyTerm,
    NeedsExternalContext,
    WrongEntity,
    Hallucination,
    RecreatedClaim,
    QueryLooksGood,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 6] = [
        ErrorCategory::MissingKeyTerm,
        ErrorCategory::NeedsExternalContext,
        ErrorCategory::WrongEntity,
        ErrorCategory::Hallucination,
        ErrorCategory::RecreatedClaim,
        ErrorCategory::QueryLooksGood,
    ];
}

/// A manually assigned failure category for one generated query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorLabel {
    pub claim_id: String,
    pub category: ErrorCategory,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTally {
    pub total: usize,
    pub counts: Vec<(ErrorCategory, usize)>,
}

impl ErrorTally {
    pub fn from_labels(labels: &[ErrorLabel]) -> Self {
        let counts = ErrorCategory::ALL
            .iter()
            .map(|c| (*c, labels.iter().filter(|l| l.category == *c).count()))
            .collect();
        Self {
            total: labels.len(),
            counts,
        }
    }
}

pub fn load_error_labels(path: &Path) -> Result<Vec<ErrorLabel>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
