use serde::{Deserialize, Serialize};

use super::engine::ResultList;
use super::url::urls_match;
use crate::{Error, Result};

/// Search results for one generated query of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSearchOutcome {
    pub claim_id: String,
    pub method: String,
    pub lists: Vec<ResultList>,
    pub target_found_per_list: Vec<bool>,
    /// 1-based position of the target in each list.
    pub best_rank_per_list: Vec<Option<usize>>,
}

impl SampleSearchOutcome {
    pub fn evaluate(
        claim_id: impl Into<String>,
        method: impl Into<String>,
        lists: Vec<ResultList>,
        target_url: &str,
        strict: bool,
    ) -> Self {
        let best_rank_per_list: Vec<Option<usize>> = lists
            .iter()
            .map(|l| {
                l.urls
                    .iter()
                    .position(|u| urls_match(u, target_url, strict))
                    .map(|p| p + 1)
            })
            .collect();
        Self {
            claim_id: claim_id.into(),
            method: method.into(),
            target_found_per_list: best_rank_per_list.iter().map(Option::is_some).collect(),
            best_rank_per_list,
            lists,
        }
    }

    pub fn executions(&self) -> usize {
        self.target_found_per_list.len()
    }

    pub fn hits(&self) -> usize {
        self.target_found_per_list.iter().filter(|f| **f).count()
    }
}

/// How many of the N executions must contain the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoundRule {
    All,
    /// At least `ceil((N+1)/2)`, i.e. two of three.
    Majority,
    Once,
}

impl FoundRule {
    pub fn threshold(self, n: usize) -> usize {
        match self {
            FoundRule::All => n,
            FoundRule::Majority => (n + 2) / 2,
            FoundRule::Once => 1,
        }
    }

    pub fn is_found(self, outcome: &SampleSearchOutcome) -> bool {
        let n = outcome.executions();
        n > 0 && outcome.hits() >= self.threshold(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchMetrics {
    pub fa_pct: f64,
    pub fm_pct: f64,
    pub fo_pct: f64,
    pub mrr: f64,
}

impl SearchMetrics {
    pub fn compute(outcomes: &[SampleSearchOutcome], k: usize) -> Result<Self> {
        let mut m = found_metrics(outcomes)?;
        m.mrr = mrr_at_k(outcomes, k)?;
        Ok(m)
    }
}

fn common_n(outcomes: &[SampleSearchOutcome]) -> Result<usize> {
    let first = outcomes
        .first()
        .ok_or_else(|| Error::InvalidArgument("no search outcomes to score".into()))?;
    let n = first.executions();
    if let Some(bad) = outcomes.iter().find(|o| o.executions() != n) {
        return Err(Error::InvalidArgument(format!(
            "sample {:?} has {} executions, expected {n}",
            bad.claim_id,
            bad.executions()
        )));
    }
    Ok(n)
}

/// FA/FM/FO percentages; `mrr` is left at 0.
pub fn found_metrics(outcomes: &[SampleSearchOutcome]) -> Result<SearchMetrics> {
    common_n(outcomes)?;
    let pct = |rule: FoundRule| {
        let found = outcomes.iter().filter(|o| rule.is_found(o)).count();
        100.0 * found as f64 / outcomes.len() as f64
    };
    Ok(SearchMetrics {
        fa_pct: pct(FoundRule::All),
        fm_pct: pct(FoundRule::Majority),
        fo_pct: pct(FoundRule::Once),
        mrr: 0.0,
    })
}

/// Mean reciprocal rank over every executed list (not per sample).
pub fn mrr_at_k(outcomes: &[SampleSearchOutcome], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("mrr k must be >= 1".into()));
    }
    common_n(outcomes)?;
    let (sum, count) = outcomes
        .iter()
        .flat_map(|o| o.best_rank_per_list.iter())
        .fold((0.0, 0usize), |(s, c), rank| match rank {
            Some(r) if *r <= k => (s + 1.0 / *r as f64, c + 1),
            _ => (s, c + 1),
        });
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}
