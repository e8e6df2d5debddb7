//! Borda-count fusion of several methods' result lists.
//!
//! Standard positional points (`k - rank + 1` for ranks `1..=k`), summed over
//! each method's lists and then over methods. Ties go to the URL whose best
//! supporting method has the lowest priority number, then to that method's
//! best rank for it, then to the lexicographically smaller URL.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::searcheval::{normalize_url, ResultList, SampleSearchOutcome};
use crate::{Error, Result};

/// One method's lists for a single sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodRanking {
    pub method: String,
    /// 1 = most individually effective.
    pub priority: u32,
    pub lists: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CombinedRanking {
    pub urls: Vec<String>,
    pub scores: Vec<f64>,
}

#[derive(Default)]
struct Tally {
    points: u64,
    // (priority, best rank within that method)
    best: Option<(u32, usize)>,
}

pub fn borda_combine(rankings: &[MethodRanking], k: usize) -> Result<CombinedRanking> {
    if rankings.is_empty() {
        return Err(Error::InvalidArgument("nothing to combine".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let mut prios = HashSet::new();
    if let Some(dup) = rankings.iter().find(|r| !prios.insert(r.priority)) {
        return Err(Error::InvalidArgument(format!(
            "priority {} used by more than one method",
            dup.priority
        )));
    }

    let mut tally: HashMap<String, Tally> = HashMap::new();
    for ranking in rankings {
        for list in &ranking.lists {
            let mut seen = HashSet::new();
            let normalized = list.iter().map(|u| normalize_url(u)).filter(|u| seen.insert(u.clone()));
            for (pos, url) in normalized.take(k).enumerate() {
                let rank = pos + 1;
                let t = tally.entry(url).or_default();
                t.points += (k - rank + 1) as u64;
                let cand = (ranking.priority, rank);
                t.best = Some(t.best.map_or(cand, |b| b.min(cand)));
            }
        }
    }

    let mut entries: Vec<(String, Tally)> = tally.into_iter().collect();
    entries.sort_by(|(ua, a), (ub, b)| {
        b.points
            .cmp(&a.points)
            .then_with(|| a.best.cmp(&b.best))
            .then_with(|| ua.cmp(ub))
    });
    entries.truncate(k);
    let (urls, scores) = entries
        .into_iter()
        .map(|(u, t)| (u, t.points as f64))
        .unzip();
    Ok(CombinedRanking { urls, scores })
}

/// Per-method outcomes for the same samples.
#[derive(Debug, Clone)]
pub struct MethodOutcomes {
    pub method: String,
    pub priority: u32,
    pub outcomes: Vec<SampleSearchOutcome>,
}

/// Combines methods execution by execution: the i-th combined list of a
/// sample fuses every method's i-th list. Samples follow the first method's
/// order; `targets` maps claim_id to its target URL for re-scoring.
pub fn combined_outcomes(
    methods: &[MethodOutcomes],
    targets: &HashMap<String, String>,
    k: usize,
    strict_urls: bool,
) -> Result<Vec<SampleSearchOutcome>> {
    let first = methods
        .first()
        .ok_or_else(|| Error::InvalidArgument("no methods to combine".into()))?;
    let label = format!(
        "ensemble({})",
        methods.iter().map(|m| m.method.as_str()).collect::<Vec<_>>().join("+")
    );
    let ids: Vec<&str> = first.outcomes.iter().map(|o| o.claim_id.as_str()).collect();
    let id_set: HashSet<&str> = ids.iter().copied().collect();

    let mut lookups: Vec<BTreeMap<&str, &SampleSearchOutcome>> = Vec::new();
    for m in methods {
        let map: BTreeMap<&str, &SampleSearchOutcome> =
            m.outcomes.iter().map(|o| (o.claim_id.as_str(), o)).collect();
        let keys: HashSet<&str> = map.keys().copied().collect();
        if keys != id_set || map.len() != m.outcomes.len() {
            return Err(Error::SampleMismatch(format!(
                "method {} covers a different sample set than {}",
                m.method, first.method
            )));
        }
        lookups.push(map);
    }

    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let per_method: Vec<&SampleSearchOutcome> = lookups.iter().map(|l| l[id]).collect();
        let n = per_method[0].lists.len();
        if per_method.iter().any(|o| o.lists.len() != n) {
            return Err(Error::SampleMismatch(format!(
                "sample {id}: methods executed a different number of times"
            )));
        }
        let target = targets
            .get(id)
            .ok_or_else(|| Error::SampleMismatch(format!("no target URL for {id}")))?;
        let mut lists = Vec::with_capacity(n);
        for i in 0..n {
            let rankings: Vec<MethodRanking> = methods
                .iter()
                .zip(&per_method)
                .map(|(m, o)| MethodRanking {
                    method: m.method.clone(),
                    priority: m.priority,
                    lists: vec![o.lists[i].urls.clone()],
                })
                .collect();
            let combined = borda_combine(&rankings, k)?;
            let members: Vec<&ResultList> = per_method.iter().map(|o| &o.lists[i]).collect();
            lists.push(ResultList {
                query_text: members
                    .iter()
                    .map(|l| l.query_text.as_str())
                    .collect::<Vec<_>>()
                    .join(" | "),
                engine_id: members[0].engine_id.clone(),
                execution_index: i,
                urls: combined.urls,
                retrieved_at: members.iter().map(|l| l.retrieved_at).max().unwrap(),
                failed: members.iter().all(|l| l.failed),
            });
        }
        out.push(SampleSearchOutcome::evaluate(id, label.clone(), lists, target, strict_urls));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::searcheval::SearchMetrics;
    use proptest::prelude::*;

    fn ranking(method: &str, priority: u32, lists: &[&[&str]]) -> MethodRanking {
        MethodRanking {
            method: method.into(),
            priority,
            lists: lists
                .iter()
                .map(|l| l.iter().map(|s| s.to_string()).collect())
                .collect(),
        }
    }

    #[test]
    fn two_method_example() {
        let c = borda_combine(
            &[ranking("a", 1, &[&["u1", "u2"]]), ranking("b", 2, &[&["u2", "u3"]])],
            10,
        )
        .unwrap();
        assert_eq!(c.urls, ["u2", "u1", "u3"]);
        assert_eq!(c.scores, [19.0, 10.0, 9.0]);
    }

    #[test]
    fn single_method_identity() {
        let list: &[&str] = &["x", "y", "z"];
        let c = borda_combine(&[ranking("a", 1, &[list, list, list])], 10).unwrap();
        assert_eq!(c.urls, list);
    }

    #[test]
    fn priority_breaks_point_ties() {
        // ua and ub both earn 10 points
        let c = borda_combine(
            &[ranking("low", 2, &[&["ub"]]), ranking("high", 1, &[&["ua"]])],
            10,
        )
        .unwrap();
        assert_eq!(c.urls, ["ua", "ub"]);
    }

    #[test]
    fn urls_are_normalized_and_truncated() {
        let c = borda_combine(
            &[
                ranking("a", 1, &[&["https://www.X.com/", "b", "c"]]),
                ranking("b", 2, &[&["x.com"]]),
            ],
            2,
        )
        .unwrap();
        assert_eq!(c.urls, ["x.com", "b"]);
        assert_eq!(c.scores, [4.0, 1.0]);
    }

    #[test]
    fn duplicate_priorities_rejected() {
        assert!(borda_combine(&[ranking("a", 1, &[]), ranking("b", 1, &[])], 10).is_err());
        assert!(borda_combine(&[], 10).is_err());
        assert!(borda_combine(&[ranking("a", 1, &[])], 0).is_err());
    }

    fn outcome(id: &str, lists: &[&[&str]], target: &str) -> SampleSearchOutcome {
        let lists = lists
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let mut r = ResultList::empty("q", "mock", i);
                r.urls = l.iter().map(|s| s.to_string()).collect();
                r
            })
            .collect();
        SampleSearchOutcome::evaluate(id, "m", lists, target, false)
    }

    #[test]
    fn self_combination_preserves_metrics() {
        let outs = vec![
            outcome("s1", &[&["t", "a"], &["a", "t"], &["b"]], "t"),
            outcome("s2", &[&["a", "b", "t"], &["c"], &["t"]], "t"),
        ];
        let targets = HashMap::from([("s1".into(), "t".into()), ("s2".into(), "t".into())]);
        let m = |p| MethodOutcomes { method: "m".into(), priority: p, outcomes: outs.clone() };
        let combined = combined_outcomes(&[m(1), m(2)], &targets, 10, false).unwrap();
        assert_eq!(
            SearchMetrics::compute(&combined, 10).unwrap(),
            SearchMetrics::compute(&outs, 10).unwrap()
        );
    }

    #[test]
    fn mismatched_samples_rejected() {
        let a = MethodOutcomes { method: "a".into(), priority: 1, outcomes: vec![outcome("s1", &[&["t"]], "t")] };
        let b = MethodOutcomes { method: "b".into(), priority: 2, outcomes: vec![outcome("s2", &[&["t"]], "t")] };
        let targets = HashMap::from([("s1".into(), "t".into()), ("s2".into(), "t".into())]);
        assert!(matches!(
            combined_outcomes(&[a, b], &targets, 10, false),
            Err(Error::SampleMismatch(_))
        ));
    }

    fn url_list() -> impl Strategy<Value = Vec<String>> {
        proptest::sample::subsequence(vec!["a", "b", "c", "d", "e", "f"], 0..6)
            .prop_shuffle()
            .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #[test]
        fn scores_non_increasing_and_unique(lists in proptest::collection::vec(url_list(), 1..6), k in 1usize..8) {
            let rankings: Vec<_> = lists
                .chunks(2)
                .enumerate()
                .map(|(i, c)| MethodRanking { method: i.to_string(), priority: i as u32 + 1, lists: c.to_vec() })
                .collect();
            let c = borda_combine(&rankings, k).unwrap();
            prop_assert!(c.urls.len() <= k);
            prop_assert!(c.scores.windows(2).all(|w| w[0] >= w[1]));
            let uniq: HashSet<_> = c.urls.iter().collect();
            prop_assert_eq!(uniq.len(), c.urls.len());
        }
    }
}
