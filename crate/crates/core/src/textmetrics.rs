//! Character-level similarity between a generated query and its target.
//!
//! Queries are short, so Rouge is computed over characters rather than words:
//! [`char_tokenize`] lowercases and drops whitespace, which makes Rouge-1
//! insensitive to word order. Levenshtein works on raw Unicode scalar values.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_counts(matched: usize, target_len: usize, generated_len: usize) -> Self {
        if target_len == 0 || generated_len == 0 {
            return Self::default();
        }
        let precision = matched as f64 / generated_len as f64;
        let recall = matched as f64 / target_len as f64;
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

/// Every similarity measure for one (target, generated) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    #[serde(rename = "rougeL")]
    pub rouge_l: RougeScore,
    pub levenshtein_distance: usize,
    pub levenshtein_ratio: f64,
}

impl SimilarityReport {
    pub fn compute(target: &str, generated: &str) -> Self {
        let t = char_tokenize(target);
        let g = char_tokenize(generated);
        Self {
            rouge1: rouge_n_tokens(&t, &g, 1),
            rouge2: rouge_n_tokens(&t, &g, 2),
            rouge_l: rouge_l_tokens(&t, &g),
            levenshtein_distance: levenshtein(target, generated),
            levenshtein_ratio: levenshtein_ratio(target, generated),
        }
    }
}

pub fn char_tokenize(s: &str) -> Vec<char> {
    s.chars()
        .filter(|c| !c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Clipped character n-gram overlap. `n` must be 1 or 2.
pub fn rouge_n(target: &str, generated: &str, n: usize) -> Result<RougeScore> {
    if !(1..=2).contains(&n) {
        return Err(Error::InvalidArgument(format!("rouge n must be 1 or 2, got {n}")));
    }
    Ok(rouge_n_tokens(
        &char_tokenize(target),
        &char_tokenize(generated),
        n,
    ))
}

fn ngram_counts(tokens: &[char], n: usize) -> HashMap<&[char], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

pub(crate) fn rouge_n_tokens(target: &[char], generated: &[char], n: usize) -> RougeScore {
    let t = ngram_counts(target, n);
    let g = ngram_counts(generated, n);
    let t_total: usize = t.values().sum();
    let g_total: usize = g.values().sum();
    let matched: usize = t
        .iter()
        .map(|(gram, &tc)| g.get(gram).map_or(0, |&gc| tc.min(gc)))
        .sum();
    RougeScore::from_counts(matched, t_total, g_total)
}

pub fn rouge_l(target: &str, generated: &str) -> RougeScore {
    rouge_l_tokens(&char_tokenize(target), &char_tokenize(generated))
}

pub(crate) fn rouge_l_tokens(target: &[char], generated: &[char]) -> RougeScore {
    let lcs = lcs_len(target, generated);
    RougeScore::from_counts(lcs, target.len(), generated.len())
}

fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let above = row[j + 1];
            let cost = usize::from(ca != cb);
            row[j + 1] = (diag + cost).min(above + 1).min(row[j] + 1);
            diag = above;
        }
    }
    row[b.len()]
}

/// `1 - distance / max_len`; two empty strings are identical (1.0).
pub fn levenshtein_ratio(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument(format!(
            "pearson: series lengths differ ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument(
            "pearson: need at least two points".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("constant series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
