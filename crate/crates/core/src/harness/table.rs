//! Plain-text rendering of a report.

use std::fmt::Write as _;

use super::report::{CellAggregates, ExperimentReport};
use crate::searcheval::SearchMetrics;

fn render(title: &str, headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = format!("{title}\n");
    out.push_str(&line(&mut headers.iter().copied()));
    out.push('\n');
    let total: usize = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for row in rows {
        out.push_str(&line(&mut row.iter().map(String::as_str)));
        out.push('\n');
    }
    out.push('\n');
    out
}

fn f3(x: f64) -> String {
    format!("{x:.3}")
}

fn f1(x: f64) -> String {
    format!("{x:.1}")
}

fn opt(x: Option<f64>, fmt: fn(f64) -> String) -> String {
    x.map_or_else(|| "-".to_string(), fmt)
}

fn agg_cells(a: &CellAggregates) -> Vec<String> {
    vec![
        f3(a.rouge1),
        f3(a.rouge2),
        f3(a.rouge_l),
        opt(a.fa_pct, f1),
        opt(a.fm_pct, f1),
        opt(a.fo_pct, f1),
        opt(a.mrr, f3),
    ]
}

fn search_cells(m: &SearchMetrics) -> Vec<String> {
    vec![f1(m.fa_pct), f1(m.fm_pct), f1(m.fo_pct), f3(m.mrr)]
}

const AGG_HEADERS: [&str; 7] = ["R-1", "R-2", "R-L", "FA%", "FM%", "FO%", "MRR"];

impl ExperimentReport {
    pub fn render_text(&self) -> String {
        let h = &self.header;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "dataset {} ({} claims), {} folds (test sizes {:?}), seed {}",
            h.dataset, h.records, h.folds, h.fold_test_sizes, h.seed
        );
        let _ = writeln!(out, "backend {}", h.backend);
        if let (Some(e), Some(n), Some(k)) = (&h.engine, h.executions, h.k) {
            let _ = writeln!(out, "engine {e}, {n} executions, top {k}");
        }
        let _ = writeln!(out, "best template chosen by {}", h.selection_metric);
        out.push('\n');

        let mut headers = vec!["Method", "Template"];
        headers.extend(AGG_HEADERS);
        let rows: Vec<Vec<String>> = self
            .best_per_method
            .iter()
            .map(|b| {
                let mut r = vec![b.method.clone(), b.template_id.clone().unwrap_or_else(|| "-".into())];
                r.extend(agg_cells(&b.aggregates));
                r
            })
            .collect();
        out.push_str(&render("Best template per method", &headers, &rows));

        let rows: Vec<Vec<String>> = self
            .cells
            .iter()
            .map(|c| {
                let mut r = vec![c.method.clone(), c.template_id.clone().unwrap_or_else(|| "-".into())];
                match (&c.mean, &c.error) {
                    (Some(m), _) => r.extend(agg_cells(m)),
                    (None, Some(e)) => r.push(format!("error: {e}")),
                    (None, None) => {}
                }
                r
            })
            .collect();
        out.push_str(&render("All cells (mean over folds)", &headers, &rows));

        if let Some(t) = &self.target_queries {
            let mut r = vec!["target queries".to_string()];
            r.extend(search_cells(t));
            out.push_str(&render("Target queries", &["", "FA%", "FM%", "FO%", "MRR"], &[r]));
        }

        if !self.ensembles.is_empty() {
            let rows: Vec<Vec<String>> = self
                .ensembles
                .iter()
                .map(|e| {
                    let mut r = vec![e.methods.join(" + ")];
                    match (&e.mean, &e.error) {
                        (Some(m), _) => r.extend(search_cells(m)),
                        (None, Some(err)) => r.push(format!("error: {err}")),
                        (None, None) => {}
                    }
                    r
                })
                .collect();
            out.push_str(&render("Ensembles (Borda)", &["Methods", "FA%", "FM%", "FO%", "MRR"], &rows));
        }

        if let Some(c) = &self.correlations {
            let rows: Vec<Vec<String>> = c
                .rows
                .iter()
                .zip(&c.values)
                .map(|(name, vals)| {
                    let mut r = vec![name.clone()];
                    r.extend(vals.iter().map(|v| opt(*v, f3)));
                    r
                })
                .collect();
            let mut headers = vec![""];
            headers.extend(c.columns.iter().map(String::as_str));
            let title = format!("Pearson correlation over {} cells", c.points.len());
            out.push_str(&render(&title, &headers, &rows));
        }

        if !self.prompt_sensitivity.is_empty() {
            let rows: Vec<Vec<String>> = self
                .prompt_sensitivity
                .iter()
                .map(|s| {
                    let name = if s.excludes_weak_prompts {
                        format!("{}*", s.method)
                    } else {
                        s.method.clone()
                    };
                    let mut r = vec![name, s.templates.len().to_string()];
                    let se = s.std_error.map(|e| e.to_vec());
                    for (i, m) in s.mean.to_vec().iter().enumerate() {
                        if i == 3 {
                            continue; // levenshtein ratio
                        }
                        let fmt = if (4..7).contains(&i) { f1 } else { f3 };
                        let e = se.and_then(|v| v[i]);
                        r.push(match (m, e) {
                            (Some(m), Some(e)) => format!("{} ({})", fmt(*m), fmt(e)),
                            (Some(m), None) => fmt(*m),
                            (None, _) => "-".into(),
                        });
                    }
                    r
                })
                .collect();
            let mut headers = vec!["Method", "n"];
            headers.extend(AGG_HEADERS);
            out.push_str(&render(
                "Prompt sensitivity: mean (standard error); * excludes no-prompt and short-prefix",
                &headers,
                &rows,
            ));
        }

        for o in &self.overlaps {
            let rows = vec![
                vec![format!("{} found", o.b), o.both.to_string(), o.b_only.to_string(), o.b_found.to_string()],
                vec![
                    format!("{} missed", o.b),
                    o.a_only.to_string(),
                    o.neither.to_string(),
                    (o.total - o.b_found).to_string(),
                ],
                vec![
                    "total".into(),
                    o.a_found.to_string(),
                    (o.total - o.a_found).to_string(),
                    o.total.to_string(),
                ],
            ];
            let a_found = format!("{} found", o.a);
            let a_missed = format!("{} missed", o.a);
            out.push_str(&render(
                &format!("Overlap {} vs {} ({:?})", o.a, o.b, o.rule),
                &["", &a_found, &a_missed, "total"],
                &rows,
            ));
        }

        if let Some(t) = &self.error_labels {
            let rows: Vec<Vec<String>> = t
                .counts
                .iter()
                .map(|(c, n)| {
                    let pct = if t.total == 0 { 0.0 } else { 100.0 * *n as f64 / t.total as f64 };
                    vec![
                        serde_json::to_value(c).unwrap().as_str().unwrap().to_string(),
                        n.to_string(),
                        f1(pct),
                    ]
                })
                .collect();
            out.push_str(&render("Error labels", &["Category", "Count", "%"], &rows));
        }
        out
    }
}
