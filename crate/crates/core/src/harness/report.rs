use serde::{Deserialize, Serialize};

use super::analysis::{CorrelationMatrix, ErrorTally, OverlapTable, SensitivityRow};
use crate::promptgen::{FormatClass, GenerationParams, TrainerConfig};
use crate::searcheval::SearchMetrics;

/// Mean metrics for one cell (or one fold of one cell). Search fields are
/// absent when no engine was configured.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CellAggregates {
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub levenshtein_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fa_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fm_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fo_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mrr: Option<f64>,
}

impl CellAggregates {
    pub fn with_search(mut self, m: Option<SearchMetrics>) -> Self {
        if let Some(m) = m {
            self.fa_pct = Some(m.fa_pct);
            self.fm_pct = Some(m.fm_pct);
            self.fo_pct = Some(m.fo_pct);
            self.mrr = Some(m.mrr);
        }
        self
    }

    pub fn search(&self) -> Option<SearchMetrics> {
        Some(SearchMetrics {
            fa_pct: self.fa_pct?,
            fm_pct: self.fm_pct?,
            fo_pct: self.fo_pct?,
            mrr: self.mrr?,
        })
    }

    pub(crate) fn to_vec(self) -> [Option<f64>; 8] {
        [
            Some(self.rouge1),
            Some(self.rouge2),
            Some(self.rouge_l),
            Some(self.levenshtein_ratio),
            self.fa_pct,
            self.fm_pct,
            self.fo_pct,
            self.mrr,
        ]
    }

    pub(crate) fn from_vec(v: [Option<f64>; 8]) -> Self {
        Self {
            rouge1: v[0].unwrap_or(0.0),
            rouge2: v[1].unwrap_or(0.0),
            rouge_l: v[2].unwrap_or(0.0),
            levenshtein_ratio: v[3].unwrap_or(0.0),
            fa_pct: v[4],
            fm_pct: v[5],
            fo_pct: v[6],
            mrr: v[7],
        }
    }

    /// Field-wise mean; a search field is kept only if every input has it.
    pub fn mean(items: &[CellAggregates]) -> Option<CellAggregates> {
        if items.is_empty() {
            return None;
        }
        let n = items.len() as f64;
        let mut out = [None; 8];
        for (i, slot) in out.iter_mut().enumerate() {
            let vals: Option<Vec<f64>> = items.iter().map(|a| a.to_vec()[i]).collect();
            *slot = vals.map(|v| v.iter().sum::<f64>() / n);
        }
        Some(Self::from_vec(out))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format_class: Option<FormatClass>,
    /// Set when the cell was aborted; aggregates are then absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub per_fold: Vec<CellAggregates>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<CellAggregates>,
    /// claim_ids of the in-context examples chosen in each fold.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub few_shot_examples: Vec<Vec<String>>,
}

impl CellReport {
    pub fn label(&self) -> String {
        match &self.template_id {
            Some(t) => format!("{}/{}", self.method, t),
            None => self.method.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchDetail {
    pub hits: usize,
    pub executions: usize,
    pub ranks: Vec<Option<usize>>,
}

/// One generated query for one test claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetailRow {
    pub fold: usize,
    pub claim_id: String,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    pub query: String,
    pub empty: bool,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub levenshtein_distance: usize,
    pub levenshtein_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchDetail>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRow {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    pub aggregates: CellAggregates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub methods: Vec<String>,
    pub templates: Vec<Option<String>>,
    pub priorities: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub per_fold: Vec<SearchMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<SearchMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub dataset: String,
    pub records: usize,
    pub folds: usize,
    pub fold_test_sizes: Vec<usize>,
    pub seed: u64,
    pub generation: GenerationParams,
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executions: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// How the best template per method is picked.
    pub selection_metric: String,
    /// What one point of the correlation analysis is.
    pub correlation_points: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub header: ReportHeader,
    pub cells: Vec<CellReport>,
    pub best_per_method: Vec<BestRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_queries: Option<SearchMetrics>,
    pub ensembles: Vec<EnsembleReport>,
    pub prompt_sensitivity: Vec<SensitivityRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlations: Option<CorrelationMatrix>,
    pub overlaps: Vec<OverlapTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_labels: Option<ErrorTally>,
    pub trainer: TrainerConfig,
    pub details: Vec<DetailRow>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `report.json` and `report.txt` into `dir`.
    pub fn write(&self, dir: &std::path::Path) -> crate::Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        let json = dir.join("report.json");
        std::fs::write(&json, self.to_json() + "\n").map_err(|e| crate::Error::io(&json, e))?;
        let txt = dir.join("report.txt");
        std::fs::write(&txt, self.render_text()).map_err(|e| crate::Error::io(&txt, e))
    }

    pub fn cell(&self, method: &str, template_id: Option<&str>) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.template_id.as_deref() == template_id)
    }
}
