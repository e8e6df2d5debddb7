use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::promptgen::{find_template, GenerationParams, TrainerConfig};
use crate::rulegen::Method;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Stub,
    Http,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default)]
    pub kind: BackendKind,
    /// Endpoint for `http`.
    pub url: Option<String>,
    /// Per-fold endpoints, e.g. one fine-tuned checkpoint per fold.
    #[serde(default)]
    pub fold_urls: Vec<String>,
    /// Input → output table for `stub`.
    pub responses: Option<PathBuf>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> u32 {
    3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Mock,
    Bing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub engine: EngineKind,
    /// Query → per-call lists, for the mock engine.
    pub script: Option<PathBuf>,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub dropout_seed: u64,
    pub endpoint: Option<String>,
    #[serde(default = "default_executions")]
    pub executions: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_rps")]
    pub requests_per_second: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    pub snapshot_dir: Option<PathBuf>,
    #[serde(default)]
    pub strict_urls: bool,
    /// Also score the human target queries.
    #[serde(default)]
    pub target_queries: bool,
    /// Use stored executions instead of calling the engine when the snapshot
    /// store already has enough of them.
    #[serde(default)]
    pub reuse_snapshots: bool,
}

impl SearchConfig {
    pub fn new(engine: EngineKind) -> Self {
        Self {
            engine,
            script: None,
            dropout: 0.0,
            dropout_seed: 0,
            endpoint: None,
            executions: default_executions(),
            k: default_k(),
            requests_per_second: default_rps(),
            retries: default_retries(),
            snapshot_dir: None,
            strict_urls: false,
            target_queries: false,
            reuse_snapshots: false,
        }
    }
}

fn default_executions() -> usize {
    crate::searcheval::DEFAULT_EXECUTIONS
}

fn default_k() -> usize {
    crate::searcheval::DEFAULT_K
}

fn default_rps() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub methods: Vec<Method>,
    /// Same length as `methods`; defaults to standalone FM% order.
    #[serde(default)]
    pub priorities: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub annotations: Option<PathBuf>,
    pub methods: Vec<Method>,
    /// Templates for prompt-based methods; empty means all built-ins.
    #[serde(default)]
    pub templates: Vec<String>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub generation: GenerationParams,
    #[serde(default)]
    pub backend: BackendConfig,
    pub fine_tuned_backend: Option<BackendConfig>,
    pub search: Option<SearchConfig>,
    #[serde(default)]
    pub ensembles: Vec<EnsembleConfig>,
    pub error_labels: Option<PathBuf>,
    /// Directory for few-shot screening progress files.
    pub checkpoint_dir: Option<PathBuf>,
    #[serde(default)]
    pub trainer: TrainerConfig,
}

fn default_folds() -> usize {
    4
}

impl ExperimentConfig {
    pub fn new(dataset: impl Into<PathBuf>, methods: Vec<Method>) -> Self {
        Self {
            dataset: dataset.into(),
            annotations: None,
            methods,
            templates: Vec::new(),
            folds: default_folds(),
            seed: 0,
            generation: GenerationParams::default(),
            backend: BackendConfig::default(),
            fine_tuned_backend: None,
            search: None,
            ensembles: Vec::new(),
            error_labels: None,
            checkpoint_dir: None,
            trainer: TrainerConfig::default(),
        }
    }

    /// Parses a TOML config; relative paths resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset);
        for p in [
            self.annotations.as_mut(),
            self.error_labels.as_mut(),
            self.checkpoint_dir.as_mut(),
            self.backend.responses.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        if let Some(b) = self.fine_tuned_backend.as_mut().and_then(|b| b.responses.as_mut()) {
            fix(b);
        }
        if let Some(s) = self.search.as_mut() {
            for p in [s.script.as_mut(), s.snapshot_dir.as_mut()].into_iter().flatten() {
                fix(p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods configured".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be >= 2".into()));
        }
        for t in &self.templates {
            find_template(t).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.generation.validate()?;
        let needs_ann = self
            .methods
            .iter()
            .any(|m| matches!(m, Method::NamedEntities | Method::NounPhrases));
        if needs_ann && self.annotations.is_none() {
            return Err(Error::Config(
                "named_entities / noun_phrases need an annotations file".into(),
            ));
        }
        for b in std::iter::once(&self.backend).chain(&self.fine_tuned_backend) {
            if b.kind == BackendKind::Http && b.url.is_none() && b.fold_urls.is_empty() {
                return Err(Error::Config("http backend needs url or fold_urls".into()));
            }
            if !b.fold_urls.is_empty() && b.fold_urls.len() != self.folds {
                return Err(Error::Config(format!(
                    "fold_urls has {} entries for {} folds",
                    b.fold_urls.len(),
                    self.folds
                )));
            }
        }
        if let Some(s) = &self.search {
            if s.executions == 0 || s.k == 0 {
                return Err(Error::Config("search executions and k must be >= 1".into()));
            }
            if s.engine == EngineKind::Mock && s.script.is_none() {
                return Err(Error::Config("mock engine needs a script file".into()));
            }
        }
        for e in &self.ensembles {
            if e.methods.is_empty() {
                return Err(Error::Config("ensemble with no methods".into()));
            }
            if let Some(m) = e.methods.iter().find(|m| !self.methods.contains(m)) {
                return Err(Error::Config(format!("ensemble method {m} is not being run")));
            }
            if !e.priorities.is_empty() && e.priorities.len() != e.methods.len() {
                return Err(Error::Config("ensemble priorities must match methods".into()));
            }
            if self.search.is_none() {
                return Err(Error::Config("ensembles need a search engine".into()));
            }
        }
        Ok(())
    }

    /// Templates to sweep for prompt-based methods.
    pub fn template_ids(&self) -> Vec<String> {
        if self.templates.is_empty() {
            crate::promptgen::builtin_templates()
                .into_iter()
                .map(|t| t.template_id)
                .collect()
        } else {
            self.templates.clone()
        }
    }
}
