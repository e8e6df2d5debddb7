use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::backend::{generate, GenerationBackend, GenerationParams};
use super::templates::{postprocess, render_few_shot, PromptTemplate};
use crate::corpus::ClaimRecord;
use crate::par::{self, Mode};
use crate::textmetrics::levenshtein_ratio;
use crate::{Error, Result};

/// A solved claim → query pair shown to the model before the task input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InContextExample {
    pub claim_text: String,
    pub target_query: String,
    pub source_claim_id: String,
}

impl From<&ClaimRecord> for InContextExample {
    fn from(r: &ClaimRecord) -> Self {
        Self {
            claim_text: r.claim_text.clone(),
            target_query: r.target_query.clone(),
            source_claim_id: r.claim_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub claim_id: String,
    /// `None` when a backend call failed and the candidate was dropped.
    pub mean_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotSelection {
    pub examples: Vec<InContextExample>,
    pub scores: Vec<CandidateScore>,
}

#[derive(Debug, Clone, Default)]
pub struct FewShotOptions {
    pub params: GenerationParams,
    pub mode: Mode,
    /// JSONL progress file; finished candidates are skipped on rerun.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointLine {
    train_fingerprint: String,
    template_id: String,
    claim_id: String,
    mean_ratio: Option<f64>,
}

fn fingerprint(train: &[ClaimRecord]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for r in train {
        for b in r.claim_id.bytes().chain(std::iter::once(0)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

fn load_checkpoint(path: &PathBuf, fp: &str, template_id: &str) -> HashMap<String, Option<f64>> {
    let Ok(file) = std::fs::File::open(path) else {
        return HashMap::new();
    };
    BufReader::new(file)
        .lines()
        .map_while(|l| l.ok())
        .filter_map(|l| serde_json::from_str::<CheckpointLine>(&l).ok())
        .filter(|c| c.train_fingerprint == fp && c.template_id == template_id)
        .map(|c| (c.claim_id, c.mean_ratio))
        .collect()
}

/// Mean Levenshtein ratio of one-shot outputs (using `candidate` as the
/// example) against every other training record's target query.
fn score_candidate(
    train: &[ClaimRecord],
    candidate: usize,
    backend: &dyn GenerationBackend,
    tpl: &PromptTemplate,
    params: &GenerationParams,
) -> Result<f64> {
    let example = [InContextExample::from(&train[candidate])];
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, r) in train.iter().enumerate() {
        if i == candidate {
            continue;
        }
        let input = render_few_shot(tpl, &example, &r.claim_text)?;
        let out = postprocess(&generate(backend, &input, params)?, tpl);
        total += levenshtein_ratio(&out, &r.target_query);
        count += 1;
    }
    Ok(total / count as f64)
}

/// Screens every training record as a one-shot example and keeps the three
/// with the highest mean Levenshtein ratio (ties: smaller claim_id first).
///
/// Costs `|train| * (|train| - 1)` backend calls. Candidates whose calls fail
/// are dropped with a warning.
pub fn select_few_shot_examples(
    train: &[ClaimRecord],
    backend: &dyn GenerationBackend,
    tpl: &PromptTemplate,
    opts: &FewShotOptions,
) -> Result<FewShotSelection> {
    if train.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "few-shot screening needs at least 4 training records, got {}",
            train.len()
        )));
    }
    let fp = fingerprint(train);
    let done = opts
        .checkpoint
        .as_ref()
        .map(|p| load_checkpoint(p, &fp, &tpl.template_id))
        .unwrap_or_default();
    let checkpoint_writer = Mutex::new(());

    let scored: Vec<Result<Option<f64>>> = par::map_range(opts.mode, train.len(), |c| {
        let id = &train[c].claim_id;
        if let Some(prev) = done.get(id) {
            return Ok(*prev);
        }
        let mean = match score_candidate(train, c, backend, tpl, &opts.params) {
            Ok(m) => Some(m),
            Err(e @ Error::InvalidArgument(_)) => return Err(e),
            Err(e) => {
                log::warn!("dropping few-shot candidate {id}: {e}");
                None
            }
        };
        if let Some(path) = &opts.checkpoint {
            let line = serde_json::to_string(&CheckpointLine {
                train_fingerprint: fp.clone(),
                template_id: tpl.template_id.clone(),
                claim_id: id.clone(),
                mean_ratio: mean,
            })?;
            let _g = checkpoint_writer.lock().unwrap();
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(mean)
    });

    let mut scores = Vec::with_capacity(train.len());
    for (r, s) in train.iter().zip(scored) {
        scores.push(CandidateScore {
            claim_id: r.claim_id.clone(),
            mean_ratio: s?,
        });
    }
    let mut ranked: Vec<(usize, f64)> = scores
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.mean_ratio.map(|m| (i, m)))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| train[a.0].claim_id.cmp(&train[b.0].claim_id))
    });
    if ranked.len() < 3 {
        return Err(Error::Backend {
            attempts: 1,
            message: format!(
                "only {} of {} few-shot candidates could be scored",
                ranked.len(),
                train.len()
            ),
        });
    }
    let examples = ranked[..3]
        .iter()
        .map(|(i, _)| InContextExample::from(&train[*i]))
        .collect();
    Ok(FewShotSelection { examples, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::promptgen::{find_template, Generation, StubBackend};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn rec(id: &str, claim: &str, query: &str) -> ClaimRecord {
        ClaimRecord {
            claim_id: id.into(),
            article_id: id.into(),
            claim_text: claim.into(),
            target_query: query.into(),
            target_url: "https://example.org".into(),
            context_sentences: None,
        }
    }

    /// Answers every input with the same string, so all candidates tie.
    struct Constant(AtomicUsize);

    impl GenerationBackend for Constant {
        fn id(&self) -> &str {
            "constant"
        }
        fn generate(&self, _: &str, _: &GenerationParams) -> Result<Generation> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(Generation { output: "same".into(), token_count: 1 })
        }
    }

    #[test]
    fn needs_four_records() {
        let train: Vec<_> = (0..3).map(|i| rec(&i.to_string(), "c", "q")).collect();
        let tpl = find_template("template-05").unwrap();
        assert!(select_few_shot_examples(&train, &StubBackend::default(), &tpl, &FewShotOptions::default()).is_err());
    }

    #[test]
    fn ties_break_on_claim_id() {
        let train = vec![
            rec("d", "c1", "same"),
            rec("b", "c2", "same"),
            rec("c", "c3", "same"),
            rec("a", "c4", "same"),
        ];
        let tpl = find_template("template-05").unwrap();
        let backend = Constant(AtomicUsize::new(0));
        let sel = select_few_shot_examples(&train, &backend, &tpl, &FewShotOptions::default()).unwrap();
        let ids: Vec<_> = sel.examples.iter().map(|e| e.source_claim_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(backend.0.load(Ordering::SeqCst), 12);
    }

    #[test]
    fn checkpoint_resumes() {
        let train: Vec<_> = (0..5).map(|i| rec(&format!("r{i}"), &format!("claim {i}"), "q")).collect();
        let tpl = find_template("template-05").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let opts = FewShotOptions {
            checkpoint: Some(dir.path().join("ck.jsonl")),
            ..Default::default()
        };
        let first = Constant(AtomicUsize::new(0));
        let a = select_few_shot_examples(&train, &first, &tpl, &opts).unwrap();
        assert_eq!(first.0.load(Ordering::SeqCst), 20);
        let second = Constant(AtomicUsize::new(0));
        let b = select_few_shot_examples(&train, &second, &tpl, &opts).unwrap();
        assert_eq!(second.0.load(Ordering::SeqCst), 0);
        assert_eq!(a, b);
        // a different template does not reuse the progress
        let t7 = find_template("template-07").unwrap();
        let third = Constant(AtomicUsize::new(0));
        select_few_shot_examples(&train, &third, &t7, &opts).unwrap();
        assert_eq!(third.0.load(Ordering::SeqCst), 20);
    }

    /// Fails whenever the in-context example is the record `bad`.
    struct FailsOn(&'static str);

    impl GenerationBackend for FailsOn {
        fn id(&self) -> &str {
            "fails"
        }
        fn generate(&self, input: &str, _: &GenerationParams) -> Result<Generation> {
            if input.starts_with(self.0) {
                return Err(Error::Backend { attempts: 3, message: "timeout".into() });
            }
            Ok(Generation { output: "q".into(), token_count: 1 })
        }
    }

    #[test]
    fn failing_candidate_is_dropped() {
        let train: Vec<_> = (0..5).map(|i| rec(&format!("r{i}"), &format!("claim{i}"), "q")).collect();
        let tpl = find_template("template-05").unwrap();
        let sel = select_few_shot_examples(&train, &FailsOn("claim0"), &tpl, &FewShotOptions::default()).unwrap();
        assert_eq!(sel.scores[0].mean_ratio, None);
        let ids: Vec<_> = sel.examples.iter().map(|e| e.source_claim_id.as_str()).collect();
        assert_eq!(ids, ["r1", "r2", "r3"]);
    }
}
