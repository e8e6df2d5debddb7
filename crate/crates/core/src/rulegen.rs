//! Extractive query generators over precomputed linguistic annotations.
//!
//! Annotations come from an external NLP pipeline as JSON-Lines, one
//! [`LinguisticAnnotation`] per claim, with offsets counted in Unicode scalar
//! values. The loader checks every span against the claim text.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{ClaimRecord, Dataset};
use crate::{Error, Result};

/// Separator between extracted fragments.
pub const JOIN_SEPARATOR: &str = ", ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Verbatim,
    NamedEntities,
    NounPhrases,
    ZeroShot,
    #[serde(rename = "few_shot_1")]
    FewShot1,
    #[serde(rename = "few_shot_2")]
    FewShot2,
    #[serde(rename = "few_shot_3")]
    FewShot3,
    FineTuned,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Verbatim,
        Method::NamedEntities,
        Method::NounPhrases,
        Method::ZeroShot,
        Method::FewShot1,
        Method::FewShot2,
        Method::FewShot3,
        Method::FineTuned,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Verbatim => "verbatim",
            Method::NamedEntities => "named_entities",
            Method::NounPhrases => "noun_phrases",
            Method::ZeroShot => "zero_shot",
            Method::FewShot1 => "few_shot_1",
            Method::FewShot2 => "few_shot_2",
            Method::FewShot3 => "few_shot_3",
            Method::FineTuned => "fine_tuned",
        }
    }

    pub fn is_rule_based(self) -> bool {
        matches!(self, Method::Verbatim | Method::NamedEntities | Method::NounPhrases)
    }

    /// In-context example count for few-shot methods.
    pub fn shots(self) -> Option<usize> {
        match self {
            Method::FewShot1 => Some(1),
            Method::FewShot2 => Some(2),
            Method::FewShot3 => Some(3),
            _ => None,
        }
    }

    pub fn few_shot(shots: usize) -> Option<Method> {
        match shots {
            1 => Some(Method::FewShot1),
            2 => Some(Method::FewShot2),
            3 => Some(Method::FewShot3),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let m = match s {
            "verbatim" => Method::Verbatim,
            "named_entities" | "ne" => Method::NamedEntities,
            "noun_phrases" | "np" => Method::NounPhrases,
            "zero_shot" | "zero-shot" => Method::ZeroShot,
            "few_shot_1" => Method::FewShot1,
            "few_shot_2" => Method::FewShot2,
            "few_shot_3" => Method::FewShot3,
            "fine_tuned" | "fine-tuned" => Method::FineTuned,
            other => return Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        };
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Span {
    pub fn new(start: usize, end: usize, text: impl Into<String>) -> Self {
        Self {
            start,
            end,
            text: text.into(),
            label: None,
        }
    }

    pub fn labeled(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Span for the first occurrence of `needle` in `text`, in char offsets.
    pub fn find(text: &str, needle: &str) -> Option<Self> {
        let byte = text.find(needle)?;
        let start = text[..byte].chars().count();
        Some(Self::new(start, start + needle.chars().count(), needle))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LinguisticAnnotation {
    pub claim_id: String,
    #[serde(default)]
    pub entities: Vec<Span>,
    #[serde(default)]
    pub noun_phrases: Vec<Span>,
    #[serde(default)]
    pub tokens: Vec<Span>,
}

impl LinguisticAnnotation {
    /// Checks span bounds, text-equals-substring, ordering, and that entity
    /// spans do not overlap.
    pub fn validate(&self, claim_text: &str) -> Result<()> {
        let chars: Vec<char> = claim_text.chars().collect();
        let fail = |message: String| Error::Annotation {
            claim_id: self.claim_id.clone(),
            message,
        };
        for (kind, spans) in [
            ("entities", &self.entities),
            ("noun_phrases", &self.noun_phrases),
            ("tokens", &self.tokens),
        ] {
            let mut prev_start = 0;
            for s in spans {
                if s.start >= s.end || s.end > chars.len() {
                    return Err(fail(format!(
                        "{kind}: span [{}, {}) out of range for {} chars",
                        s.start,
                        s.end,
                        chars.len()
                    )));
                }
                let actual: String = chars[s.start..s.end].iter().collect();
                if actual != s.text {
                    return Err(fail(format!(
                        "{kind}: span [{}, {}) text {:?} does not match claim substring {:?}",
                        s.start, s.end, s.text, actual
                    )));
                }
                if s.start < prev_start {
                    return Err(fail(format!("{kind}: spans not sorted by start")));
                }
                prev_start = s.start;
            }
        }
        for pair in self.entities.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(fail(format!(
                    "entities {:?} and {:?} overlap",
                    pair[0].text, pair[1].text
                )));
            }
        }
        Ok(())
    }
}

/// Loads annotations keyed by claim id, validating each against `dataset`.
pub fn load_annotations(path: &Path, dataset: &Dataset) -> Result<HashMap<String, LinguisticAnnotation>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let claims: HashMap<&str, &ClaimRecord> =
        dataset.records.iter().map(|r| (r.claim_id.as_str(), r)).collect();
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let ann: LinguisticAnnotation =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let claim = claims
            .get(ann.claim_id.as_str())
            .ok_or_else(|| parse_err(format!("unknown claim_id {:?}", ann.claim_id)))?;
        ann.validate(&claim.claim_text)
            .map_err(|e| parse_err(e.to_string()))?;
        out.insert(ann.claim_id.clone(), ann);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedQuery {
    pub claim_id: String,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    pub text: String,
    /// The generator produced nothing; kept so every method scores the same
    /// sample set.
    #[serde(default)]
    pub empty: bool,
}

impl GeneratedQuery {
    pub fn new(claim_id: &str, method: Method, template_id: Option<&str>, text: String) -> Self {
        Self {
            claim_id: claim_id.to_string(),
            method,
            template_id: template_id.map(str::to_string),
            empty: text.trim().is_empty(),
            text,
        }
    }
}

pub fn verbatim(claim: &ClaimRecord) -> GeneratedQuery {
    GeneratedQuery::new(&claim.claim_id, Method::Verbatim, None, claim.claim_text.clone())
}

fn join_unique<'a>(spans: impl IntoIterator<Item = &'a Span>) -> String {
    let mut seen = HashSet::new();
    spans
        .into_iter()
        .map(|s| s.text.as_str())
        .filter(|t| seen.insert(*t))
        .collect::<Vec<_>>()
        .join(JOIN_SEPARATOR)
}

fn check_pair(claim: &ClaimRecord, ann: &LinguisticAnnotation) -> Result<()> {
    if ann.claim_id != claim.claim_id {
        return Err(Error::Annotation {
            claim_id: ann.claim_id.clone(),
            message: format!("annotation does not belong to claim {:?}", claim.claim_id),
        });
    }
    Ok(())
}

/// Entity texts in sentence order, exact duplicates dropped.
pub fn named_entities(claim: &ClaimRecord, ann: &LinguisticAnnotation) -> Result<GeneratedQuery> {
    check_pair(claim, ann)?;
    Ok(GeneratedQuery::new(
        &claim.claim_id,
        Method::NamedEntities,
        None,
        join_unique(&ann.entities),
    ))
}

/// Noun-phrase texts in sentence order, exact duplicates dropped.
pub fn noun_phrases(claim: &ClaimRecord, ann: &LinguisticAnnotation) -> Result<GeneratedQuery> {
    check_pair(claim, ann)?;
    Ok(GeneratedQuery::new(
        &claim.claim_id,
        Method::NounPhrases,
        None,
        join_unique(&ann.noun_phrases),
    ))
}

/// Runs a rule-based method; annotation-driven methods need `ann`.
pub fn generate_rule_based(
    method: Method,
    claim: &ClaimRecord,
    ann: Option<&LinguisticAnnotation>,
) -> Result<GeneratedQuery> {
    let need_ann = || {
        ann.ok_or_else(|| Error::Annotation {
            claim_id: claim.claim_id.clone(),
            message: format!("no annotation available for {method}"),
        })
    };
    match method {
        Method::Verbatim => Ok(verbatim(claim)),
        Method::NamedEntities => named_entities(claim, need_ann()?),
        Method::NounPhrases => noun_phrases(claim, need_ann()?),
        other => Err(Error::InvalidArgument(format!("{other} is not rule-based"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const NETANYAHU: &str = "Netanyahu didn't become Israel's longest-serving prime minister by mistake.";

    fn claim(text: &str) -> ClaimRecord {
        ClaimRecord {
            claim_id: "c1".into(),
            article_id: "a1".into(),
            claim_text: text.into(),
            target_query: "q".into(),
            target_url: "https://example.org".into(),
            context_sentences: None,
        }
    }

    fn ann(text: &str, ents: &[&str], nps: &[&str]) -> LinguisticAnnotation {
        let find_all = |needles: &[&str]| {
            let mut from = 0;
            needles
                .iter()
                .map(|n| {
                    let sub: String = text.chars().skip(from).collect();
                    let mut s = Span::find(&sub, n).unwrap();
                    s.start += from;
                    s.end += from;
                    from = s.end;
                    s
                })
                .collect()
        };
        LinguisticAnnotation {
            claim_id: "c1".into(),
            entities: find_all(ents),
            noun_phrases: find_all(nps),
            tokens: vec![],
        }
    }

    #[test]
    fn verbatim_is_identity() {
        assert_eq!(verbatim(&claim(NETANYAHU)).text, NETANYAHU);
        let padded = verbatim(&claim("  padded  "));
        assert_eq!(padded.text, "  padded  ");
        assert!(!padded.empty);
        assert!(verbatim(&claim("")).empty);
    }

    #[test]
    fn entity_and_phrase_rows() {
        let a = ann(
            NETANYAHU,
            &["Netanyahu", "Israel"],
            &["Netanyahu", "Israel's longest-serving prime minister", "mistake"],
        );
        a.validate(NETANYAHU).unwrap();
        let c = claim(NETANYAHU);
        assert_eq!(named_entities(&c, &a).unwrap().text, "Netanyahu, Israel");
        assert_eq!(
            noun_phrases(&c, &a).unwrap().text,
            "Netanyahu, Israel's longest-serving prime minister, mistake"
        );
    }

    #[test]
    fn dedup_keeps_first_occurrence() {
        let text = "Paris is in France, and Paris is big.";
        let a = ann(text, &["Paris", "France", "Paris"], &[]);
        assert_eq!(named_entities(&claim(text), &a).unwrap().text, "Paris, France");
        // case-sensitive: different surface forms both survive
        let text = "PARIS or Paris";
        let a = ann(text, &["PARIS", "Paris"], &[]);
        assert_eq!(named_entities(&claim(text), &a).unwrap().text, "PARIS, Paris");
    }

    #[test]
    fn empty_annotations_flag_empty() {
        let c = claim(NETANYAHU);
        let a = LinguisticAnnotation { claim_id: "c1".into(), ..Default::default() };
        let ne = named_entities(&c, &a).unwrap();
        assert!(ne.empty && ne.text.is_empty());
        assert!(noun_phrases(&c, &a).unwrap().empty);
    }

    #[test]
    fn whole_sentence_phrase() {
        let text = "The big dog";
        let a = ann(text, &[], &[text]);
        assert_eq!(noun_phrases(&claim(text), &a).unwrap().text, text);
    }

    #[test]
    fn mismatched_annotation_rejected() {
        let mut a = ann(NETANYAHU, &["Israel"], &[]);
        a.claim_id = "other".into();
        assert!(named_entities(&claim(NETANYAHU), &a).is_err());
    }

    #[test]
    fn validate_catches_bad_spans() {
        let mut a = ann(NETANYAHU, &["Netanyahu", "Israel"], &[]);
        a.entities[1].text = "Israël".into();
        assert!(a.validate(NETANYAHU).is_err());

        let mut a = ann(NETANYAHU, &["Netanyahu"], &[]);
        a.entities[0].end = 500;
        assert!(a.validate(NETANYAHU).is_err());

        let overlap = LinguisticAnnotation {
            claim_id: "c1".into(),
            entities: vec![Span::new(0, 5, "Netan"), Span::new(3, 9, "anyahu")],
            ..Default::default()
        };
        assert!(overlap.validate(NETANYAHU).is_err());

        let unsorted = LinguisticAnnotation {
            claim_id: "c1".into(),
            noun_phrases: vec![Span::new(67, 74, "mistake"), Span::new(0, 9, "Netanyahu")],
            ..Default::default()
        };
        assert!(unsorted.validate(NETANYAHU).is_err());
    }

    #[test]
    fn offsets_are_scalar_values() {
        let text = "Café Zürich opened";
        let s = Span::find(text, "Zürich").unwrap();
        assert_eq!((s.start, s.end), (5, 11));
        let a = LinguisticAnnotation {
            claim_id: "c1".into(),
            entities: vec![s],
            ..Default::default()
        };
        a.validate(text).unwrap();
    }

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.as_str()));
        }
        assert_eq!("ne".parse::<Method>().unwrap(), Method::NamedEntities);
        assert!("bogus".parse::<Method>().is_err());
    }

    proptest! {
        // every joined fragment is some span's text
        #[test]
        fn output_is_extractive(words in proptest::collection::vec("[A-Za-z]{1,6}", 1..8), pick in proptest::collection::vec(any::<bool>(), 8)) {
            let text = words.join(" ");
            let mut offset = 0;
            let mut spans = Vec::new();
            for (i, w) in words.iter().enumerate() {
                if pick[i] {
                    spans.push(Span::new(offset, offset + w.chars().count(), w.clone()));
                }
                offset += w.chars().count() + 1;
            }
            let a = LinguisticAnnotation { claim_id: "c1".into(), entities: spans.clone(), noun_phrases: spans, tokens: vec![] };
            prop_assert!(a.validate(&text).is_ok());
            let q = named_entities(&claim(&text), &a).unwrap();
            if !q.empty {
                for frag in q.text.split(JOIN_SEPARATOR) {
                    prop_assert!(a.entities.iter().any(|s| s.text == frag));
                }
            }
            prop_assert_eq!(q.clone(), named_entities(&claim(&text), &a).unwrap());
        }
    }
}
