use serde::{Deserialize, Serialize};

use super::fewshot::InContextExample;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatClass {
    NoPrompt,
    LongExplanation,
    ShortSuffix,
    ShortPrefix,
}

/// Fixed text wrapped around a claim to form a model input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub prefix: Option<String>,
    pub suffix: Option<String>,
    pub format_class: FormatClass,
}

impl PromptTemplate {
    pub fn new(
        template_id: &str,
        prefix: Option<&str>,
        suffix: Option<&str>,
        format_class: FormatClass,
    ) -> Result<Self> {
        let tpl = Self {
            template_id: template_id.to_string(),
            prefix: prefix.map(str::to_string),
            suffix: suffix.map(str::to_string),
            format_class,
        };
        tpl.validate()?;
        Ok(tpl)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = match self.format_class {
            FormatClass::NoPrompt => (false, false),
            FormatClass::LongExplanation => (true, true),
            FormatClass::ShortSuffix => (false, true),
            FormatClass::ShortPrefix => (true, false),
        };
        let has = |p: &Option<String>| p.as_deref().is_some_and(|s| !s.is_empty());
        if (has(&self.prefix), has(&self.suffix)) != expected {
            return Err(Error::InvalidArgument(format!(
                "template {}: prefix/suffix do not fit format class {:?}",
                self.template_id, self.format_class
            )));
        }
        Ok(())
    }
}

/// The thirteen templates: `no-prompt` and `template-01` … `template-12`.
pub fn builtin_templates() -> Vec<PromptTemplate> {
    use FormatClass::*;
    let rows: [(&str, Option<&str>, Option<&str>, FormatClass); 13] = [
        ("no-prompt", None, None, NoPrompt),
        ("template-01", Some("Generate search query:"), Some("Search query:"), LongExplanation),
        ("template-02", Some("Fact-check the following sentence:"), Some("Fact-check:"), LongExplanation),
        ("template-03", Some("Verify the following sentence:"), Some("Verify:"), LongExplanation),
        ("template-04", Some("Summarize the following sentence:"), Some("Summarize:"), LongExplanation),
        ("template-05", None, Some("Search query:"), ShortSuffix),
        ("template-06", None, Some("Fact-Check:"), ShortSuffix),
        ("template-07", None, Some("Verify:"), ShortSuffix),
        ("template-08", None, Some("Summarize:"), ShortSuffix),
        ("template-09", Some("Search query:"), None, ShortPrefix),
        ("template-10", Some("Fact-Check:"), None, ShortPrefix),
        ("template-11", Some("Verify:"), None, ShortPrefix),
        ("template-12", Some("Summarize:"), None, ShortPrefix),
    ];
    rows.into_iter()
        .map(|(id, p, s, class)| PromptTemplate::new(id, p, s, class).expect("builtin template"))
        .collect()
}

pub fn find_template(template_id: &str) -> Result<PromptTemplate> {
    builtin_templates()
        .into_iter()
        .find(|t| t.template_id == template_id)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown template {template_id:?}")))
}

/// `prefix claim suffix`, single-space joined, absent parts omitted.
pub fn render_zero_shot(tpl: &PromptTemplate, claim_text: &str) -> String {
    [tpl.prefix.as_deref(), Some(claim_text), tpl.suffix.as_deref()]
        .into_iter()
        .flatten()
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Solved examples, one per line (`input target_query`), then the task input.
pub fn render_few_shot(
    tpl: &PromptTemplate,
    examples: &[InContextExample],
    claim_text: &str,
) -> Result<String> {
    if examples.is_empty() || examples.len() > 3 {
        return Err(Error::InvalidArgument(format!(
            "few-shot input needs 1 to 3 examples, got {}",
            examples.len()
        )));
    }
    let mut out = String::new();
    for ex in examples {
        out.push_str(&render_zero_shot(tpl, &ex.claim_text));
        out.push(' ');
        out.push_str(&ex.target_query);
        out.push('\n');
    }
    out.push_str(&render_zero_shot(tpl, claim_text));
    Ok(out)
}

fn collapse_spaces(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut prev_space = false;
    for c in s.trim().chars() {
        if c == ' ' {
            if !prev_space {
                out.push(c);
            }
            prev_space = true;
        } else {
            out.push(c);
            prev_space = false;
        }
    }
    out
}

/// Strips verbatim (case-sensitive) copies of the template's prefix and
/// suffix from a model output, then trims and collapses spaces. Partial
/// copies stay.
pub fn postprocess(raw_output: &str, tpl: &PromptTemplate) -> String {
    let parts: Vec<&str> = [tpl.prefix.as_deref(), tpl.suffix.as_deref()]
        .into_iter()
        .flatten()
        .filter(|p| !p.is_empty())
        .collect();
    let mut s = collapse_spaces(raw_output);
    // removal can splice a new occurrence together; repeat to a fixed point
    loop {
        let mut next = s.clone();
        for p in &parts {
            next = next.replace(p, "");
        }
        let next = collapse_spaces(&next);
        if next == s {
            return s;
        }
        s = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GERRY: &str = "Gerry Ford, 63, founded the business in 1997.";

    fn ex(claim: &str, query: &str) -> InContextExample {
        InContextExample {
            claim_text: claim.into(),
            target_query: query.into(),
            source_claim_id: "x".into(),
        }
    }

    #[test]
    fn builtin_rows() {
        let all = builtin_templates();
        assert_eq!(all.len(), 13);
        let t3 = find_template("template-03").unwrap();
        assert_eq!(t3.prefix.as_deref(), Some("Verify the following sentence:"));
        assert_eq!(t3.suffix.as_deref(), Some("Verify:"));
        let none = find_template("no-prompt").unwrap();
        assert_eq!((none.prefix, none.suffix), (None, None));
        let t5 = find_template("template-05").unwrap();
        assert_eq!((t5.prefix.as_deref(), t5.suffix.as_deref()), (None, Some("Search query:")));
        assert!(find_template("template-13").is_err());
    }

    #[test]
    fn format_class_invariant() {
        assert!(PromptTemplate::new("x", Some("a"), None, FormatClass::ShortSuffix).is_err());
        assert!(PromptTemplate::new("x", None, None, FormatClass::LongExplanation).is_err());
        assert!(PromptTemplate::new("x", None, Some("a:"), FormatClass::ShortSuffix).is_ok());
    }

    #[test]
    fn zero_shot_rendering() {
        assert_eq!(
            render_zero_shot(&find_template("template-03").unwrap(), GERRY),
            "Verify the following sentence: Gerry Ford, 63, founded the business in 1997. Verify:"
        );
        assert_eq!(render_zero_shot(&find_template("no-prompt").unwrap(), GERRY), GERRY);
        assert_eq!(
            render_zero_shot(&find_template("template-09").unwrap(), GERRY),
            "Search query: Gerry Ford, 63, founded the business in 1997."
        );
    }

    #[test]
    fn few_shot_rendering() {
        let t5 = find_template("template-05").unwrap();
        assert_eq!(
            render_few_shot(&t5, &[ex("A", "QA")], "B").unwrap(),
            "A Search query: QA\nB Search query:"
        );
        assert!(render_few_shot(&t5, &[], "B").is_err());
        let three = [ex("A", "QA"), ex("C", "QC"), ex("D", "QD")];
        let out = render_few_shot(&t5, &three, "B").unwrap();
        let lines: Vec<_> = out.split('\n').collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[3], "B Search query:");
        assert!(render_few_shot(&t5, &vec![ex("A", "QA"); 4], "B").is_err());
    }

    #[test]
    fn postprocess_examples() {
        let t5 = find_template("template-05").unwrap();
        assert_eq!(
            postprocess("Search query: liz truss trade secretary", &t5),
            "liz truss trade secretary"
        );
        assert_eq!(postprocess("  oecd growth  ", &t5), "oecd growth");
        assert_eq!(postprocess("Search que liz truss", &t5), "Search que liz truss");
        assert_eq!(postprocess("search query: x", &t5), "search query: x");
        assert_eq!(postprocess("Search Search query:query: x", &t5), "x");
    }

    proptest! {
        #[test]
        fn no_prompt_is_identity(c in ".{1,40}") {
            prop_assert_eq!(render_zero_shot(&find_template("no-prompt").unwrap(), &c), c);
        }

        #[test]
        fn postprocess_removes_prompt_text(c in "[A-Za-z :.]{1,40}", idx in 0usize..13) {
            let tpl = &builtin_templates()[idx];
            let out = postprocess(&render_zero_shot(tpl, &c), tpl);
            for p in [&tpl.prefix, &tpl.suffix].into_iter().flatten() {
                prop_assert!(!out.contains(p.as_str()), "{:?} still in {:?}", p, out);
            }
        }

        #[test]
        fn target_claim_is_final_block(k in 1usize..=3, c in "[a-z]{1,10}") {
            let tpl = find_template("template-07").unwrap();
            let exs: Vec<_> = (0..k).map(|i| ex(&format!("E{i}"), &format!("Q{i}"))).collect();
            let out = render_few_shot(&tpl, &exs, &c).unwrap();
            let blocks: Vec<_> = out.split('\n').collect();
            prop_assert_eq!(blocks.len(), k + 1);
            prop_assert_eq!(blocks[k], render_zero_shot(&tpl, &c));
        }
    }
}
