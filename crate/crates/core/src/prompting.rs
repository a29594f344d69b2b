//! Prompt rendering and answer bucketing.
//!
//! The default format writes one `Title: value` line per field. Few-shot
//! examples come first, separated by blank lines, followed by the current
//! conditioning and a final `Target: ` line for the backend to complete:
//!
//! ```text
//! Question: 1+1?
//! Thought: one and one
//! Answer: 2
//!
//! Question: 2+2?
//! Thought: 
//! ```

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::runtime::{strip_loop_suffix, DistSpec, ExampleSet, VariableName};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("no formatter registered under `{0}`")]
    UnknownFormatter(String),
    #[error("target `{0}` is already part of the conditioning")]
    TargetConditioned(String),
    #[error("formatter `{formatter}` needs conditioning field `{field}`")]
    MissingField { formatter: String, field: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FormatterKind {
    Default,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FormatterId {
    pub id: String,
    pub kind: FormatterKind,
}

impl FormatterId {
    pub fn custom(id: impl Into<String>) -> Self {
        Self { id: id.into(), kind: FormatterKind::Custom }
    }

    pub fn is_default(&self) -> bool {
        self.kind == FormatterKind::Default
    }
}

impl Default for FormatterId {
    fn default() -> Self {
        Self { id: "default".into(), kind: FormatterKind::Default }
    }
}

/// Passes `conditioning["prompt"]` through verbatim.
pub const RAW: &str = "raw";
pub const PROMPT_SELECTION: &str = "prompt_selection";
pub const PROMPT_INFERENCE: &str = "prompt_inference";

type FormatFn = dyn Fn(&[(String, String)], &ExampleSet, &VariableName) -> Result<String, PromptError> + Send + Sync;

/// Custom prompt formatters, keyed by id.
///
/// `raw`, `prompt_selection` and `prompt_inference` are always registered.
#[derive(Clone)]
pub struct FormatterRegistry {
    custom: BTreeMap<String, Arc<FormatFn>>,
}

impl fmt::Debug for FormatterRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.custom.keys()).finish()
    }
}

impl Default for FormatterRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl FormatterRegistry {
    pub fn new() -> Self {
        let mut registry = Self { custom: BTreeMap::new() };
        registry.register(RAW, |cond, _, _| {
            field(cond, RAW, "prompt").map(ToString::to_string)
        });
        registry.register(PROMPT_SELECTION, |cond, _, _| {
            let facts = field(cond, PROMPT_SELECTION, "facts")?;
            let question = field(cond, PROMPT_SELECTION, "question")?;
            let selected = cond.iter().find(|(k, _)| k == "selected").map(|(_, v)| v.as_str()).unwrap_or("");
            Ok(prompt_selection(&list_items(facts), question, &list_items(selected)))
        });
        registry.register(PROMPT_INFERENCE, |cond, _, _| {
            let facts = field(cond, PROMPT_INFERENCE, "facts")?;
            let deduction = cond.iter().find(|(k, _)| k == "deduction").map(|(_, v)| v.as_str()).unwrap_or("");
            Ok(prompt_inference(&list_items(facts), deduction))
        });
        registry
    }

    /// Registers a custom formatter. Registration is a startup step; do it
    /// before the registry is shared with running engines.
    pub fn register(
        &mut self,
        id: impl Into<String>,
        f: impl Fn(&[(String, String)], &ExampleSet, &VariableName) -> Result<String, PromptError> + Send + Sync + 'static,
    ) {
        self.custom.insert(id.into(), Arc::new(f));
    }

    pub fn contains(&self, id: &str) -> bool {
        self.custom.contains_key(id)
    }

    pub fn render(&self, spec: &DistSpec, examples: &ExampleSet, target: &VariableName) -> Result<String, PromptError> {
        if spec.conditioning.iter().any(|(k, _)| k == target.as_str()) {
            return Err(PromptError::TargetConditioned(target.to_string()));
        }
        match spec.formatter.kind {
            FormatterKind::Default => Ok(render_default(&spec.conditioning, examples, target)),
            FormatterKind::Custom => {
                let f = self
                    .custom
                    .get(&spec.formatter.id)
                    .ok_or_else(|| PromptError::UnknownFormatter(spec.formatter.id.clone()))?;
                f(&spec.conditioning, examples, target)
            }
        }
    }
}

fn field<'a>(cond: &'a [(String, String)], formatter: &str, name: &str) -> Result<&'a str, PromptError> {
    cond.iter()
        .find(|(k, _)| k == name)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| PromptError::MissingField { formatter: formatter.into(), field: name.into() })
}

/// Renders the prompt for `target` using the built-in formatters only.
pub fn render_prompt(spec: &DistSpec, examples: &ExampleSet, target: &VariableName) -> Result<String, PromptError> {
    FormatterRegistry::new().render(spec, examples, target)
}

/// `thought/2` -> `Thought`, `global_poverty` -> `Global poverty`.
pub fn field_title(name: &str) -> String {
    let base = strip_loop_suffix(name).replace('_', " ");
    let mut chars = base.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Removes blank lines, which the default format reserves as the example separator.
pub fn escape_value(value: &str) -> String {
    if !value.contains('\n') {
        return value.to_string();
    }
    let lines: Vec<&str> = value.split('\n').filter(|line| !line.trim().is_empty()).collect();
    lines.join("\n")
}

fn render_default(conditioning: &[(String, String)], examples: &ExampleSet, target: &VariableName) -> String {
    let target_base = target.base();
    let mut out = String::new();

    for example in &examples.examples {
        // conditioning order, then the target, then whatever else the example carries
        let mut order: Vec<&str> = conditioning.iter().map(|(k, _)| strip_loop_suffix(k)).collect();
        order.push(target_base);
        for (k, _) in example.fields() {
            if !order.contains(&k.as_str()) {
                order.push(k);
            }
        }
        let mut lines = Vec::new();
        for key in order {
            if let Some(value) = example.get(key) {
                lines.push(alloc::format!("{}: {}", field_title(key), escape_value(value)));
            }
        }
        if lines.is_empty() {
            continue;
        }
        out.push_str(&lines.join("\n"));
        out.push_str("\n\n");
    }

    for (k, v) in conditioning {
        out.push_str(&field_title(k));
        out.push_str(": ");
        out.push_str(&escape_value(v));
        out.push('\n');
    }
    out.push_str(&field_title(target.as_str()));
    out.push_str(": ");
    out
}

fn list_items(text: &str) -> Vec<&str> {
    text.lines()
        .map(|line| line.trim())
        .map(|line| line.strip_prefix("- ").unwrap_or(line))
        .filter(|line| !line.is_empty())
        .collect()
}

/// Fact-selection prompt for selection-inference cascades.
pub fn prompt_selection(facts: &[&str], question: &str, selected: &[&str]) -> String {
    let facts = facts.join("\n- ");
    let mut selected_text = String::new();
    for s in selected {
        selected_text.push_str("\n- ");
        selected_text.push_str(s);
    }
    alloc::format!(
        "Below are a series of facts together with a question.\n  Choose the set of facts which allow deducing the correct answer:\nFacts:\n- {facts}\n\nQuestion: {question}\n\nSelected:\n{selected_text}"
    )
}

/// Single-step deduction prompt for selection-inference cascades.
pub fn prompt_inference(facts: &[&str], deduction: &str) -> String {
    let facts = facts.join("\n- ");
    alloc::format!("Below are a set of facts, together with a deduction based on them:\nFacts:\n- {facts}\n\nTherefore: {deduction}")
}

/// Normalized answer used to bucket samples.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BucketKey(pub String);

impl BucketKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BucketKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lowercases, collapses whitespace and strips a single trailing period.
///
/// The period is only removed when that leaves text not ending in another
/// period, which keeps the function idempotent (`"a.."` stays `"a.."`).
pub fn normalize_answer(raw: &str) -> BucketKey {
    let lowered = raw.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    if let Some(stripped) = collapsed.strip_suffix('.') {
        let stripped = stripped.trim_end();
        if !stripped.ends_with('.') {
            return BucketKey(stripped.to_string());
        }
    }
    BucketKey(collapsed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::Example;
    use proptest::prelude::*;

    fn var(s: &str) -> VariableName {
        VariableName::new(s).unwrap()
    }

    #[test]
    fn renders_bare_conditioning() {
        let spec = DistSpec::new().given("question", "2+2?");
        let prompt = render_prompt(&spec, &ExampleSet::default(), &var("thought")).unwrap();
        assert_eq!(prompt, "Question: 2+2?\nThought: ");
    }

    #[test]
    fn renders_few_shot_examples_first() {
        let examples = ExampleSet::new(alloc::vec![Example::new([
            ("question", "1+1?"),
            ("thought", "one and one"),
            ("answer", "2"),
        ])
        .unwrap()]);
        let spec = DistSpec::new().given("question", "2+2?");
        let prompt = render_prompt(&spec, &examples, &var("thought")).unwrap();
        assert_eq!(prompt, "Question: 1+1?\nThought: one and one\nAnswer: 2\n\nQuestion: 2+2?\nThought: ");
    }

    #[test]
    fn titles_strip_loop_suffix_and_underscores() {
        assert_eq!(field_title("thought/3"), "Thought");
        assert_eq!(field_title("global_poverty"), "Global poverty");
        let spec = DistSpec::new().given("question", "q");
        let prompt = render_prompt(&spec, &ExampleSet::default(), &var("thought/0")).unwrap();
        assert_eq!(prompt, "Question: q\nThought: ");
    }

    #[test]
    fn blank_lines_in_values_are_escaped() {
        let spec = DistSpec::new().given("question", "a\n\nb\n \nc");
        let prompt = render_prompt(&spec, &ExampleSet::default(), &var("answer")).unwrap();
        assert_eq!(prompt, "Question: a\nb\nc\nAnswer: ");
    }

    #[test]
    fn selection_prompt_matches_template() {
        let spec = DistSpec::new()
            .given("facts", "f1\nf2")
            .given("question", "q")
            .formatter(FormatterId::custom(PROMPT_SELECTION));
        let prompt = render_prompt(&spec, &ExampleSet::default(), &var("selection/0")).unwrap();
        assert!(prompt.starts_with("Below are a series of facts together with a question."));
        assert!(prompt.contains("Choose the set of facts"));
        assert_eq!(
            prompt,
            "Below are a series of facts together with a question.\n  Choose the set of facts which allow deducing the correct answer:\nFacts:\n- f1\n- f2\n\nQuestion: q\n\nSelected:\n"
        );
    }

    #[test]
    fn inference_prompt_matches_template() {
        let spec = DistSpec::new().given("facts", "- f1").formatter(FormatterId::custom(PROMPT_INFERENCE));
        let prompt = render_prompt(&spec, &ExampleSet::default(), &var("inference/0")).unwrap();
        assert_eq!(prompt, "Below are a set of facts, together with a deduction based on them:\nFacts:\n- f1\n\nTherefore: ");
    }

    #[test]
    fn unknown_custom_formatter_is_an_error() {
        let spec = DistSpec::new().formatter(FormatterId::custom("nope"));
        assert_eq!(
            render_prompt(&spec, &ExampleSet::default(), &var("x")),
            Err(PromptError::UnknownFormatter("nope".into()))
        );
    }

    #[test]
    fn target_in_conditioning_is_an_error() {
        let spec = DistSpec::new().given("answer", "4");
        assert!(matches!(
            render_prompt(&spec, &ExampleSet::default(), &var("answer")),
            Err(PromptError::TargetConditioned(_))
        ));
    }

    #[test]
    fn custom_formatters_get_all_inputs() {
        let mut registry = FormatterRegistry::new();
        registry.register("shout", |cond, examples, target| {
            Ok(alloc::format!("{}|{}|{}", cond.len(), examples.examples.len(), target))
        });
        let spec = DistSpec::new().given("a", "1").formatter(FormatterId::custom("shout"));
        assert_eq!(registry.render(&spec, &ExampleSet::default(), &var("b")).unwrap(), "1|0|b");
    }

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize_answer("  The Answer. ").as_str(), "the answer");
        assert_eq!(normalize_answer("4").as_str(), "4");
        assert_eq!(normalize_answer("4."), normalize_answer("4"));
        assert_eq!(normalize_answer("").as_str(), "");
        assert_eq!(normalize_answer("a..").as_str(), "a..");
        assert_eq!(normalize_answer("x   y\tz").as_str(), "x y z");
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "[ -~\t\n]{0,24}") {
            let once = normalize_answer(&s);
            prop_assert_eq!(normalize_answer(once.as_str()), once);
        }

        #[test]
        fn rendering_is_pure(q in "[ -~\n]{0,20}") {
            let spec = DistSpec::new().given("question", q);
            let a = render_prompt(&spec, &ExampleSet::default(), &var("answer")).unwrap();
            let b = render_prompt(&spec, &ExampleSet::default(), &var("answer")).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn distinct_values_render_distinctly(a in "[ -~\n]{0,16}", b in "[ -~\n]{0,16}") {
            let ex = ExampleSet::new(alloc::vec![Example::new([("question", "q"), ("answer", "r")]).unwrap()]);
            let pa = render_prompt(&DistSpec::new().given("question", a.clone()), &ex, &var("answer")).unwrap();
            let pb = render_prompt(&DistSpec::new().given("question", b.clone()), &ex, &var("answer")).unwrap();
            prop_assert_eq!(pa == pb, escape_value(&a) == escape_value(&b));
        }
    }
}
