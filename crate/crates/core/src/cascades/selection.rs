use alloc::string::String;
use alloc::vec::Vec;

use super::{is_yes, CascadeError};
use crate::prompting::{FormatterId, PROMPT_INFERENCE, PROMPT_SELECTION};
use crate::runtime::{DistSpec, FnCascade, Stop, DEFAULT_BACKEND};

fn bullet_list(items: &[String]) -> String {
    items.iter().map(|s| alloc::format!("- {s}")).collect::<Vec<_>>().join("\n")
}

/// Alternating fact selection and single-step deduction.
///
/// Facts are newline-separated. Each round selects a subset of the facts
/// and earlier deductions, deduces one new fact from the selection, and
/// asks whether to stop.
#[derive(Debug, Clone)]
pub struct SelectionInferenceBuilder {
    max_steps: usize,
    facts: Option<String>,
    question: Option<String>,
    temperature: f64,
    backend: String,
}

impl SelectionInferenceBuilder {
    pub fn new(max_steps: usize) -> Self {
        Self { max_steps, facts: None, question: None, temperature: 1.0, backend: DEFAULT_BACKEND.into() }
    }

    pub fn facts(mut self, facts: impl Into<String>) -> Self {
        self.facts = Some(facts.into());
        self
    }

    pub fn question(mut self, question: impl Into<String>) -> Self {
        self.question = Some(question.into());
        self
    }

    pub fn temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn backend(mut self, backend: impl Into<String>) -> Self {
        self.backend = backend.into();
        self
    }

    pub fn build(self) -> Result<FnCascade, CascadeError> {
        if self.max_steps == 0 {
            return Err(CascadeError::InvalidConfig("max_steps must be at least 1".into()));
        }
        let s = self;
        Ok(FnCascade::new("selection_inference", move |cx| {
            let dist = || DistSpec::new().backend(s.backend.clone()).temperature(s.temperature);
            let facts = match &s.facts {
                Some(f) => cx.observe("facts", dist(), f.clone())?,
                None => cx.sample("facts", dist().stop(Stop::Delimiter("\n\n".into())))?,
            };
            let question_dist = dist().given("facts", facts.clone());
            let question = match &s.question {
                Some(q) => cx.observe("question", question_dist, q.clone())?,
                None => cx.sample("question", question_dist)?,
            };
            let facts: Vec<String> =
                facts.lines().map(str::trim).filter(|l| !l.is_empty()).map(|l| l.trim_start_matches("- ").into()).collect();
            let mut deductions: Vec<String> = Vec::new();
            for i in 0..s.max_steps {
                let known: Vec<String> = facts.iter().chain(&deductions).cloned().collect();
                let selection = cx.sample(
                    alloc::format!("selection/{i}"),
                    dist()
                        .formatter(FormatterId::custom(PROMPT_SELECTION))
                        .given("facts", bullet_list(&known))
                        .given("question", question.clone())
                        .stop(Stop::Delimiter("\n\n".into())),
                )?;
                let deduction = cx.sample(
                    alloc::format!("inference/{i}"),
                    dist().formatter(FormatterId::custom(PROMPT_INFERENCE)).given("facts", selection),
                )?;
                deductions.push(deduction);
                let stop = cx.sample(
                    alloc::format!("stop/{i}"),
                    dist().given("question", question.clone()).given("deductions", deductions.join("\n")),
                )?;
                if is_yes(&stop) {
                    break;
                }
            }
            cx.sample("answer", dist().given("question", question.clone()).given("deductions", deductions.join("\n")))
        }))
    }
}

pub fn build_selection_inference_program(max_steps: usize) -> Result<FnCascade, CascadeError> {
    SelectionInferenceBuilder::new(max_steps).build()
}
