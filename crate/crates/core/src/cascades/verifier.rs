use alloc::string::String;
use alloc::vec::Vec;

use super::{is_yes, CascadeError};
use crate::runtime::{DistSpec, FnCascade, DEFAULT_BACKEND};

/// Step-wise reasoning checked by a verifier after every thought.
///
/// Round `i` samples `thought/i` given the question and the earlier thoughts,
/// observes `verifier/i` as the positive verdict given the thoughts so far,
/// then samples `stop/i` and leaves the loop on "yes". The answer is sampled
/// given the question and every thought.
#[derive(Debug, Clone)]
pub struct VerifierProgramBuilder {
    max_steps: usize,
    positive: String,
    question: Option<String>,
    temperature: f64,
    backend: String,
    verifier_backend: String,
}

impl VerifierProgramBuilder {
    pub fn new(max_steps: usize, positive: impl Into<String>) -> Self {
        Self {
            max_steps,
            positive: positive.into(),
            question: None,
            temperature: 1.0,
            backend: DEFAULT_BACKEND.into(),
            verifier_backend: DEFAULT_BACKEND.into(),
        }
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

    pub fn verifier_backend(mut self, backend: impl Into<String>) -> Self {
        self.verifier_backend = backend.into();
        self
    }

    pub fn build(self) -> Result<FnCascade, CascadeError> {
        if self.max_steps == 0 {
            return Err(CascadeError::InvalidConfig("max_steps must be at least 1".into()));
        }
        let s = self;
        Ok(FnCascade::new("verifier", move |cx| {
            let dist = || DistSpec::new().backend(s.backend.clone()).temperature(s.temperature);
            let question = match &s.question {
                Some(q) => cx.observe("question", dist(), q.clone())?,
                None => cx.sample("question", dist())?,
            };
            let mut thoughts: Vec<String> = Vec::new();
            for i in 0..s.max_steps {
                let mut thought_dist = dist().given("question", question.clone());
                if !thoughts.is_empty() {
                    thought_dist = thought_dist.given("thoughts", thoughts.join("\n"));
                }
                thoughts.push(cx.sample(alloc::format!("thought/{i}"), thought_dist)?);
                let so_far = thoughts.join("\n");
                let verifier_dist = DistSpec::new()
                    .backend(s.verifier_backend.clone())
                    .given("question", question.clone())
                    .given("thoughts", so_far.clone());
                cx.observe(alloc::format!("verifier/{i}"), verifier_dist, s.positive.clone())?;
                let stop = cx.sample(
                    alloc::format!("stop/{i}"),
                    dist().given("question", question.clone()).given("thoughts", so_far),
                )?;
                if is_yes(&stop) {
                    break;
                }
            }
            cx.sample("answer", dist().given("question", question.clone()).given("thoughts", thoughts.join("\n")))
        }))
    }
}

pub fn build_verifier_program(max_steps: usize, positive: impl Into<String>) -> Result<FnCascade, CascadeError> {
    VerifierProgramBuilder::new(max_steps, positive).build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Env, ForwardHandler};
    use crate::lm::ScriptedLM;
    use crate::runtime::run;
    use alloc::sync::Arc;

    fn scripted(stop: &'static str) -> Env {
        Env::new(Arc::new(ScriptedLM::new(move |prompt| {
            if prompt.ends_with("Stop: ") {
                stop.into()
            } else if prompt.ends_with("Verifier: ") {
                "The reasoning is correct.".into()
            } else {
                "step".into()
            }
        })))
    }

    fn names(trace: &crate::runtime::Trace) -> Vec<&str> {
        trace.records.iter().map(|r| r.name.as_str()).collect()
    }

    #[test]
    fn single_step_sequence() {
        let program = VerifierProgramBuilder::new(1, "The reasoning is correct.").question("q").build().unwrap();
        let trace = run(&program, &mut ForwardHandler::new(&scripted("yes")), 0).unwrap();
        assert_eq!(names(&trace), ["question", "thought/0", "verifier/0", "stop/0", "answer"]);
        assert!(trace.records[2].observed);
        assert_eq!(trace.records[2].log_prob, 0.0);
    }

    #[test]
    fn loop_is_bounded_by_max_steps() {
        let program = VerifierProgramBuilder::new(3, "The reasoning is correct.").question("q").build().unwrap();
        let trace = run(&program, &mut ForwardHandler::new(&scripted("no")), 0).unwrap();
        let count = |p: &str| trace.records.iter().filter(|r| r.name.as_str().starts_with(p)).count();
        assert_eq!(count("thought/"), 3);
        assert_eq!(count("verifier/"), 3);
        assert_eq!(count("stop/"), 3);
        assert_eq!(trace.records.last().unwrap().name.as_str(), "answer");
    }

    #[test]
    fn zero_steps_is_a_config_error() {
        assert!(build_verifier_program(0, "ok").is_err());
    }
}
