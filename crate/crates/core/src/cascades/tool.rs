use alloc::string::String;

use super::CascadeError;
use crate::runtime::{DistSpec, FnCascade, DEFAULT_BACKEND};
use crate::tools::{ToolRegistry, CALCULATOR};

/// Question, a proposed tool input, the tool's output, then the answer
/// conditioned on all three. The tool output is recorded under the tool's
/// name.
#[derive(Debug, Clone)]
pub struct ToolProgramBuilder {
    tool: String,
    question: Option<String>,
    temperature: f64,
    backend: String,
}

impl Default for ToolProgramBuilder {
    fn default() -> Self {
        Self { tool: CALCULATOR.into(), question: None, temperature: 1.0, backend: DEFAULT_BACKEND.into() }
    }
}

impl ToolProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tool(mut self, tool: impl Into<String>) -> Self {
        self.tool = tool.into();
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

    /// Fails when `tools` lacks the program's tool.
    pub fn build(self, tools: &ToolRegistry) -> Result<FnCascade, CascadeError> {
        if !tools.contains(&self.tool) {
            return Err(CascadeError::InvalidConfig(alloc::format!("tool `{}` is not registered", self.tool)));
        }
        let s = self;
        Ok(FnCascade::new("tool", move |cx| {
            let dist = || DistSpec::new().backend(s.backend.clone()).temperature(s.temperature);
            let question = match &s.question {
                Some(q) => cx.observe("question", dist(), q.clone())?,
                None => cx.sample("question", dist())?,
            };
            let expression = cx.sample("expression", dist().given("question", question.clone()))?;
            let output = cx.tool(&s.tool, &s.tool, expression.clone())?;
            cx.sample(
                "answer",
                dist().given("question", question).given("expression", expression).given(s.tool.as_str(), output),
            )
        }))
    }
}

pub fn build_tool_program(tools: &ToolRegistry) -> Result<FnCascade, CascadeError> {
    ToolProgramBuilder::new().build(tools)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Env, ForwardHandler};
    use crate::lm::ScriptedLM;
    use crate::runtime::run;
    use alloc::sync::Arc;

    fn env() -> Env {
        Env::new(Arc::new(ScriptedLM::new(|prompt| {
            if prompt.ends_with("Expression: ") {
                "(3*4)-5".into()
            } else if prompt.ends_with("Answer: ") {
                prompt.lines().find_map(|l| l.strip_prefix("Calculator: ")).unwrap_or("?").into()
            } else {
                "What is 3*4-5?".into()
            }
        })))
    }

    #[test]
    fn calculator_output_is_an_observed_zero_cost_record() {
        let env = env();
        let program = build_tool_program(&env.tools).unwrap();
        let trace = run(&program, &mut ForwardHandler::new(&env), 0).unwrap();
        let calc = trace.record("calculator").unwrap();
        assert_eq!(calc.value, "7");
        assert!(calc.observed);
        assert_eq!(calc.log_prob, 0.0);
        assert_eq!(trace.payload(), Some("7"));
    }

    #[test]
    fn tool_outputs_are_identical_across_runs() {
        let env = env();
        let program = build_tool_program(&env.tools).unwrap();
        let a = run(&program, &mut ForwardHandler::new(&env), 1).unwrap();
        let b = run(&program, &mut ForwardHandler::new(&env), 2).unwrap();
        assert_eq!(a.record("calculator"), b.record("calculator"));
    }

    #[test]
    fn unregistered_tool_is_refused() {
        let tools = ToolRegistry::new();
        assert!(ToolProgramBuilder::new().tool("search").build(&tools).is_err());
    }
}
