//! Everything a program run needs besides the program itself.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use core::fmt;

use crate::lm::{temper, CompletionRequest, LanguageModel};
use crate::math::ln;
use crate::prompting::FormatterRegistry;
use crate::rng::RunRng;
use crate::runtime::{DistSpec, ExampleSet, Handler, HandlerError, Resolution, RunOptions, Site, VariableName, DEFAULT_BACKEND};
use crate::tools::ToolRegistry;
use rand_core::RngCore;

/// Backends, prompt formatters, tools and few-shot examples for a run.
///
/// A [`DistSpec`] names its backend; names without a registered backend
/// fall back to the `default` one.
#[derive(Clone)]
pub struct Env {
    backends: BTreeMap<String, Arc<dyn LanguageModel>>,
    pub formatters: FormatterRegistry,
    pub tools: ToolRegistry,
    pub examples: ExampleSet,
    pub options: RunOptions,
}

impl fmt::Debug for Env {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Env")
            .field("backends", &self.backends.keys().collect::<alloc::vec::Vec<_>>())
            .field("formatters", &self.formatters)
            .field("tools", &self.tools)
            .field("examples", &self.examples.examples.len())
            .field("options", &self.options)
            .finish()
    }
}

impl Env {
    pub fn new(default_backend: Arc<dyn LanguageModel>) -> Self {
        let mut backends: BTreeMap<String, Arc<dyn LanguageModel>> = BTreeMap::new();
        backends.insert(DEFAULT_BACKEND.to_string(), default_backend);
        Self {
            backends,
            formatters: FormatterRegistry::new(),
            tools: ToolRegistry::new(),
            examples: ExampleSet::default(),
            options: RunOptions::default(),
        }
    }

    pub fn with_backend(mut self, name: impl Into<String>, backend: Arc<dyn LanguageModel>) -> Self {
        self.backends.insert(name.into(), backend);
        self
    }

    pub fn with_examples(mut self, examples: ExampleSet) -> Self {
        self.examples = examples;
        self
    }

    pub fn with_tools(mut self, tools: ToolRegistry) -> Self {
        self.tools = tools;
        self
    }

    pub fn with_options(mut self, options: RunOptions) -> Self {
        self.options = options;
        self
    }

    pub fn backend(&self, name: &str) -> Result<&dyn LanguageModel, HandlerError> {
        self.backends
            .get(name)
            .or_else(|| self.backends.get(DEFAULT_BACKEND))
            .map(|b| &**b)
            .ok_or_else(|| HandlerError::UnknownBackend(name.into()))
    }

    /// True when every registered backend can enumerate its support.
    pub fn is_enumerable(&self) -> bool {
        self.backends.values().all(|b| b.is_enumerable())
    }

    pub fn prompt(&self, name: &VariableName, dist: &DistSpec) -> Result<String, HandlerError> {
        Ok(self.formatters.render(dist, &self.examples, name)?)
    }

    /// Exact completion distribution of a site at its temperature.
    pub fn support(&self, name: &VariableName, dist: &DistSpec) -> Result<alloc::vec::Vec<(String, f64)>, HandlerError> {
        let prompt = self.prompt(name, dist)?;
        let backend = self.backend(&dist.backend)?;
        Ok(temper(&backend.support(&prompt)?, dist.temperature))
    }

    /// Log-probability of `value` at a site. Temperatures other than 1 are
    /// applied exactly for enumerable backends and ignored otherwise.
    pub fn score(&self, name: &VariableName, dist: &DistSpec, value: &str) -> Result<f64, HandlerError> {
        let prompt = self.prompt(name, dist)?;
        let backend = self.backend(&dist.backend)?;
        if dist.temperature != 1.0 && backend.is_enumerable() {
            let support = temper(&backend.support(&prompt)?, dist.temperature);
            return Ok(support.iter().find(|(c, _)| c == value).map_or(f64::NEG_INFINITY, |(_, p)| ln(*p)));
        }
        Ok(backend.logprob(&prompt, value)?)
    }

    pub fn draw(&self, name: &VariableName, dist: &DistSpec, rng: &mut RunRng) -> Result<(String, f64), HandlerError> {
        let prompt = self.prompt(name, dist)?;
        let backend = self.backend(&dist.backend)?;
        let request = CompletionRequest {
            prompt,
            temperature: dist.temperature,
            stop: dist.stop.clone(),
            max_length: dist.max_length,
            rng_seed: rng.next_u64(),
        };
        let result = backend.sample(&request)?;
        Ok((result.text, result.log_prob))
    }

    pub fn call_tool(&self, tool: &str, input: &str) -> Result<String, HandlerError> {
        self.tools.call(tool, input).ok_or_else(|| HandlerError::UnknownTool(tool.into()))
    }
}

/// Ancestral sampling: samples are drawn from their backends, declared
/// observations are recorded with their log-probability and never reject.
pub struct ForwardHandler<'e> {
    env: &'e Env,
}

impl<'e> ForwardHandler<'e> {
    pub fn new(env: &'e Env) -> Self {
        Self { env }
    }
}

impl Handler for ForwardHandler<'_> {
    fn sample(&mut self, site: Site<'_>, rng: &mut RunRng) -> Result<Resolution, HandlerError> {
        let (value, log_prob) = self.env.draw(site.name, site.dist, rng)?;
        Ok(Resolution::Value { value, log_prob, observed: false })
    }

    fn observe(&mut self, site: Site<'_>, value: &str, _rng: &mut RunRng) -> Result<Resolution, HandlerError> {
        let log_prob = self.env.score(site.name, site.dist, value)?;
        Ok(Resolution::Value { value: value.into(), log_prob, observed: true })
    }

    fn tool(&mut self, tool: &str, input: &str) -> Result<String, HandlerError> {
        self.env.call_tool(tool, input)
    }
}
