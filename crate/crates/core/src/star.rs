//! Self-taught reasoning as stochastic EM.
//!
//! The E-step imputes a thought for every labeled (question, answer) pair by
//! sampling question-thought-answer chains until one reaches the label,
//! falling back to a thought sampled with the answer in view. The M-step
//! refits the n-gram backend on the accepted triples.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use thiserror::Error;

use crate::cascades::{CascadeError, ChainBuilder, ChainVariant};
use crate::env::Env;
use crate::inference::forward_run;
use crate::lm::{LmError, NGramLM};
use crate::prompting::normalize_answer;
use crate::rng::{mix64, rng_from_seed};
use crate::runtime::{DistSpec, HandlerError, RunError, VariableName, DEFAULT_BACKEND};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPair {
    pub question: String,
    pub answer: String,
}

impl LabeledPair {
    pub fn new(question: impl Into<String>, answer: impl Into<String>) -> Result<Self, StarError> {
        let (question, answer) = (question.into(), answer.into());
        if question.trim().is_empty() || answer.trim().is_empty() {
            return Err(StarError::InvalidConfig("labeled pairs need a question and an answer".into()));
        }
        Ok(Self { question, answer })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripleSource {
    Sampled,
    Rationalized,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcceptedTriple {
    pub question: String,
    pub thought: String,
    pub answer: String,
    pub source: TripleSource,
}

impl AcceptedTriple {
    /// The training text the M-step counts.
    pub fn render(&self) -> String {
        alloc::format!("Question: {}\nThought: {}\nAnswer: {}\n", self.question, self.thought, self.answer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarConfig {
    /// Forward attempts per pair before rationalizing.
    pub budget: usize,
    /// Sampling temperature for imputation.
    pub temperature: f64,
}

impl Default for StarConfig {
    fn default() -> Self {
        Self { budget: 8, temperature: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StarError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("the M-step needs at least one accepted triple")]
    NoTriples,
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Handler(#[from] HandlerError),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EStepReport {
    pub triples: Vec<AcceptedTriple>,
    /// Indices of pairs for which no thought was accepted.
    pub skipped: Vec<usize>,
    /// Forward chains sampled in total.
    pub forward_attempts: usize,
    pub rationalization_attempts: usize,
    /// Rationalization prompts the backend had no entry for.
    pub rationalization_unknown: usize,
}

impl EStepReport {
    pub fn count(&self, source: TripleSource) -> usize {
        self.triples.iter().filter(|t| t.source == source).count()
    }
}

fn matches_label(answer: &str, label: &str) -> bool {
    normalize_answer(answer) == normalize_answer(label)
}

fn var(name: &str) -> VariableName {
    VariableName::new(name).expect("static names are non-empty")
}

/// Thought sampled with both the question and the true answer in the prompt.
fn rationalize(pair: &LabeledPair, env: &Env, temperature: f64, seed: u64) -> Result<String, HandlerError> {
    let dist = DistSpec::new().given("question", pair.question.clone()).given("answer", pair.answer.clone()).temperature(temperature);
    Ok(env.draw(&var("thought"), &dist, &mut rng_from_seed(seed))?.0)
}

/// Greedy answer for a question and thought.
fn greedy_answer(question: &str, thought: &str, env: &Env) -> Result<String, HandlerError> {
    let dist = DistSpec::new().given("question", question).given("thought", thought).temperature(0.0);
    Ok(env.draw(&var("answer"), &dist, &mut rng_from_seed(0))?.0)
}

pub fn e_step(pairs: &[LabeledPair], env: &Env, config: &StarConfig, seed: u64) -> Result<EStepReport, StarError> {
    if config.budget == 0 {
        return Err(StarError::InvalidConfig("budget must be at least 1".into()));
    }
    let mut report = EStepReport::default();
    for (i, pair) in pairs.iter().enumerate() {
        let pair_seed = mix64(seed, i as u64);
        let chain = ChainBuilder::new(ChainVariant::Qta)
            .observe("question", pair.question.clone())
            .temperature(config.temperature)
            .build()?;
        let mut accepted = None;
        for attempt in 0..config.budget {
            report.forward_attempts += 1;
            let trace = forward_run(&chain, env, pair_seed, attempt as u64)?;
            let (Some(thought), Some(answer)) = (trace.value("thought"), trace.payload()) else { continue };
            if trace.is_completed() && matches_label(answer, &pair.answer) {
                accepted = Some(AcceptedTriple {
                    question: pair.question.clone(),
                    thought: thought.into(),
                    answer: pair.answer.clone(),
                    source: TripleSource::Sampled,
                });
                break;
            }
        }
        if accepted.is_none() {
            report.rationalization_attempts += 1;
            let attempt = rationalize(pair, env, config.temperature, mix64(pair_seed, config.budget as u64))
                .and_then(|thought| Ok((greedy_answer(&pair.question, &thought, env)?, thought)));
            match attempt {
                Ok((answer, thought)) if matches_label(&answer, &pair.answer) => {
                    accepted = Some(AcceptedTriple {
                        question: pair.question.clone(),
                        thought,
                        answer: pair.answer.clone(),
                        source: TripleSource::Rationalized,
                    });
                }
                Ok(_) => {}
                // a table backend may simply not know the answer-conditioned prompt
                Err(HandlerError::Lm(LmError::UnknownPrompt { .. })) => report.rationalization_unknown += 1,
                Err(e) => return Err(e.into()),
            }
        }
        match accepted {
            Some(t) => report.triples.push(t),
            None => report.skipped.push(i),
        }
    }
    Ok(report)
}

/// Refits the model on the rendered triples. The input model is untouched.
pub fn m_step(model: &NGramLM, triples: &[AcceptedTriple]) -> Result<NGramLM, StarError> {
    if triples.is_empty() {
        return Err(StarError::NoTriples);
    }
    let corpus: Vec<String> = triples.iter().map(AcceptedTriple::render).collect();
    Ok(model.update(&corpus))
}

/// Fraction of pairs whose greedy thought and greedy answer reach the label.
pub fn train_accuracy(pairs: &[LabeledPair], env: &Env) -> Result<f64, StarError> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for pair in pairs {
        let chain = ChainBuilder::new(ChainVariant::Qta).observe("question", pair.question.clone()).temperature(0.0).build()?;
        let trace = forward_run(&chain, env, 0, 0)?;
        if trace.is_completed() && trace.payload().is_some_and(|a| matches_label(a, &pair.answer)) {
            correct += 1;
        }
    }
    Ok(correct as f64 / pairs.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub accepted: usize,
    pub sampled: usize,
    pub rationalized: usize,
    pub skipped: usize,
    /// Greedy training accuracy after this iteration's M-step.
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct StarOutcome {
    pub model: NGramLM,
    pub initial_accuracy: f64,
    pub metrics: Vec<IterationMetrics>,
    /// Every triple accepted over the run, in iteration order.
    pub triples: Vec<Vec<AcceptedTriple>>,
    /// Set when an E-step accepted nothing and the loop stopped.
    pub halted_early: bool,
}

fn env_with(base: &Env, model: &NGramLM) -> Env {
    base.clone().with_backend(DEFAULT_BACKEND, Arc::new(model.clone()))
}

/// Alternates E and M steps for `iters` iterations, with `model` as the
/// default backend of `base_env`.
pub fn star_loop(
    pairs: &[LabeledPair],
    model: NGramLM,
    iters: usize,
    config: &StarConfig,
    base_env: &Env,
    seed: u64,
) -> Result<StarOutcome, StarError> {
    if iters == 0 {
        return Err(StarError::InvalidConfig("iters must be at least 1".into()));
    }
    if config.budget == 0 {
        return Err(StarError::InvalidConfig("budget must be at least 1".into()));
    }
    let initial_accuracy = train_accuracy(pairs, &env_with(base_env, &model))?;
    let mut outcome = StarOutcome { model, initial_accuracy, metrics: Vec::new(), triples: Vec::new(), halted_early: false };
    for iteration in 0..iters {
        let env = env_with(base_env, &outcome.model);
        let report = e_step(pairs, &env, config, mix64(seed, iteration as u64))?;
        if report.triples.is_empty() {
            outcome.halted_early = true;
            break;
        }
        outcome.model = m_step(&outcome.model, &report.triples)?;
        let train_accuracy = train_accuracy(pairs, &env_with(base_env, &outcome.model))?;
        outcome.metrics.push(IterationMetrics {
            iteration,
            accepted: report.triples.len(),
            sampled: report.count(TripleSource::Sampled),
            rationalized: report.count(TripleSource::Rationalized),
            skipped: report.skipped.len(),
            train_accuracy,
        });
        outcome.triples.push(report.triples);
    }
    Ok(outcome)
}
