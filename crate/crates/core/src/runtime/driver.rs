//! The driver loop shared by forward-style engines, plus replay and scoring.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use super::program::{Cascade, Program, ProgramError, Step};
use super::{DistSpec, DistSpecError, Effect, Trace, TraceRecord, TraceStatus, VariableName};
use crate::lm::LmError;
use crate::prompting::PromptError;
use crate::rng::{rng_from_seed, RunRng};

/// A sample or observe site handed to a [`Handler`].
#[derive(Debug, Clone, Copy)]
pub struct Site<'a> {
    pub name: &'a VariableName,
    pub dist: &'a DistSpec,
}

/// How a handler resolved a sample or observe site.
#[derive(Debug, Clone, PartialEq)]
pub enum Resolution {
    Value { value: String, log_prob: f64, observed: bool },
    /// Abandon the run, e.g. because a sampled value contradicts an observation.
    Reject(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HandlerError {
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("no backend registered under `{0}`")]
    UnknownBackend(String),
    #[error("no tool registered under `{0}`")]
    UnknownTool(String),
    #[error("{0}")]
    Other(String),
}

/// Resolves the effects of a running program.
pub trait Handler {
    fn sample(&mut self, site: Site<'_>, rng: &mut RunRng) -> Result<Resolution, HandlerError>;
    fn observe(&mut self, site: Site<'_>, value: &str, rng: &mut RunRng) -> Result<Resolution, HandlerError>;
    fn tool(&mut self, tool: &str, input: &str) -> Result<String, HandlerError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// A run becomes `Exhausted` when it asks for more than this many
    /// non-terminal effects.
    pub max_effects: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { max_effects: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("variable `{name}` emitted twice in one run")]
    DuplicateVariable { name: VariableName, partial: Box<Trace> },
    #[error("invalid distribution for `{name}`: {source}")]
    InvalidDist { name: VariableName, source: DistSpecError, partial: Box<Trace> },
    #[error("handler failed: {source}")]
    Handler { source: HandlerError, partial: Box<Trace> },
    #[error("program failed: {source}")]
    Program { source: ProgramError, partial: Box<Trace> },
}

impl RunError {
    /// Records emitted before the failure. The partial trace carries status `Exhausted`.
    pub fn partial(&self) -> &Trace {
        match self {
            RunError::DuplicateVariable { partial, .. }
            | RunError::InvalidDist { partial, .. }
            | RunError::Handler { partial, .. }
            | RunError::Program { partial, .. } => partial,
        }
    }
}

pub(crate) fn push_record(records: &mut Vec<TraceRecord>, record: TraceRecord) -> Result<(), VariableName> {
    if records.iter().any(|r| r.name == record.name) {
        return Err(record.name);
    }
    records.push(record);
    Ok(())
}

pub fn run(cascade: &dyn Cascade, handler: &mut dyn Handler, seed: u64) -> Result<Trace, RunError> {
    run_with_options(cascade, handler, seed, &RunOptions::default())
}

/// Executes one program run to a terminal status.
pub fn run_with_options(
    cascade: &dyn Cascade,
    handler: &mut dyn Handler,
    seed: u64,
    options: &RunOptions,
) -> Result<Trace, RunError> {
    let mut rng = rng_from_seed(seed);
    let mut program = cascade.start();
    let mut records: Vec<TraceRecord> = Vec::new();
    let mut input: Option<String> = None;
    let mut effects = 0usize;

    let finish = |records: Vec<TraceRecord>, status: TraceStatus| Trace {
        records,
        status,
        seed,
        program_id: cascade.id().into(),
    };
    let partial = |records: &Vec<TraceRecord>| Box::new(finish(records.clone(), TraceStatus::Exhausted));

    loop {
        let step = match program.step(input.take()) {
            Ok(step) => step,
            Err(source) => return Err(RunError::Program { source, partial: partial(&records) }),
        };
        let effect = match step {
            Step::Return(value) => return Ok(finish(records, TraceStatus::Completed(value))),
            Step::Effect(effect) => effect,
        };
        let effect = match effect {
            Effect::Reject { reason } => return Ok(finish(records, TraceStatus::Rejected(reason))),
            Effect::Success { payload } => return Ok(finish(records, TraceStatus::Completed(payload))),
            effect => effect,
        };
        effects += 1;
        if effects > options.max_effects {
            return Ok(finish(records, TraceStatus::Exhausted));
        }

        let record = match effect {
            Effect::Reject { .. } | Effect::Success { .. } => unreachable!("terminal effects handled above"),
            Effect::Sample { name, dist } | Effect::Observe { name, dist, .. } if dist.validate().is_err() => {
                let source = dist.validate().unwrap_err();
                return Err(RunError::InvalidDist { name, source, partial: partial(&records) });
            }
            Effect::Sample { name, dist } => {
                match handler.sample(Site { name: &name, dist: &dist }, &mut rng) {
                    Ok(Resolution::Value { value, log_prob, observed }) => {
                        TraceRecord { name, value, log_prob, observed }
                    }
                    Ok(Resolution::Reject(reason)) => return Ok(finish(records, TraceStatus::Rejected(reason))),
                    Err(source) => return Err(RunError::Handler { source, partial: partial(&records) }),
                }
            }
            Effect::Observe { name, dist, value } => {
                match handler.observe(Site { name: &name, dist: &dist }, &value, &mut rng) {
                    Ok(Resolution::Value { value, log_prob, observed }) => {
                        TraceRecord { name, value, log_prob, observed }
                    }
                    Ok(Resolution::Reject(reason)) => return Ok(finish(records, TraceStatus::Rejected(reason))),
                    Err(source) => return Err(RunError::Handler { source, partial: partial(&records) }),
                }
            }
            Effect::Tool { name, tool, input } => match handler.tool(&tool, &input) {
                Ok(value) => TraceRecord { name, value, log_prob: 0.0, observed: true },
                Err(source) => return Err(RunError::Handler { source, partial: partial(&records) }),
            },
            Effect::Deterministic { name, value } => TraceRecord { name, value, log_prob: 0.0, observed: true },
        };

        input = Some(record.value.clone());
        if let Err(name) = push_record(&mut records, record) {
            return Err(RunError::DuplicateVariable { name, partial: partial(&records) });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no joint defined for a trace that did not complete")]
pub struct NoJoint;

/// Sum of the per-record log-probabilities of a completed trace.
pub fn log_joint(trace: &Trace) -> Result<f64, NoJoint> {
    if !trace.is_completed() {
        return Err(NoJoint);
    }
    Ok(trace.records.iter().map(|r| r.log_prob).sum())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("prefix position {position}: expected `{expected}`, program emitted {found}")]
    NameMismatch { position: usize, expected: VariableName, found: String },
    #[error("prefix is longer than the program path (ended at position {position})")]
    TooLong { position: usize },
    #[error(transparent)]
    Program(#[from] ProgramError),
}

/// A program advanced past a replayed prefix.
pub struct Continuation<'c> {
    program: Box<dyn Program + 'c>,
    next: Step,
}

impl<'c> Continuation<'c> {
    /// The effect (or return value) the program is currently waiting on.
    pub fn next(&self) -> &Step {
        &self.next
    }

    /// Answers the pending effect and advances to the following one.
    pub fn resume(&mut self, value: String) -> Result<&Step, ProgramError> {
        self.next = self.program.step(Some(value))?;
        Ok(&self.next)
    }
}

/// Feeds `prefix` values back into a fresh instance of `cascade`.
///
/// Returns the effects consumed along the way (carrying their distributions,
/// so callers can rescore the prefix) and a continuation parked at the next
/// effect.
pub fn replay<'c>(
    cascade: &'c dyn Cascade,
    prefix: &[(VariableName, String)],
) -> Result<(Vec<Effect>, Continuation<'c>), ReplayError> {
    let mut program = cascade.start();
    let mut next = program.step(None)?;
    let mut consumed = Vec::with_capacity(prefix.len());
    for (position, (expected, value)) in prefix.iter().enumerate() {
        let effect = match next {
            Step::Effect(effect) if !effect.is_terminal() => effect,
            _ => return Err(ReplayError::TooLong { position }),
        };
        let found = effect.name().expect("non-terminal effects are named");
        if found != expected {
            return Err(ReplayError::NameMismatch {
                position,
                expected: expected.clone(),
                found: alloc::format!("{} `{}`", effect.kind(), found),
            });
        }
        next = program.step(Some(value.clone()))?;
        consumed.push(effect);
    }
    Ok((consumed, Continuation { program, next }))
}
