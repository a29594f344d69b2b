//! The resumable step contract and closure-backed cascades.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use core::fmt;

use thiserror::Error;

use super::{DistSpec, Effect, VariableName};

/// Result of advancing a program by one step.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Effect(Effect),
    Return(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("program received a value before its first step")]
    UnexpectedInput,
    #[error("program is waiting for a value but none was supplied")]
    MissingInput,
    #[error("program was stepped after it finished")]
    Finished,
    #[error("program is not deterministic: replay consumed {consumed} of {supplied} supplied values")]
    Nondeterministic { consumed: usize, supplied: usize },
    #[error("program fault: {0}")]
    Fault(String),
}

/// A resumable cascade instance.
///
/// The first call passes `None`. Every `Sample`, `Observe`, `Tool` and
/// `Deterministic` effect must be answered by the next call with `Some(value)`.
/// `Reject` and `Success` are terminal, as is `Step::Return`.
pub trait Program {
    fn step(&mut self, input: Option<String>) -> Result<Step, ProgramError>;
}

/// A program definition that can start fresh instances.
pub trait Cascade: Send + Sync {
    fn id(&self) -> &str;
    fn start(&self) -> Box<dyn Program + '_>;
}

/// Why a cascade body stopped early.
#[derive(Debug, Clone, PartialEq)]
pub enum Halt {
    /// Waiting for the runtime to resolve an effect.
    Pending(Box<Effect>),
    Reject(String),
    Success(String),
    Fault(String),
}

/// Handle passed to cascade bodies.
///
/// Bodies are re-executed from the start on every step; calls whose value is
/// already known return it, and the first unanswered call suspends the body
/// with [`Halt::Pending`]. Bodies must therefore be deterministic functions
/// of the values they receive.
pub struct Cx<'a> {
    inputs: &'a [String],
    cursor: usize,
}

impl<'a> Cx<'a> {
    fn resolve(&mut self, effect: impl FnOnce() -> Result<Effect, Halt>) -> Result<String, Halt> {
        if let Some(value) = self.inputs.get(self.cursor) {
            self.cursor += 1;
            return Ok(value.clone());
        }
        Err(Halt::Pending(Box::new(effect()?)))
    }

    pub fn sample(&mut self, name: impl AsRef<str>, dist: DistSpec) -> Result<String, Halt> {
        self.resolve(|| Ok(Effect::Sample { name: var(name.as_ref())?, dist }))
    }

    pub fn observe(&mut self, name: impl AsRef<str>, dist: DistSpec, value: impl Into<String>) -> Result<String, Halt> {
        self.resolve(|| Ok(Effect::Observe { name: var(name.as_ref())?, dist, value: value.into() }))
    }

    pub fn tool(&mut self, name: impl AsRef<str>, tool: &str, input: impl Into<String>) -> Result<String, Halt> {
        self.resolve(|| Ok(Effect::Tool { name: var(name.as_ref())?, tool: tool.to_string(), input: input.into() }))
    }

    pub fn deterministic(&mut self, name: impl AsRef<str>, value: impl Into<String>) -> Result<String, Halt> {
        self.resolve(|| Ok(Effect::Deterministic { name: var(name.as_ref())?, value: value.into() }))
    }

    pub fn reject(&self, reason: impl Into<String>) -> Halt {
        Halt::Reject(reason.into())
    }

    pub fn success(&self, payload: impl Into<String>) -> Halt {
        Halt::Success(payload.into())
    }
}

fn var(name: &str) -> Result<VariableName, Halt> {
    VariableName::new(name).map_err(|e| Halt::Fault(e.to_string()))
}

type Body = dyn Fn(&mut Cx<'_>) -> Result<String, Halt> + Send + Sync;

/// A cascade defined by a closure over [`Cx`].
#[derive(Clone)]
pub struct FnCascade {
    id: String,
    body: Arc<Body>,
}

impl FnCascade {
    pub fn new(
        id: impl Into<String>,
        body: impl Fn(&mut Cx<'_>) -> Result<String, Halt> + Send + Sync + 'static,
    ) -> Self {
        Self { id: id.into(), body: Arc::new(body) }
    }
}

impl fmt::Debug for FnCascade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnCascade").field("id", &self.id).finish_non_exhaustive()
    }
}

impl Cascade for FnCascade {
    fn id(&self) -> &str {
        &self.id
    }

    fn start(&self) -> Box<dyn Program + '_> {
        Box::new(ReplayProgram { body: &*self.body, inputs: alloc::vec::Vec::new(), state: State::Fresh })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Fresh,
    Awaiting,
    Finished,
}

struct ReplayProgram<'a> {
    body: &'a Body,
    inputs: alloc::vec::Vec<String>,
    state: State,
}

impl Program for ReplayProgram<'_> {
    fn step(&mut self, input: Option<String>) -> Result<Step, ProgramError> {
        match (self.state, input) {
            (State::Finished, _) => return Err(ProgramError::Finished),
            (State::Fresh, Some(_)) => return Err(ProgramError::UnexpectedInput),
            (State::Fresh, None) => {}
            (State::Awaiting, Some(v)) => self.inputs.push(v),
            (State::Awaiting, None) => return Err(ProgramError::MissingInput),
        }

        let mut cx = Cx { inputs: &self.inputs, cursor: 0 };
        let outcome = (self.body)(&mut cx);
        let consumed = cx.cursor;
        if consumed != self.inputs.len() {
            self.state = State::Finished;
            return Err(ProgramError::Nondeterministic { consumed, supplied: self.inputs.len() });
        }

        self.state = State::Finished;
        match outcome {
            Ok(ret) => Ok(Step::Return(ret)),
            Err(Halt::Pending(effect)) => {
                self.state = State::Awaiting;
                Ok(Step::Effect(*effect))
            }
            Err(Halt::Reject(reason)) => Ok(Step::Effect(Effect::Reject { reason })),
            Err(Halt::Success(payload)) => Ok(Step::Effect(Effect::Success { payload })),
            Err(Halt::Fault(msg)) => Err(ProgramError::Fault(msg)),
        }
    }
}
