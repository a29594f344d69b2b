//! Effects, traces and the driver loop every engine shares.

mod driver;
mod program;

pub use driver::{
    log_joint, replay, run, run_with_options, Continuation, Handler, HandlerError, NoJoint, ReplayError, Resolution,
    RunError, RunOptions, Site,
};
pub use program::{Cascade, Cx, FnCascade, Halt, Program, ProgramError, Step};

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::prompting::FormatterId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("variable names must be non-empty")]
pub struct EmptyName;

/// Name of a string-valued random variable.
///
/// Loop bodies address their variables as `base/index`, e.g. `thought/0`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VariableName(String);

impl VariableName {
    pub fn new(name: impl Into<String>) -> Result<Self, EmptyName> {
        let name = name.into();
        if name.is_empty() {
            return Err(EmptyName);
        }
        Ok(Self(name))
    }

    /// `base/index`, the naming scheme for variables emitted inside loops.
    pub fn indexed(base: &str, index: usize) -> Result<Self, EmptyName> {
        if base.is_empty() {
            return Err(EmptyName);
        }
        Ok(Self(alloc::format!("{base}/{index}")))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The name with any trailing `/<digits>` loop suffix removed.
    pub fn base(&self) -> &str {
        strip_loop_suffix(&self.0)
    }
}

pub(crate) fn strip_loop_suffix(name: &str) -> &str {
    match name.rsplit_once('/') {
        Some((base, idx)) if !base.is_empty() && !idx.is_empty() && idx.bytes().all(|b| b.is_ascii_digit()) => base,
        _ => name,
    }
}

impl fmt::Display for VariableName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for VariableName {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// When a backend should stop generating.
#[derive(Debug, Clone, PartialEq)]
pub enum Stop {
    Newline,
    TokenBudget(usize),
    Delimiter(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistSpecError {
    #[error("temperature must be finite and non-negative, got {0}")]
    Temperature(f64),
    #[error("max_length must be at least 1")]
    MaxLength,
    #[error("conditioning field `{0}` given twice")]
    DuplicateField(String),
}

/// A distribution over strings: which backend to ask, what it is
/// conditioned on, how the prompt is rendered and how decoding stops.
#[derive(Debug, Clone, PartialEq)]
pub struct DistSpec {
    pub backend: String,
    /// Ordered conditioning fields, in program declaration order.
    pub conditioning: Vec<(String, String)>,
    pub formatter: FormatterId,
    pub temperature: f64,
    pub stop: Stop,
    pub max_length: usize,
}

pub const DEFAULT_BACKEND: &str = "default";

impl Default for DistSpec {
    fn default() -> Self {
        Self {
            backend: DEFAULT_BACKEND.to_string(),
            conditioning: Vec::new(),
            formatter: FormatterId::default(),
            temperature: 1.0,
            stop: Stop::Newline,
            max_length: 64,
        }
    }
}

impl DistSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn given(mut self, field: impl Into<String>, value: impl Into<String>) -> Self {
        self.conditioning.push((field.into(), value.into()));
        self
    }

    pub fn backend(mut self, backend: impl Into<String>) -> Self {
        self.backend = backend.into();
        self
    }

    pub fn formatter(mut self, formatter: FormatterId) -> Self {
        self.formatter = formatter;
        self
    }

    pub fn temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn stop(mut self, stop: Stop) -> Self {
        self.stop = stop;
        self
    }

    pub fn max_length(mut self, max_length: usize) -> Self {
        self.max_length = max_length;
        self
    }

    pub fn field(&self, name: &str) -> Option<&str> {
        self.conditioning.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    pub fn validate(&self) -> Result<(), DistSpecError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(DistSpecError::Temperature(self.temperature));
        }
        if self.max_length == 0 {
            return Err(DistSpecError::MaxLength);
        }
        for (i, (k, _)) in self.conditioning.iter().enumerate() {
            if self.conditioning[..i].iter().any(|(prev, _)| prev == k) {
                return Err(DistSpecError::DuplicateField(k.clone()));
            }
        }
        Ok(())
    }
}

/// A request emitted by a running cascade.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Sample { name: VariableName, dist: DistSpec },
    Observe { name: VariableName, dist: DistSpec, value: String },
    /// Call to an external deterministic tool; the output is recorded under `name`.
    Tool { name: VariableName, tool: String, input: String },
    /// Deterministic node (a buffer or post-processing step) recorded with log-probability 0.
    Deterministic { name: VariableName, value: String },
    Reject { reason: String },
    Success { payload: String },
}

impl Effect {
    pub fn kind(&self) -> &'static str {
        match self {
            Effect::Sample { .. } => "sample",
            Effect::Observe { .. } => "observe",
            Effect::Tool { .. } => "tool",
            Effect::Deterministic { .. } => "deterministic",
            Effect::Reject { .. } => "reject",
            Effect::Success { .. } => "success",
        }
    }

    pub fn name(&self) -> Option<&VariableName> {
        match self {
            Effect::Sample { name, .. }
            | Effect::Observe { name, .. }
            | Effect::Tool { name, .. }
            | Effect::Deterministic { name, .. } => Some(name),
            Effect::Reject { .. } | Effect::Success { .. } => None,
        }
    }

    pub fn dist(&self) -> Option<&DistSpec> {
        match self {
            Effect::Sample { dist, .. } | Effect::Observe { dist, .. } => Some(dist),
            _ => None,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Effect::Reject { .. } | Effect::Success { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub name: VariableName,
    pub value: String,
    /// Natural-log probability of `value` under the backend that produced or scored it.
    pub log_prob: f64,
    pub observed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceStatus {
    Completed(String),
    Rejected(String),
    Exhausted,
}

/// The joint assignment produced by one program execution.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub status: TraceStatus,
    pub seed: u64,
    pub program_id: String,
}

impl Trace {
    pub fn record(&self, name: &str) -> Option<&TraceRecord> {
        self.records.iter().find(|r| r.name.as_str() == name)
    }

    pub fn value(&self, name: &str) -> Option<&str> {
        self.record(name).map(|r| r.value.as_str())
    }

    pub fn is_completed(&self) -> bool {
        matches!(self.status, TraceStatus::Completed(_))
    }

    pub fn payload(&self) -> Option<&str> {
        match &self.status {
            TraceStatus::Completed(p) => Some(p),
            _ => None,
        }
    }

    /// `(name, value)` pairs in emission order, suitable as a replay prefix.
    pub fn prefix(&self) -> Vec<(VariableName, String)> {
        self.records.iter().map(|r| (r.name.clone(), r.value.clone())).collect()
    }
}

/// One few-shot example: field name to text, in the example's own order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Example {
    fields: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExampleError {
    #[error("few-shot examples must have at least one field")]
    Empty,
    #[error("example field `{0}` given twice")]
    DuplicateField(String),
}

impl Example {
    pub fn new<K: Into<String>, V: Into<String>>(
        fields: impl IntoIterator<Item = (K, V)>,
    ) -> Result<Self, ExampleError> {
        let mut out: Vec<(String, String)> = Vec::new();
        for (k, v) in fields {
            let k = k.into();
            if out.iter().any(|(prev, _)| *prev == k) {
                return Err(ExampleError::DuplicateField(k));
            }
            out.push((k, v.into()));
        }
        if out.is_empty() {
            return Err(ExampleError::Empty);
        }
        Ok(Self { fields: out })
    }

    pub fn get(&self, field: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == field).map(|(_, v)| v.as_str())
    }

    pub fn fields(&self) -> &[(String, String)] {
        &self.fields
    }
}

/// Few-shot examples, used in list order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExampleSet {
    pub examples: Vec<Example>,
}

impl ExampleSet {
    pub fn new(examples: Vec<Example>) -> Self {
        Self { examples }
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loop_suffix_is_stripped_only_for_digits() {
        assert_eq!(VariableName::indexed("thought", 3).unwrap().base(), "thought");
        assert_eq!(strip_loop_suffix("a/b"), "a/b");
        assert_eq!(strip_loop_suffix("/0"), "/0");
        assert_eq!(strip_loop_suffix("answer"), "answer");
    }

    #[test]
    fn empty_names_are_rejected() {
        assert_eq!(VariableName::new(""), Err(EmptyName));
    }

    #[test]
    fn dist_spec_validation() {
        assert!(DistSpec::new().validate().is_ok());
        assert!(DistSpec::new().temperature(-1.0).validate().is_err());
        assert!(DistSpec::new().max_length(0).validate().is_err());
        assert!(DistSpec::new().given("a", "1").given("a", "2").validate().is_err());
    }

    #[test]
    fn examples_must_be_non_empty() {
        assert_eq!(Example::new(Vec::<(String, String)>::new()), Err(ExampleError::Empty));
        assert!(Example::new([("q", "1"), ("q", "2")]).is_err());
    }
}
