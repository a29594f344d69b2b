//! Inference engines over cascades.
//!
//! | engine | observations | result |
//! |---|---|---|
//! | [`forward_sample`] | ignored (declared observes are scored) | unweighted samples |
//! | [`rejection_infer`] | sampled value must match after normalization | accepted samples |
//! | [`enumerate_posterior`] | exact likelihood | exact posterior |
//! | [`smc_infer`] | likelihood weights, systematic resampling | weighted particles |
//! | [`beam_map`] | declared observes contribute likelihood | single MAP trace |
//! | [`self_consistency`] | none | modal answer bucket |

mod beam;
mod consistency;
mod enumerate;
mod forward;
mod rejection;
mod smc;
mod verifier;

pub use beam::beam_map;
pub use consistency::self_consistency;
pub use enumerate::{enumerate_posterior, enumerate_with, EnumerateOptions};
pub use forward::{forward_run, forward_sample, summarize_forward};
pub use rejection::{rejection_infer, RejectionHandler};
pub use smc::{smc_infer, systematic_resample};
pub use verifier::{rank_by_verifier, Ranking, Verifier, VerifierScore, DEFAULT_POSITIVE};

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use thiserror::Error;

use crate::env::Env;
use crate::prompting::{normalize_answer, BucketKey};
use crate::runtime::{
    replay, Cascade, Continuation, DistSpecError, Effect, HandlerError, ProgramError, ReplayError, RunError, RunOptions, Step, Trace,
    TraceRecord, TraceStatus, VariableName,
};

/// Which value of a trace the marginal is computed over.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Query {
    /// The program's return (or success) payload.
    #[default]
    Return,
    Variable(String),
}

impl Query {
    pub fn variable(name: impl Into<String>) -> Self {
        Query::Variable(name.into())
    }

    pub fn value<'t>(&self, trace: &'t Trace) -> Option<&'t str> {
        match self {
            Query::Return => trace.payload(),
            Query::Variable(name) => trace.value(name),
        }
    }
}

/// Values to condition on, by variable name.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ObservationSet(BTreeMap<String, String>);

impl ObservationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.0.insert(name.into(), value.into());
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, value: impl Into<String>) {
        self.0.insert(name.into(), value.into());
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for ObservationSet {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        Self(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTrace {
    pub trace: Trace,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InferenceResult {
    pub traces: Vec<WeightedTrace>,
    /// Normalized distribution of the query's answer bucket.
    pub marginal: BTreeMap<BucketKey, f64>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl InferenceResult {
    pub fn prob(&self, bucket: &str) -> f64 {
        self.marginal.get(&normalize_answer(bucket)).copied().unwrap_or(0.0)
    }

    pub fn diagnostic(&self, key: &str) -> Option<f64> {
        self.diagnostics.get(key).copied()
    }

    /// Highest-weight completed trace, ties broken by [`map_order`].
    pub fn best_trace(&self) -> Option<&Trace> {
        self.traces
            .iter()
            .filter(|wt| wt.trace.is_completed() && wt.weight > 0.0)
            .min_by(|a, b| map_order((a.weight, &a.trace.records), (b.weight, &b.trace.records)))
            .map(|wt| &wt.trace)
    }
}

/// Total variation distance between two marginals.
pub fn total_variation(a: &BTreeMap<BucketKey, f64>, b: &BTreeMap<BucketKey, f64>) -> f64 {
    let mut keys: Vec<&BucketKey> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys.iter().map(|k| (a.get(*k).unwrap_or(&0.0) - b.get(*k).unwrap_or(&0.0)).abs()).sum::<f64>()
}

/// Orders candidates best-first: higher score, then lexicographically
/// smaller value sequence.
pub fn map_order(a: (f64, &[TraceRecord]), b: (f64, &[TraceRecord])) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.1.iter().map(|r| r.value.as_str()).cmp(b.1.iter().map(|r| r.value.as_str())))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Handler(#[from] HandlerError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("variable `{0}` emitted twice in one run")]
    DuplicateVariable(VariableName),
    #[error("invalid distribution for `{name}`: {source}")]
    InvalidDist { name: VariableName, source: DistSpecError },
    #[error("unsupported capability: {0}")]
    Unsupported(String),
    #[error("path cap exceeded after exploring {explored} paths")]
    PathCapExceeded { explored: usize },
    #[error("conditioning event has probability zero")]
    ZeroEvidence,
    #[error("conditioning event unreachable")]
    Unreachable,
    #[error("no completed traces")]
    NoCompletedTraces,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl From<ProgramError> for InferenceError {
    fn from(e: ProgramError) -> Self {
        InferenceError::Replay(ReplayError::Program(e))
    }
}

/// Marginal of `query` over completed traces with positive weight.
pub(crate) fn weighted_marginal(traces: &[WeightedTrace], query: &Query) -> BTreeMap<BucketKey, f64> {
    let mut marginal: BTreeMap<BucketKey, f64> = BTreeMap::new();
    let mut total = 0.0;
    for wt in traces {
        if !(wt.weight > 0.0) || !wt.trace.is_completed() {
            continue;
        }
        if let Some(value) = query.value(&wt.trace) {
            *marginal.entry(normalize_answer(value)).or_default() += wt.weight;
            total += wt.weight;
        }
    }
    if total > 0.0 {
        for p in marginal.values_mut() {
            *p /= total;
        }
    }
    marginal
}

/// What a cursor is waiting on.
pub(crate) enum Pending<'a> {
    Done(TraceStatus),
    Effect(&'a Effect),
}

/// A program instance plus the partial trace and log-weight it has accumulated.
/// Engines that branch or resample fork cursors by replaying their records.
pub(crate) struct Cursor<'c> {
    cascade: &'c dyn Cascade,
    cont: Continuation<'c>,
    pub records: Vec<TraceRecord>,
    pub log_weight: f64,
}

impl<'c> Cursor<'c> {
    pub fn start(cascade: &'c dyn Cascade) -> Result<Self, InferenceError> {
        let (_, cont) = replay(cascade, &[])?;
        Ok(Self { cascade, cont, records: Vec::new(), log_weight: 0.0 })
    }

    pub fn fork(&self) -> Result<Self, InferenceError> {
        let prefix: Vec<(VariableName, String)> =
            self.records.iter().map(|r| (r.name.clone(), r.value.clone())).collect();
        let (_, cont) = replay(self.cascade, &prefix)?;
        Ok(Self { cascade: self.cascade, cont, records: self.records.clone(), log_weight: self.log_weight })
    }

    pub fn pending(&self, options: &RunOptions) -> Pending<'_> {
        match self.cont.next() {
            Step::Return(value) => Pending::Done(TraceStatus::Completed(value.clone())),
            Step::Effect(Effect::Reject { reason }) => Pending::Done(TraceStatus::Rejected(reason.clone())),
            Step::Effect(Effect::Success { payload }) => Pending::Done(TraceStatus::Completed(payload.clone())),
            Step::Effect(_) if self.records.len() >= options.max_effects => Pending::Done(TraceStatus::Exhausted),
            Step::Effect(effect) => Pending::Effect(effect),
        }
    }

    /// Pending effect, cloned so the cursor can be mutated while handling it.
    pub fn effect(&self, options: &RunOptions) -> Result<Effect, TraceStatus> {
        match self.pending(options) {
            Pending::Done(status) => Err(status),
            Pending::Effect(effect) => Ok(effect.clone()),
        }
    }

    /// Records the value of the pending effect, adds `weight` to the
    /// cursor's log-weight and advances the program.
    pub fn push(&mut self, record: TraceRecord, weight: f64) -> Result<(), InferenceError> {
        if self.records.iter().any(|r| r.name == record.name) {
            return Err(InferenceError::DuplicateVariable(record.name));
        }
        self.log_weight += weight;
        let value = record.value.clone();
        self.records.push(record);
        self.cont.resume(value)?;
        Ok(())
    }

    /// Runs tool and deterministic effects inline until the program waits on
    /// a sample or observe site, or stops.
    pub fn settle(&mut self, env: &Env) -> Result<Result<Effect, TraceStatus>, InferenceError> {
        loop {
            let effect = match self.effect(&env.options) {
                Ok(effect) => effect,
                Err(status) => return Ok(Err(status)),
            };
            match effect {
                Effect::Tool { name, tool, input } => {
                    let value = env.call_tool(&tool, &input)?;
                    self.push(TraceRecord { name, value, log_prob: 0.0, observed: true }, 0.0)?;
                }
                Effect::Deterministic { name, value } => {
                    self.push(TraceRecord { name, value, log_prob: 0.0, observed: true }, 0.0)?;
                }
                Effect::Sample { ref name, ref dist } | Effect::Observe { ref name, ref dist, .. } => {
                    if let Err(source) = dist.validate() {
                        return Err(InferenceError::InvalidDist { name: name.clone(), source });
                    }
                    return Ok(Ok(effect));
                }
                Effect::Reject { .. } | Effect::Success { .. } => unreachable!("terminal effects surface as a status"),
            }
        }
    }

    pub fn into_trace(self, status: TraceStatus, seed: u64) -> Trace {
        Trace { records: self.records, status, seed, program_id: self.cascade.id().into() }
    }
}
