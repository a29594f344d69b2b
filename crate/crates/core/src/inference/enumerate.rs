use alloc::vec;
use alloc::vec::Vec;

use super::{weighted_marginal, Cursor, InferenceError, InferenceResult, ObservationSet, Query, WeightedTrace};
use crate::env::Env;
use crate::math::{exp, ln};
use crate::runtime::{Cascade, Effect, TraceRecord, TraceStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerateOptions {
    /// Maximum number of complete paths (including pruned ones) to explore.
    pub path_cap: usize,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        Self { path_cap: 1_000_000 }
    }
}

/// Exact posterior by depth-first expansion of every path.
pub fn enumerate_posterior(
    cascade: &dyn Cascade,
    env: &Env,
    observations: &ObservationSet,
    query: &Query,
) -> Result<InferenceResult, InferenceError> {
    enumerate_with(cascade, env, observations, query, &EnumerateOptions::default())
}

pub fn enumerate_with(
    cascade: &dyn Cascade,
    env: &Env,
    observations: &ObservationSet,
    query: &Query,
    options: &EnumerateOptions,
) -> Result<InferenceResult, InferenceError> {
    if !env.is_enumerable() {
        return Err(InferenceError::Unsupported("exact enumeration needs enumerable backends".into()));
    }
    let mut traces: Vec<WeightedTrace> = Vec::new();
    let mut paths = 0usize;
    let leaf = |paths: &mut usize| {
        *paths += 1;
        if *paths > options.path_cap {
            Err(InferenceError::PathCapExceeded { explored: *paths - 1 })
        } else {
            Ok(())
        }
    };

    let mut stack = vec![Cursor::start(cascade)?];
    while let Some(mut cursor) = stack.pop() {
        let effect = match cursor.settle(env)? {
            Ok(effect) => effect,
            Err(status) => {
                leaf(&mut paths)?;
                let weight = match status {
                    TraceStatus::Completed(_) => exp(cursor.log_weight),
                    _ => 0.0,
                };
                traces.push(WeightedTrace { trace: cursor.into_trace(status, 0), weight });
                continue;
            }
        };
        match effect {
            Effect::Sample { name, dist } => {
                if let Some(value) = observations.get(name.as_str()) {
                    let log_prob = env.score(&name, &dist, value)?;
                    if log_prob == f64::NEG_INFINITY {
                        leaf(&mut paths)?;
                        continue;
                    }
                    cursor.push(TraceRecord { name, value: value.into(), log_prob, observed: true }, log_prob)?;
                    stack.push(cursor);
                    continue;
                }
                let support: Vec<_> = env.support(&name, &dist)?.into_iter().filter(|(_, p)| *p > 0.0).collect();
                if support.is_empty() {
                    leaf(&mut paths)?;
                    continue;
                }
                // Children go on the stack in reverse so paths are visited in support order.
                let mut children = Vec::with_capacity(support.len());
                for (value, p) in support.iter().skip(1) {
                    let mut child = cursor.fork()?;
                    let log_prob = ln(*p);
                    child.push(TraceRecord { name: name.clone(), value: value.clone(), log_prob, observed: false }, log_prob)?;
                    children.push(child);
                }
                let (value, p) = &support[0];
                let log_prob = ln(*p);
                cursor.push(TraceRecord { name, value: value.clone(), log_prob, observed: false }, log_prob)?;
                children.insert(0, cursor);
                stack.extend(children.into_iter().rev());
            }
            Effect::Observe { name, dist, value } => {
                let value = observations.get(name.as_str()).map_or(value, Into::into);
                let log_prob = env.score(&name, &dist, &value)?;
                if log_prob == f64::NEG_INFINITY {
                    leaf(&mut paths)?;
                    continue;
                }
                cursor.push(TraceRecord { name, value, log_prob, observed: true }, log_prob)?;
                stack.push(cursor);
            }
            _ => unreachable!("settle stops only at sample and observe sites"),
        }
    }

    let evidence: f64 = traces.iter().map(|t| t.weight).sum();
    if !(evidence > 0.0) {
        return Err(InferenceError::ZeroEvidence);
    }
    let mut result = InferenceResult { marginal: weighted_marginal(&traces, query), traces, ..Default::default() };
    result.diagnostics.insert("evidence".into(), evidence);
    result.diagnostics.insert("log_evidence".into(), ln(evidence));
    result.diagnostics.insert("paths".into(), paths as f64);
    Ok(result)
}
