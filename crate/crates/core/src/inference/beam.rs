use alloc::vec;
use alloc::vec::Vec;

use super::{map_order, Cursor, InferenceError};
use crate::env::Env;
use crate::math::ln;
use crate::runtime::{Cascade, Effect, Trace, TraceRecord, TraceStatus};

/// Approximate MAP trace by beam search over the program's sites.
///
/// Each round extends every partial trace in the beam by one site, then
/// keeps the `beam_width` best by log-joint. Completed traces leave the
/// beam and compete for the final answer. The result is exact whenever
/// the beam never has to drop a partial trace.
pub fn beam_map(cascade: &dyn Cascade, env: &Env, beam_width: usize) -> Result<Trace, InferenceError> {
    if beam_width == 0 {
        return Err(InferenceError::InvalidArgument("beam_width must be at least 1".into()));
    }
    if !env.is_enumerable() {
        return Err(InferenceError::Unsupported("beam search needs enumerable backends".into()));
    }
    let mut beam = vec![Cursor::start(cascade)?];
    let mut finished: Vec<(f64, Trace)> = Vec::new();
    while !beam.is_empty() {
        let mut candidates: Vec<Cursor<'_>> = Vec::new();
        for mut cursor in beam {
            let effect = match cursor.settle(env)? {
                Ok(effect) => effect,
                Err(status @ TraceStatus::Completed(_)) => {
                    let score = cursor.log_weight;
                    finished.push((score, cursor.into_trace(status, 0)));
                    continue;
                }
                Err(_) => continue,
            };
            match effect {
                Effect::Sample { name, dist } => {
                    for (value, p) in env.support(&name, &dist)? {
                        if !(p > 0.0) {
                            continue;
                        }
                        let mut child = cursor.fork()?;
                        let log_prob = ln(p);
                        child.push(TraceRecord { name: name.clone(), value, log_prob, observed: false }, log_prob)?;
                        candidates.push(child);
                    }
                }
                Effect::Observe { name, dist, value } => {
                    let log_prob = env.score(&name, &dist, &value)?;
                    if log_prob == f64::NEG_INFINITY {
                        continue;
                    }
                    cursor.push(TraceRecord { name, value, log_prob, observed: true }, log_prob)?;
                    candidates.push(cursor);
                }
                _ => unreachable!("settle stops only at sample and observe sites"),
            }
        }
        candidates.sort_by(|a, b| map_order((a.log_weight, &a.records), (b.log_weight, &b.records)));
        candidates.truncate(beam_width);
        beam = candidates;
    }
    finished
        .into_iter()
        .min_by(|a, b| map_order((a.0, &a.1.records), (b.0, &b.1.records)))
        .map(|(_, trace)| trace)
        .ok_or(InferenceError::NoCompletedTraces)
}
