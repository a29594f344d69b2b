use alloc::collections::BTreeMap;

use super::{forward_sample, InferenceError, InferenceResult, Query};
use crate::env::Env;
use crate::prompting::{normalize_answer, BucketKey};
use crate::runtime::Cascade;

/// Samples `k` chains and returns the most common answer bucket.
/// Ties go to the lexicographically smallest bucket.
pub fn self_consistency(
    cascade: &dyn Cascade,
    env: &Env,
    k: usize,
    seed: u64,
    query: &Query,
) -> Result<(BucketKey, InferenceResult), InferenceError> {
    let result = forward_sample(cascade, env, k, seed, query)?;
    let mut counts: BTreeMap<BucketKey, usize> = BTreeMap::new();
    for wt in result.traces.iter().filter(|wt| wt.weight > 0.0) {
        if let Some(value) = query.value(&wt.trace) {
            *counts.entry(normalize_answer(value)).or_default() += 1;
        }
    }
    let mut best: Option<(&BucketKey, usize)> = None;
    for (key, count) in &counts {
        if best.is_none_or(|(_, c)| *count > c) {
            best = Some((key, *count));
        }
    }
    let bucket = best.map(|(k, _)| k.clone()).ok_or(InferenceError::NoCompletedTraces)?;
    Ok((bucket, result))
}
