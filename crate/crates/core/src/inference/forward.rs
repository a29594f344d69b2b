use alloc::vec::Vec;

use super::{weighted_marginal, InferenceError, InferenceResult, Query, WeightedTrace};
use crate::env::{Env, ForwardHandler};
use crate::rng::mix64;
use crate::runtime::{run_with_options, Cascade, RunError, Trace};

/// Run `index` of a forward-sampling batch seeded with `seed`.
pub fn forward_run(cascade: &dyn Cascade, env: &Env, seed: u64, index: u64) -> Result<Trace, RunError> {
    run_with_options(cascade, &mut ForwardHandler::new(env), mix64(seed, index), &env.options)
}

/// `n` independent ancestral samples. Completed traces get weight 1,
/// rejected and exhausted ones weight 0.
pub fn forward_sample(
    cascade: &dyn Cascade,
    env: &Env,
    n: usize,
    seed: u64,
    query: &Query,
) -> Result<InferenceResult, InferenceError> {
    if n == 0 {
        return Err(InferenceError::InvalidArgument("n must be at least 1".into()));
    }
    let traces = (0..n as u64).map(|i| forward_run(cascade, env, seed, i)).collect::<Result<Vec<_>, _>>()?;
    Ok(summarize_forward(traces, query))
}

/// Builds the forward-sampling result from traces in run order.
pub fn summarize_forward(traces: Vec<Trace>, query: &Query) -> InferenceResult {
    let n = traces.len();
    let traces: Vec<WeightedTrace> = traces
        .into_iter()
        .map(|trace| {
            let weight = if trace.is_completed() { 1.0 } else { 0.0 };
            WeightedTrace { trace, weight }
        })
        .collect();
    let completed = traces.iter().filter(|t| t.weight > 0.0).count();
    let mut result = InferenceResult { marginal: weighted_marginal(&traces, query), traces, ..Default::default() };
    result.diagnostics.insert("samples".into(), n as f64);
    result.diagnostics.insert("completed".into(), completed as f64);
    result.diagnostics.insert("acceptance_rate".into(), completed as f64 / n.max(1) as f64);
    if completed == 0 {
        result.diagnostics.insert("no_completed_traces".into(), 1.0);
    }
    result
}
