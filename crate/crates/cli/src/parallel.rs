//! Multi-threaded drivers. Every run's seed depends only on its index and
//! results are collected in index order, so output does not depend on the
//! thread count. `CASCADE_DETERMINISTIC=1` forces a single thread anyway.

use cascade_core::cascades::twentyq::{game_seed, play, EvalConfig, GameConfig, TwentyQReport};
use cascade_core::inference::{forward_run, summarize_forward};
use cascade_core::{Cascade, Env, InferenceError, InferenceResult, Query, RunError, Trace};
use rayon::prelude::*;

pub fn deterministic_mode() -> bool {
    std::env::var("CASCADE_DETERMINISTIC").is_ok_and(|v| v == "1")
}

fn map_indices<T: Send>(n: usize, sequential: bool, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    if sequential {
        (0..n).map(f).collect()
    } else {
        (0..n).into_par_iter().map(f).collect()
    }
}

/// Forward sampling with runs spread over the rayon pool.
pub fn forward_sample_par(
    cascade: &dyn Cascade,
    env: &Env,
    n: usize,
    seed: u64,
    query: &Query,
) -> Result<InferenceResult, InferenceError> {
    if n == 0 {
        return Err(InferenceError::InvalidArgument("n must be at least 1".into()));
    }
    let traces = map_indices(n, deterministic_mode(), |i| forward_run(cascade, env, seed, i as u64))
        .into_iter()
        .collect::<Result<Vec<Trace>, RunError>>()?;
    Ok(summarize_forward(traces, query))
}

/// Twenty-questions evaluation with games spread over the rayon pool.
pub fn evaluate_twentyq_par(
    concepts: &[String],
    config: &EvalConfig,
    env: &Env,
    seed: u64,
) -> Result<TwentyQReport, RunError> {
    let per = config.samples_per_concept;
    let played = map_indices(concepts.len() * per, deterministic_mode(), |k| {
        let (ci, si) = (k / per, k % per);
        let game = GameConfig::new(concepts[ci].clone())
            .max_questions(config.max_questions)
            .temperature(config.temperature);
        play(&game, env, game_seed(seed, ci, si))
    });
    let mut played = played.into_iter();
    let mut games = Vec::with_capacity(concepts.len());
    for concept in concepts {
        let runs = played.by_ref().take(per).collect::<Result<Vec<_>, _>>()?;
        games.push((concept.clone(), runs));
    }
    Ok(TwentyQReport::from_games(games))
}
