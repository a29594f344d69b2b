use alloc::vec::Vec;

use super::{weighted_marginal, Cursor, InferenceError, InferenceResult, ObservationSet, Query, WeightedTrace};
use crate::env::Env;
use crate::math::{exp, ln, log_sum_exp};
use crate::rng::{rng_from_seed, uniform};
use crate::runtime::{Cascade, Effect, Trace, TraceRecord, TraceStatus};

enum Particle<'c> {
    Live(Cursor<'c>),
    Done { trace: Trace, log_weight: f64 },
}

impl Particle<'_> {
    fn log_weight(&self) -> f64 {
        match self {
            Particle::Live(c) => c.log_weight,
            Particle::Done { log_weight, .. } => *log_weight,
        }
    }

    fn set_log_weight(&mut self, w: f64) {
        match self {
            Particle::Live(c) => c.log_weight = w,
            Particle::Done { log_weight, .. } => *log_weight = w,
        }
    }

    fn fork(&self) -> Result<Self, InferenceError> {
        Ok(match self {
            Particle::Live(c) => Particle::Live(c.fork()?),
            Particle::Done { trace, log_weight } => Particle::Done { trace: trace.clone(), log_weight: *log_weight },
        })
    }
}

/// Indices selected by systematic resampling of normalized `weights`,
/// using the single offset `u` in `[0, 1)`.
pub fn systematic_resample(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    let mut cumulative = 0.0;
    let mut i = 0;
    for j in 0..n {
        let point = (j as f64 + u) / n as f64;
        while i + 1 < n && cumulative + weights[i] <= point {
            cumulative += weights[i];
            i += 1;
        }
        out.push(i);
    }
    out
}

fn normalized(log_weights: &[f64]) -> (f64, Vec<f64>) {
    let lse = log_sum_exp(log_weights.iter().copied());
    (lse, log_weights.iter().map(|w| exp(w - lse)).collect())
}

fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Sequential Monte Carlo with the prior as proposal.
///
/// Particles advance in lockstep, one sample or observe site per round.
/// Observed sites multiply the particle weight by the likelihood of the
/// observed string; runs that reject or exhaust drop to zero weight.
pub fn smc_infer(
    cascade: &dyn Cascade,
    env: &Env,
    observations: &ObservationSet,
    particles: usize,
    ess_threshold: f64,
    seed: u64,
    query: &Query,
) -> Result<InferenceResult, InferenceError> {
    if particles < 2 {
        return Err(InferenceError::InvalidArgument("at least 2 particles required".into()));
    }
    if !(ess_threshold > 0.0 && ess_threshold <= 1.0) {
        return Err(InferenceError::InvalidArgument("ess_threshold must lie in (0, 1]".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut set: Vec<Particle<'_>> = Vec::with_capacity(particles);
    for _ in 0..particles {
        set.push(Particle::Live(Cursor::start(cascade)?));
    }
    let mut log_evidence = 0.0;
    let mut resamples = 0usize;

    while set.iter().any(|p| matches!(p, Particle::Live(_))) {
        let mut weighted = false;
        let mut next = Vec::with_capacity(particles);
        for particle in set {
            let Particle::Live(mut cursor) = particle else {
                next.push(particle);
                continue;
            };
            let effect = match cursor.settle(env)? {
                Ok(effect) => effect,
                Err(status) => {
                    let log_weight =
                        if matches!(status, TraceStatus::Completed(_)) { cursor.log_weight } else { f64::NEG_INFINITY };
                    weighted |= log_weight == f64::NEG_INFINITY;
                    next.push(Particle::Done { trace: cursor.into_trace(status, seed), log_weight });
                    continue;
                }
            };
            let (name, dist, observed) = match effect {
                Effect::Sample { name, dist } => {
                    let observed = observations.get(name.as_str()).map(Into::into);
                    (name, dist, observed)
                }
                Effect::Observe { name, dist, value } => {
                    let observed = Some(observations.get(name.as_str()).map_or(value, Into::into));
                    (name, dist, observed)
                }
                _ => unreachable!("settle stops only at sample and observe sites"),
            };
            match observed {
                Some(value) => {
                    let log_prob = env.score(&name, &dist, &value)?;
                    weighted = true;
                    cursor.push(TraceRecord { name, value, log_prob, observed: true }, log_prob)?;
                }
                None => {
                    let (value, log_prob) = env.draw(&name, &dist, &mut rng)?;
                    cursor.push(TraceRecord { name, value, log_prob, observed: false }, 0.0)?;
                }
            }
            next.push(Particle::Live(cursor));
        }
        set = next;
        if !weighted {
            continue;
        }
        let log_weights: Vec<f64> = set.iter().map(Particle::log_weight).collect();
        if log_weights.iter().all(|w| *w == f64::NEG_INFINITY) {
            return Err(InferenceError::Unreachable);
        }
        let (lse, weights) = normalized(&log_weights);
        if ess(&weights) / (particles as f64) < ess_threshold {
            let picks = systematic_resample(&weights, uniform(&mut rng));
            let mut next = Vec::with_capacity(particles);
            for i in picks {
                let mut p = set[i].fork()?;
                p.set_log_weight(0.0);
                next.push(p);
            }
            set = next;
            log_evidence += lse - ln(particles as f64);
            resamples += 1;
        }
    }

    let log_weights: Vec<f64> = set.iter().map(Particle::log_weight).collect();
    if log_weights.iter().all(|w| *w == f64::NEG_INFINITY) {
        return Err(InferenceError::Unreachable);
    }
    let (lse, weights) = normalized(&log_weights);
    let final_ess = ess(&weights);
    log_evidence += lse - ln(particles as f64);
    let traces: Vec<WeightedTrace> = set
        .into_iter()
        .zip(weights)
        .map(|(p, weight)| match p {
            Particle::Done { trace, .. } => WeightedTrace { trace, weight },
            Particle::Live(_) => unreachable!("loop runs until every particle is done"),
        })
        .collect();
    let mut result = InferenceResult { marginal: weighted_marginal(&traces, query), traces, ..Default::default() };
    result.diagnostics.insert("log_evidence".into(), log_evidence);
    result.diagnostics.insert("evidence".into(), exp(log_evidence));
    result.diagnostics.insert("ess".into(), final_ess);
    result.diagnostics.insert("resample_count".into(), resamples as f64);
    Ok(result)
}
