use alloc::string::String;
use alloc::vec::Vec;

use super::{summarize_forward, InferenceError, InferenceResult, ObservationSet, Query};
use crate::env::Env;
use crate::prompting::normalize_answer;
use crate::rng::{mix64, RunRng};
use crate::runtime::{run_with_options, Cascade, Handler, HandlerError, Resolution, Site};

/// Forward sampling that abandons a run as soon as a sampled value
/// disagrees with its observation.
///
/// Observed sites (names in the observation set, and observes declared by
/// the program) are sampled like any other site; the run continues only if
/// the draw matches the observed value under [`normalize_answer`].
pub struct RejectionHandler<'e> {
    env: &'e Env,
    observations: &'e ObservationSet,
}

impl<'e> RejectionHandler<'e> {
    pub fn new(env: &'e Env, observations: &'e ObservationSet) -> Self {
        Self { env, observations }
    }

    fn check(&self, site: Site<'_>, target: &str, rng: &mut RunRng) -> Result<Resolution, HandlerError> {
        let (drawn, _) = self.env.draw(site.name, site.dist, rng)?;
        if normalize_answer(&drawn) != normalize_answer(target) {
            return Ok(Resolution::Reject(alloc::format!("observation mismatch at `{}`", site.name)));
        }
        let log_prob = self.env.score(site.name, site.dist, target)?;
        Ok(Resolution::Value { value: String::from(target), log_prob, observed: true })
    }
}

impl Handler for RejectionHandler<'_> {
    fn sample(&mut self, site: Site<'_>, rng: &mut RunRng) -> Result<Resolution, HandlerError> {
        match self.observations.get(site.name.as_str()) {
            Some(target) => self.check(site, target, rng),
            None => {
                let (value, log_prob) = self.env.draw(site.name, site.dist, rng)?;
                Ok(Resolution::Value { value, log_prob, observed: false })
            }
        }
    }

    fn observe(&mut self, site: Site<'_>, value: &str, rng: &mut RunRng) -> Result<Resolution, HandlerError> {
        let target = self.observations.get(site.name.as_str()).unwrap_or(value);
        self.check(site, target, rng)
    }

    fn tool(&mut self, tool: &str, input: &str) -> Result<String, HandlerError> {
        self.env.call_tool(tool, input)
    }
}

pub fn rejection_infer(
    cascade: &dyn Cascade,
    env: &Env,
    observations: &ObservationSet,
    n: usize,
    seed: u64,
    query: &Query,
) -> Result<InferenceResult, InferenceError> {
    if n == 0 {
        return Err(InferenceError::InvalidArgument("n must be at least 1".into()));
    }
    let mut handler = RejectionHandler::new(env, observations);
    let traces = (0..n as u64)
        .map(|i| run_with_options(cascade, &mut handler, mix64(seed, i), &env.options))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize_forward(traces, query))
}
