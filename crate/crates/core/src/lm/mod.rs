//! Language-model backends.

mod ngram;
mod scripted;
mod table;

pub use ngram::{NGramLM, NGramError, Unit, BOS};
pub use scripted::ScriptedLM;
pub use table::{TableError, TableLM};

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::math::{exp, ln};
use crate::runtime::Stop;

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub stop: Stop,
    pub max_length: usize,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    /// Log-probability of `text` at the request temperature, or NaN when the
    /// backend did not report one.
    pub log_prob: f64,
}

impl CompletionResult {
    pub fn is_scored(&self) -> bool {
        !self.log_prob.is_nan()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LmError {
    #[error("unknown prompt {prompt:?}; nearest known prompt is {nearest:?}")]
    UnknownPrompt { prompt: String, nearest: Option<String> },
    #[error("backend does not support {0}")]
    Unsupported(&'static str),
    #[error("backend has an empty vocabulary")]
    EmptyVocabulary,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("remote completion failed after {attempts} attempt(s): {message}")]
    Remote { attempts: u32, status: Option<u16>, message: String },
    #[error("malformed response at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
}

/// Anything that can sample and score string completions.
pub trait LanguageModel: Send + Sync {
    fn sample(&self, request: &CompletionRequest) -> Result<CompletionResult, LmError>;

    /// Natural-log probability of `continuation` given `prompt` at temperature 1.
    /// Continuations outside the support score `f64::NEG_INFINITY`.
    fn logprob(&self, prompt: &str, continuation: &str) -> Result<f64, LmError>;

    /// Exact completion distribution for `prompt`, for finite-support backends.
    fn support(&self, _prompt: &str) -> Result<Vec<(String, f64)>, LmError> {
        Err(LmError::Unsupported("support enumeration"))
    }

    fn is_enumerable(&self) -> bool {
        false
    }
}

/// Rescales a distribution to temperature `tau`: probabilities are
/// proportional to `p^(1/tau)`. `tau == 0` keeps only the argmax, breaking
/// ties on the lexicographically smallest completion. Zero-probability
/// entries are dropped.
pub fn temper(dist: &[(String, f64)], tau: f64) -> Vec<(String, f64)> {
    let positive: Vec<&(String, f64)> = dist.iter().filter(|(_, p)| *p > 0.0).collect();
    if positive.is_empty() {
        return Vec::new();
    }
    if tau == 0.0 {
        let mut best = positive[0];
        for entry in &positive[1..] {
            if entry.1 > best.1 || (entry.1 == best.1 && entry.0 < best.0) {
                best = entry;
            }
        }
        return alloc::vec![(best.0.clone(), 1.0)];
    }
    if tau == 1.0 {
        let total: f64 = positive.iter().map(|(_, p)| p).sum();
        return positive.iter().map(|(s, p)| (s.clone(), p / total)).collect();
    }
    let logits: Vec<f64> = positive.iter().map(|(_, p)| ln(*p) / tau).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| exp(l - max)).collect();
    let total: f64 = weights.iter().sum();
    positive.iter().zip(weights).map(|((s, _), w)| (s.clone(), w / total)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use proptest::prelude::*;

    fn dist(entries: &[(&str, f64)]) -> Vec<(String, f64)> {
        entries.iter().map(|(s, p)| (s.to_string(), *p)).collect()
    }

    #[test]
    fn zero_temperature_is_argmax_with_lexicographic_ties() {
        assert_eq!(temper(&dist(&[("b", 0.5), ("a", 0.5)]), 0.0), dist(&[("a", 1.0)]));
        assert_eq!(temper(&dist(&[("b", 0.6), ("a", 0.4)]), 0.0), dist(&[("b", 1.0)]));
    }

    #[test]
    fn unit_temperature_is_identity() {
        let d = dist(&[("x", 0.25), ("y", 0.75)]);
        assert_eq!(temper(&d, 1.0), d);
    }

    #[test]
    fn half_temperature_squares_probabilities() {
        let t = temper(&dist(&[("x", 0.25), ("y", 0.75)]), 0.5);
        let z = 0.25f64 * 0.25 + 0.75 * 0.75;
        assert!((t[0].1 - 0.0625 / z).abs() < 1e-12);
        assert!((t[1].1 - 0.5625 / z).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn lowering_temperature_sharpens_the_mode(
            ps in proptest::collection::vec(0.01f64..1.0, 2..5),
            hi in 0.05f64..4.0,
            frac in 0.0f64..1.0,
        ) {
            let total: f64 = ps.iter().sum();
            let d: Vec<(String, f64)> = ps.iter().enumerate()
                .map(|(i, p)| (alloc::format!("c{i}"), p / total)).collect();
            let lo = hi * frac;
            let mode = |t: &Vec<(String, f64)>| t.iter().map(|(_, p)| *p).fold(0.0, f64::max);
            prop_assert!(mode(&temper(&d, lo)) + 1e-12 >= mode(&temper(&d, hi)));
        }
    }
}
