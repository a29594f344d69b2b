use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand_core::SeedableRng;
use thiserror::Error;

use super::{temper, CompletionRequest, CompletionResult, LanguageModel, LmError};
use crate::math::ln;
use crate::rng::{categorical, RunRng};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TableError {
    #[error("prompt {0:?} has no completions")]
    Empty(String),
    #[error("prompt {prompt:?}: completion {completion:?} has non-positive probability")]
    NonPositive { prompt: String, completion: String },
    #[error("prompt {prompt:?}: probabilities sum to {sum}, not 1")]
    NotNormalized { prompt: String, sum: f64 },
    #[error("prompt {prompt:?}: completion {completion:?} listed twice")]
    Duplicate { prompt: String, completion: String },
    #[error("prompt {0:?} listed twice")]
    DuplicatePrompt(String),
}

/// Exact finite-support model keyed on the rendered prompt string.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TableLM {
    table: BTreeMap<String, Vec<(String, f64)>>,
}

const SUM_TOLERANCE: f64 = 1e-9;

impl TableLM {
    pub fn new<P, C>(entries: impl IntoIterator<Item = (P, Vec<(C, f64)>)>) -> Result<Self, TableError>
    where
        P: Into<String>,
        C: Into<String>,
    {
        let mut table = BTreeMap::new();
        for (prompt, completions) in entries {
            let prompt: String = prompt.into();
            let completions: Vec<(String, f64)> = completions.into_iter().map(|(c, p)| (c.into(), p)).collect();
            if completions.is_empty() {
                return Err(TableError::Empty(prompt));
            }
            for (i, (c, p)) in completions.iter().enumerate() {
                if !(*p > 0.0 && p.is_finite()) {
                    return Err(TableError::NonPositive { prompt, completion: c.clone() });
                }
                if completions[..i].iter().any(|(prev, _)| prev == c) {
                    return Err(TableError::Duplicate { prompt, completion: c.clone() });
                }
            }
            let sum: f64 = completions.iter().map(|(_, p)| p).sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(TableError::NotNormalized { prompt, sum });
            }
            if table.insert(prompt.clone(), completions).is_some() {
                return Err(TableError::DuplicatePrompt(prompt));
            }
        }
        Ok(Self { table })
    }

    pub fn prompts(&self) -> impl Iterator<Item = &str> {
        self.table.keys().map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &[(String, f64)])> {
        self.table.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    fn lookup(&self, prompt: &str) -> Result<&[(String, f64)], LmError> {
        self.table.get(prompt).map(Vec::as_slice).ok_or_else(|| LmError::UnknownPrompt {
            prompt: prompt.into(),
            nearest: self.nearest(prompt).map(Into::into),
        })
    }

    /// Known prompt sharing the longest common prefix with `prompt`.
    fn nearest(&self, prompt: &str) -> Option<&str> {
        let shared = |key: &str| key.bytes().zip(prompt.bytes()).take_while(|(a, b)| a == b).count();
        let mut best: Option<(&str, usize)> = None;
        for key in self.table.keys() {
            let n = shared(key);
            if best.is_none_or(|(_, m)| n > m) {
                best = Some((key, n));
            }
        }
        best.map(|(k, _)| k)
    }
}

impl LanguageModel for TableLM {
    fn sample(&self, request: &CompletionRequest) -> Result<CompletionResult, LmError> {
        let dist = temper(self.lookup(&request.prompt)?, request.temperature);
        let weights: Vec<f64> = dist.iter().map(|(_, p)| *p).collect();
        let mut rng = RunRng::seed_from_u64(request.rng_seed);
        let i = categorical(&mut rng, &weights).expect("tables hold positive probabilities");
        let (text, p) = &dist[i];
        Ok(CompletionResult { text: text.clone(), log_prob: ln(*p) })
    }

    fn logprob(&self, prompt: &str, continuation: &str) -> Result<f64, LmError> {
        let support = self.lookup(prompt)?;
        Ok(support.iter().find(|(c, _)| c == continuation).map_or(f64::NEG_INFINITY, |(_, p)| ln(*p)))
    }

    fn support(&self, prompt: &str) -> Result<Vec<(String, f64)>, LmError> {
        Ok(self.lookup(prompt)?.to_vec())
    }

    fn is_enumerable(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::exp;
    use crate::runtime::Stop;
    use alloc::string::ToString;

    fn request(prompt: &str, temperature: f64, seed: u64) -> CompletionRequest {
        CompletionRequest { prompt: prompt.to_string(), temperature, stop: Stop::Newline, max_length: 16, rng_seed: seed }
    }

    #[test]
    fn deterministic_entry() {
        let lm = TableLM::new([("P", alloc::vec![("x", 1.0)])]).unwrap();
        for seed in 0..20 {
            assert_eq!(lm.sample(&request("P", 1.0, seed)).unwrap(), CompletionResult { text: "x".into(), log_prob: 0.0 });
        }
        assert_eq!(lm.logprob("P", "x").unwrap(), 0.0);
        assert_eq!(lm.support("P").unwrap(), alloc::vec![("x".to_string(), 1.0)]);
    }

    #[test]
    fn zero_temperature_breaks_ties_lexicographically() {
        let lm = TableLM::new([("P", alloc::vec![("b", 0.5), ("a", 0.5)])]).unwrap();
        for seed in 0..20 {
            let r = lm.sample(&request("P", 0.0, seed)).unwrap();
            assert_eq!(r.text, "a");
            assert_eq!(r.log_prob, 0.0);
        }
    }

    #[test]
    fn out_of_support_scores_negative_infinity() {
        let lm = TableLM::new([("P", alloc::vec![("x", 1.0)])]).unwrap();
        assert_eq!(lm.logprob("P", "y").unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn unknown_prompt_reports_nearest_key() {
        let lm = TableLM::new([("Question: a", alloc::vec![("x", 1.0)]), ("Other", alloc::vec![("y", 1.0)])]).unwrap();
        match lm.logprob("Question: b", "x") {
            Err(LmError::UnknownPrompt { nearest, .. }) => assert_eq!(nearest.as_deref(), Some("Question: a")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation() {
        assert!(matches!(TableLM::new([("P", alloc::vec![("x", 0.5)])]), Err(TableError::NotNormalized { .. })));
        assert!(matches!(
            TableLM::new([("P", alloc::vec![("x", 0.5), ("x", 0.5)])]),
            Err(TableError::Duplicate { .. })
        ));
        assert!(matches!(
            TableLM::new([("P", alloc::vec![("x", 1.0), ("y", 0.0)])]),
            Err(TableError::NonPositive { .. })
        ));
        assert!(matches!(TableLM::new([("P", Vec::<(&str, f64)>::new())]), Err(TableError::Empty(_))));
    }

    #[test]
    fn support_probabilities_sum_to_one() {
        let lm = TableLM::new([("P", alloc::vec![("a", 0.2), ("b", 0.3), ("c", 0.5)])]).unwrap();
        let sum: f64 = lm.support("P").unwrap().iter().map(|(c, _)| exp(lm.logprob("P", c).unwrap())).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }
}
