use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand_core::SeedableRng;
use thiserror::Error;

use super::{temper, CompletionRequest, CompletionResult, LanguageModel, LmError};
use crate::math::ln;
use crate::rng::{categorical, RunRng};
use crate::runtime::Stop;

/// Padding unit placed before the start of every text.
pub const BOS: &str = "<s>";
const NEWLINE: &str = "\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Unit {
    /// Whitespace-separated words; line breaks are kept as `"\n"` units.
    Word,
    Character,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NGramError {
    #[error("n-gram order must be at least 1")]
    Order,
    #[error("smoothing constant must be finite and positive, got {0}")]
    Alpha(f64),
    #[error("context of length {found} does not match order {order}")]
    ContextLength { order: usize, found: usize },
}

/// Counting n-gram model with add-alpha smoothing.
///
/// `P(u | ctx) = (count(ctx, u) + alpha) / (total(ctx) + alpha * |vocab|)`.
/// When the vocabulary contains `"\n"`, scoring a continuation includes the
/// probability of the terminating line break, matching how sampling stops.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramLM {
    order: usize,
    unit: Unit,
    alpha: f64,
    counts: BTreeMap<Vec<String>, BTreeMap<String, u64>>,
    vocab: BTreeSet<String>,
}

impl Default for NGramLM {
    /// Word bigram with add-one smoothing.
    fn default() -> Self {
        Self::new(2, Unit::Word, 1.0).expect("valid defaults")
    }
}

impl NGramLM {
    pub fn new(order: usize, unit: Unit, alpha: f64) -> Result<Self, NGramError> {
        if order == 0 {
            return Err(NGramError::Order);
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(NGramError::Alpha(alpha));
        }
        Ok(Self { order, unit, alpha, counts: BTreeMap::new(), vocab: BTreeSet::new() })
    }

    /// Rebuilds a model from stored counts.
    pub fn from_parts(
        order: usize,
        unit: Unit,
        alpha: f64,
        vocab: impl IntoIterator<Item = String>,
        counts: impl IntoIterator<Item = (Vec<String>, String, u64)>,
    ) -> Result<Self, NGramError> {
        let mut model = Self::new(order, unit, alpha)?;
        model.vocab.extend(vocab);
        for (context, unit, count) in counts {
            if context.len() != order - 1 {
                return Err(NGramError::ContextLength { order, found: context.len() });
            }
            model.vocab.insert(unit.clone());
            *model.counts.entry(context).or_default().entry(unit).or_default() += count;
        }
        Ok(model)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocab(&self) -> &BTreeSet<String> {
        &self.vocab
    }

    /// `(context, unit, count)` for every non-zero count.
    pub fn counts(&self) -> impl Iterator<Item = (&[String], &str, u64)> {
        self.counts
            .iter()
            .flat_map(|(ctx, next)| next.iter().map(move |(u, c)| (ctx.as_slice(), u.as_str(), *c)))
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        match self.unit {
            Unit::Character => text.chars().map(|c| c.to_string()).collect(),
            Unit::Word => {
                let mut units = Vec::new();
                for (i, line) in text.split('\n').enumerate() {
                    if i > 0 {
                        units.push(NEWLINE.to_string());
                    }
                    units.extend(line.split_whitespace().map(ToString::to_string));
                }
                units
            }
        }
    }

    fn detokenize(&self, units: &[String]) -> String {
        match self.unit {
            Unit::Character => units.concat(),
            Unit::Word => {
                let mut out = String::new();
                let mut after_word = false;
                for u in units {
                    if u == NEWLINE {
                        out.push('\n');
                        after_word = false;
                    } else {
                        if after_word {
                            out.push(' ');
                        }
                        out.push_str(u);
                        after_word = true;
                    }
                }
                out
            }
        }
    }

    fn padded(&self, text: &str) -> Vec<String> {
        let mut units: Vec<String> = (1..self.order).map(|_| BOS.to_string()).collect();
        units.extend(self.tokenize(text));
        units
    }

    fn context_of<'h>(&self, history: &'h [String]) -> &'h [String] {
        &history[history.len() + 1 - self.order..]
    }

    /// Returns a new model with the corpus counts added; `self` is unchanged.
    pub fn update<S: AsRef<str>>(&self, corpus: &[S]) -> Self {
        let mut next = self.clone();
        for text in corpus {
            let units = next.padded(text.as_ref());
            for i in (self.order - 1)..units.len() {
                let context = units[i + 1 - self.order..i].to_vec();
                let unit = units[i].clone();
                next.vocab.insert(unit.clone());
                *next.counts.entry(context).or_default().entry(unit).or_default() += 1;
            }
        }
        next
    }

    pub fn count(&self, context: &[String], unit: &str) -> u64 {
        self.counts.get(context).and_then(|m| m.get(unit)).copied().unwrap_or(0)
    }

    /// Smoothed `P(unit | context)`; `context` holds the last `order - 1` units.
    pub fn prob(&self, context: &[String], unit: &str) -> f64 {
        if !self.vocab.contains(unit) {
            return 0.0;
        }
        let (count, total) = match self.counts.get(context) {
            Some(next) => (next.get(unit).copied().unwrap_or(0), next.values().sum::<u64>()),
            None => (0, 0),
        };
        (count as f64 + self.alpha) / (total as f64 + self.alpha * self.vocab.len() as f64)
    }

    /// Full conditional distribution over the vocabulary, in vocabulary order.
    pub fn distribution(&self, context: &[String]) -> Vec<(String, f64)> {
        self.vocab.iter().map(|u| (u.clone(), self.prob(context, u))).collect()
    }
}

impl LanguageModel for NGramLM {
    fn sample(&self, request: &CompletionRequest) -> Result<CompletionResult, LmError> {
        if self.vocab.is_empty() {
            return Err(LmError::EmptyVocabulary);
        }
        let mut rng = RunRng::seed_from_u64(request.rng_seed);
        let mut history = self.padded(&request.prompt);
        let budget = match request.stop {
            Stop::TokenBudget(n) => n.min(request.max_length),
            _ => request.max_length,
        };
        let mut units: Vec<String> = Vec::new();
        let mut log_prob = 0.0;
        for _ in 0..budget {
            let dist = temper(&self.distribution(self.context_of(&history)), request.temperature);
            let weights: Vec<f64> = dist.iter().map(|(_, p)| *p).collect();
            let i = categorical(&mut rng, &weights).expect("smoothed distributions are positive");
            let (unit, p) = &dist[i];
            log_prob += ln(*p);
            if request.stop == Stop::Newline && unit == NEWLINE {
                break;
            }
            history.push(unit.clone());
            units.push(unit.clone());
            if let Stop::Delimiter(delim) = &request.stop {
                let text = self.detokenize(&units);
                if let Some(text) = text.strip_suffix(delim.as_str()) {
                    return Ok(CompletionResult { text: text.to_string(), log_prob });
                }
            }
        }
        Ok(CompletionResult { text: self.detokenize(&units), log_prob })
    }

    fn logprob(&self, prompt: &str, continuation: &str) -> Result<f64, LmError> {
        if self.vocab.is_empty() {
            return Err(LmError::EmptyVocabulary);
        }
        let mut history = self.padded(prompt);
        let mut total = 0.0;
        let mut units = self.tokenize(continuation);
        if self.vocab.contains(NEWLINE) {
            units.push(NEWLINE.to_string());
        }
        for unit in units {
            let p = self.prob(self.context_of(&history), &unit);
            if p == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            total += ln(p);
            history.push(unit);
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(x: &str) -> String {
        x.to_string()
    }

    #[test]
    fn unigram_counts_with_add_one() {
        let m = NGramLM::new(1, Unit::Word, 1.0).unwrap().update(&["a a b"]);
        assert!((m.prob(&[], "a") - 3.0 / 5.0).abs() < 1e-12);
        assert!((m.prob(&[], "b") - 2.0 / 5.0).abs() < 1e-12);
        assert!((m.logprob("", "a").unwrap() - ln(3.0 / 5.0)).abs() < 1e-12);
    }

    #[test]
    fn single_symbol_vocab() {
        let m = NGramLM::new(1, Unit::Word, 1.0).unwrap().update(&["a"]);
        assert_eq!(m.prob(&[], "a"), 1.0);
    }

    #[test]
    fn update_is_functional_and_additive() {
        let base = NGramLM::default();
        let once = base.update(&["x y", "y z"]);
        let twice = base.update(&["x y"]).update(&["y z"]);
        assert_eq!(once, twice);
        assert_eq!(base.vocab().len(), 0);
    }

    #[test]
    fn bigram_contexts_are_padded() {
        let m = NGramLM::default().update(&["a b"]);
        assert_eq!(m.count(&[s(BOS)], "a"), 1);
        assert_eq!(m.count(&[s("a")], "b"), 1);
    }

    #[test]
    fn newline_units_terminate_sampling() {
        let m = NGramLM::new(2, Unit::Word, 1e-6).unwrap().update(&["go home\n"]);
        let req = CompletionRequest { prompt: s("go"), temperature: 1.0, stop: Stop::Newline, max_length: 8, rng_seed: 3 };
        let out = m.sample(&req).unwrap();
        assert_eq!(out.text, "home");
        let scored = m.logprob("go", "home").unwrap();
        assert!((out.log_prob - scored).abs() < 1e-12);
    }

    #[test]
    fn token_budget_caps_length() {
        let m = NGramLM::new(1, Unit::Character, 1.0).unwrap().update(&["ab"]);
        let req = CompletionRequest { prompt: s(""), temperature: 1.0, stop: Stop::TokenBudget(3), max_length: 8, rng_seed: 1 };
        assert_eq!(m.sample(&req).unwrap().text.chars().count(), 3);
    }

    #[test]
    fn delimiter_is_stripped() {
        let m = NGramLM::new(2, Unit::Character, 1e-9).unwrap().update(&["ab;"]);
        let req = CompletionRequest {
            prompt: s("a"),
            temperature: 0.0,
            stop: Stop::Delimiter(s(";")),
            max_length: 8,
            rng_seed: 1,
        };
        assert_eq!(m.sample(&req).unwrap().text, "b");
    }

    #[test]
    fn empty_vocabulary_cannot_sample() {
        let m = NGramLM::default();
        let req = CompletionRequest { prompt: s("x"), temperature: 1.0, stop: Stop::Newline, max_length: 8, rng_seed: 1 };
        assert_eq!(m.sample(&req), Err(LmError::EmptyVocabulary));
        assert_eq!(m.support("x"), Err(LmError::Unsupported("support enumeration")));
    }

    #[test]
    fn out_of_vocab_scores_negative_infinity() {
        let m = NGramLM::default().update(&["a b"]);
        assert_eq!(m.logprob("a", "zzz").unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn word_detokenization_round_trips_lines() {
        let m = NGramLM::default();
        let units = m.tokenize("a b\nc");
        assert_eq!(units, alloc::vec![s("a"), s("b"), s("\n"), s("c")]);
        assert_eq!(m.detokenize(&units), "a b\nc");
    }

    proptest! {
        #[test]
        fn conditionals_are_proper(
            corpus in proptest::collection::vec("[abc \n]{1,12}", 1..6),
            order in 1usize..4,
            alpha in 0.01f64..2.0,
            ctx in proptest::collection::vec("[abcd]", 0..3),
        ) {
            let m = NGramLM::new(order, Unit::Character, alpha).unwrap().update(&corpus);
            let mut context: Vec<String> = (1..order).map(|_| s(BOS)).collect();
            context.extend(ctx);
            let context = &context[context.len() + 1 - order..];
            let total: f64 = m.distribution(context).iter().map(|(_, p)| p).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn updates_never_decrease_counts(a in "[ab ]{1,10}", b in "[ab ]{1,10}") {
            let m1 = NGramLM::new(2, Unit::Character, 1.0).unwrap().update(&[a]);
            let m2 = m1.update(&[b]);
            for (ctx, u, c) in m1.counts() {
                prop_assert!(m2.count(ctx, u) >= c);
            }
        }
    }
}
