use alloc::string::String;
use alloc::vec::Vec;

use super::InferenceError;
use crate::env::Env;
use crate::math::exp;
use crate::prompting::FormatterId;
use crate::runtime::{DistSpec, Trace, VariableName, DEFAULT_BACKEND};

/// The natural-language positive verdict used by default.
pub const DEFAULT_POSITIVE: &str = "The reasoning and solution are correct.";

/// How candidates are shown to the verifier model.
///
/// The verifier prompt conditions on the candidate's records (all of them,
/// or only `fields` when set, in that order) and targets `target`. The score
/// of a candidate is the probability of `positive` under that prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct Verifier {
    pub backend: String,
    pub positive: String,
    pub fields: Option<Vec<String>>,
    pub target: String,
    pub formatter: FormatterId,
}

impl Default for Verifier {
    fn default() -> Self {
        Self {
            backend: DEFAULT_BACKEND.into(),
            positive: DEFAULT_POSITIVE.into(),
            fields: None,
            target: "verifier".into(),
            formatter: FormatterId::default(),
        }
    }
}

impl Verifier {
    pub fn new(positive: impl Into<String>) -> Self {
        Self { positive: positive.into(), ..Self::default() }
    }

    pub fn backend(mut self, backend: impl Into<String>) -> Self {
        self.backend = backend.into();
        self
    }

    pub fn fields<S: Into<String>>(mut self, fields: impl IntoIterator<Item = S>) -> Self {
        self.fields = Some(fields.into_iter().map(Into::into).collect());
        self
    }

    pub fn target(mut self, target: impl Into<String>) -> Self {
        self.target = target.into();
        self
    }

    pub fn formatter(mut self, formatter: FormatterId) -> Self {
        self.formatter = formatter;
        self
    }

    /// The distribution the verifier verdict is scored under for `candidate`.
    pub fn dist(&self, candidate: &Trace) -> Result<DistSpec, InferenceError> {
        let mut dist = DistSpec::new().backend(self.backend.clone()).formatter(self.formatter.clone());
        match &self.fields {
            None => {
                for r in &candidate.records {
                    dist = dist.given(r.name.as_str(), r.value.clone());
                }
            }
            Some(fields) => {
                for field in fields {
                    let value = candidate.value(field).ok_or_else(|| {
                        InferenceError::InvalidArgument(alloc::format!("candidate has no `{field}` record"))
                    })?;
                    dist = dist.given(field.clone(), value);
                }
            }
        }
        Ok(dist)
    }

    pub fn score(&self, candidate: &Trace, env: &Env) -> Result<f64, InferenceError> {
        let target = VariableName::new(self.target.clone())
            .map_err(|_| InferenceError::InvalidArgument("verifier target must be non-empty".into()))?;
        let dist = self.dist(candidate)?;
        Ok(exp(env.score(&target, &dist, &self.positive)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifierScore {
    pub index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub best: usize,
    pub scores: Vec<VerifierScore>,
}

impl Ranking {
    pub fn best_score(&self) -> f64 {
        self.scores[self.best].score
    }
}

/// Scores every candidate with the verifier and picks the highest, the
/// lowest index winning ties.
pub fn rank_by_verifier(candidates: &[Trace], verifier: &Verifier, env: &Env) -> Result<Ranking, InferenceError> {
    if candidates.is_empty() {
        return Err(InferenceError::InvalidArgument("no candidates to rank".into()));
    }
    let scores = candidates
        .iter()
        .enumerate()
        .map(|(index, c)| Ok(VerifierScore { index, score: verifier.score(c, env)? }))
        .collect::<Result<Vec<_>, InferenceError>>()?;
    let mut best = 0;
    for s in &scores {
        if s.score > scores[best].score {
            best = s.index;
        }
    }
    Ok(Ranking { best, scores })
}
