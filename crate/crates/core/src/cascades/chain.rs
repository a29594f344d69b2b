use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::CascadeError;
use crate::inference::ObservationSet;
use crate::runtime::{DistSpec, FnCascade, DEFAULT_BACKEND};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChainVariant {
    Qa,
    Qta,
    QtaCritique,
}

impl ChainVariant {
    pub fn variables(self) -> &'static [&'static str] {
        match self {
            ChainVariant::Qa => &["question", "answer"],
            ChainVariant::Qta => &["question", "thought", "answer"],
            ChainVariant::QtaCritique => &["question", "thought", "answer", "critique"],
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            ChainVariant::Qa => "qa",
            ChainVariant::Qta => "qta",
            ChainVariant::QtaCritique => "qta_critique",
        }
    }

    pub fn parse(id: &str) -> Option<Self> {
        [ChainVariant::Qa, ChainVariant::Qta, ChainVariant::QtaCritique].into_iter().find(|v| v.id() == id)
    }
}

impl fmt::Display for ChainVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// A chain in which every variable is conditioned on all earlier ones.
/// Observed variables become observe sites; the rest are sampled. The
/// program returns the answer.
#[derive(Debug, Clone)]
pub struct ChainBuilder {
    variant: ChainVariant,
    observations: Vec<(String, String)>,
    temperature: f64,
    backend: String,
}

impl ChainBuilder {
    pub fn new(variant: ChainVariant) -> Self {
        Self { variant, observations: Vec::new(), temperature: 1.0, backend: DEFAULT_BACKEND.into() }
    }

    pub fn observe(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.observations.push((name.into(), value.into()));
        self
    }

    pub fn observations(mut self, observations: &ObservationSet) -> Self {
        for (k, v) in observations.iter() {
            self = self.observe(k, v);
        }
        self
    }

    pub fn temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn backend(mut self, backend: impl Into<String>) -> Self {
        self.backend = backend.into();
        self
    }

    pub fn build(self) -> Result<FnCascade, CascadeError> {
        let variables = self.variant.variables();
        for (name, _) in &self.observations {
            if !variables.contains(&name.as_str()) {
                return Err(CascadeError::UnknownObservation { variable: name.clone(), program: self.variant.id().into() });
            }
        }
        let ChainBuilder { variant, observations, temperature, backend } = self;
        Ok(FnCascade::new(variant.id(), move |cx| {
            let mut prior: Vec<(&str, String)> = Vec::new();
            for &name in variables {
                let mut dist = DistSpec::new().backend(backend.clone()).temperature(temperature);
                for (k, v) in &prior {
                    dist = dist.given(*k, v.clone());
                }
                let value = match observations.iter().find(|(k, _)| k == name) {
                    Some((_, observed)) => cx.observe(name, dist, observed.clone())?,
                    None => cx.sample(name, dist)?,
                };
                prior.push((name, value));
            }
            Ok(prior.into_iter().find(|(k, _)| *k == "answer").map(|(_, v)| v).unwrap_or_default())
        }))
    }
}

pub fn build_chain_program(variant: ChainVariant, observations: &ObservationSet) -> Result<FnCascade, CascadeError> {
    ChainBuilder::new(variant).observations(observations).build()
}
