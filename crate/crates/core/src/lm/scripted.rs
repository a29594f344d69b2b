use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::{CompletionRequest, CompletionResult, LanguageModel, LmError};

/// Deterministic backend driven by a function of the prompt.
///
/// Every prompt has a single completion with probability 1, so the backend
/// is enumerable. Used for scripted agents and tests.
pub struct ScriptedLM {
    respond: Box<dyn Fn(&str) -> String + Send + Sync>,
}

impl ScriptedLM {
    pub fn new(respond: impl Fn(&str) -> String + Send + Sync + 'static) -> Self {
        Self { respond: Box::new(respond) }
    }
}

impl fmt::Debug for ScriptedLM {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScriptedLM")
    }
}

impl LanguageModel for ScriptedLM {
    fn sample(&self, request: &CompletionRequest) -> Result<CompletionResult, LmError> {
        Ok(CompletionResult { text: (self.respond)(&request.prompt), log_prob: 0.0 })
    }

    fn logprob(&self, prompt: &str, continuation: &str) -> Result<f64, LmError> {
        Ok(if (self.respond)(prompt) == continuation { 0.0 } else { f64::NEG_INFINITY })
    }

    fn support(&self, prompt: &str) -> Result<Vec<(String, f64)>, LmError> {
        Ok(alloc::vec![((self.respond)(prompt), 1.0)])
    }

    fn is_enumerable(&self) -> bool {
        true
    }
}
