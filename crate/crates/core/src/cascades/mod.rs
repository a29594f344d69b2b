//! The canonical cascade programs.

mod chain;
mod selection;
mod tool;
pub mod twentyq;
mod verifier;

pub use chain::{build_chain_program, ChainBuilder, ChainVariant};
pub use selection::{build_selection_inference_program, SelectionInferenceBuilder};
pub use tool::{build_tool_program, ToolProgramBuilder};
pub use verifier::{build_verifier_program, VerifierProgramBuilder};

use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CascadeError {
    #[error("`{variable}` is not a variable of the {program} program")]
    UnknownObservation { variable: String, program: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Treats anything but a "yes" completion as "no".
pub(crate) fn is_yes(value: &str) -> bool {
    crate::prompting::normalize_answer(value).as_str() == "yes"
}
