//! Language model cascades: probabilistic programs whose random variables are
//! strings drawn from language models.
//!
//! A cascade is written as a closure over a [`Cx`](runtime::Cx) that issues
//! `sample`, `observe` and `tool` requests. The runtime turns those requests
//! into [`Effect`](runtime::Effect)s that an inference engine resolves. Every
//! engine in [`inference`] drives programs through the same resumable step
//! contract, so a program never knows whether it is being forward sampled,
//! enumerated exactly, or pushed through a particle filter.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the remote
//! completion client and the command line live in the `cascade` crate.

#![cfg_attr(not(test), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod cascades;
pub mod env;
pub mod fixtures;
pub mod inference;
pub mod lm;
mod math;
pub mod prompting;
pub mod rng;
pub mod runtime;
pub mod star;
pub mod tools;

pub use env::Env;
pub use inference::{InferenceError, InferenceResult, ObservationSet, Query, WeightedTrace};
pub use lm::{CompletionRequest, CompletionResult, LanguageModel, LmError, NGramLM, ScriptedLM, TableLM, Unit};
pub use prompting::{normalize_answer, render_prompt, BucketKey, FormatterId, FormatterRegistry};
pub use rng::{mix64, RunRng};
pub use runtime::{
    log_joint, replay, run, run_with_options, Cascade, Cx, DistSpec, Effect, ExampleSet, FnCascade, Halt, Handler,
    Program, RunError, RunOptions, Step, Stop, Trace, TraceRecord, TraceStatus, VariableName,
};
pub use tools::ToolRegistry;
