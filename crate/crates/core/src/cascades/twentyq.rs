//! Twenty questions between two model-driven agents.
//!
//! Bob asks yes/no questions that start with "Is the concept"; Alice knows
//! the concept and answers. A game stops when Bob names the concept, when
//! Bob's turn is not a question, or after `max_questions` rounds.
//!
//! Records per round `r` (1-based): `bob/r` is Bob's completion,
//! `raw_alice/r` is Alice's unprocessed completion and `alice/r` is the
//! truncated, masked reply that enters the shared conversation.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use super::CascadeError;
use crate::env::{Env, ForwardHandler};
use crate::lm::ScriptedLM;
use crate::prompting::{FormatterId, RAW};
use crate::rng::mix64;
use crate::runtime::{run_with_options, DistSpec, FnCascade, RunError, Trace, TraceStatus};

pub const BOB_SEED_PREFIX: &str = "Is the concept";
pub const MASK_TOKEN: &str = "concept";
pub const NOT_A_QUESTION: &str = "Bob response is not a question.";
pub const OUT_OF_TURNS: &str = "Ran out of turns.";
pub const BOB_BACKEND: &str = "bob";
pub const ALICE_BACKEND: &str = "alice";

const RULES_TO_ALICE: &str = "Hello Alice, we are going to play twenty questions. I will think of a concept and Bob will ask you a series of questions to which you will respond to 'Yes' or 'No' until Bob is able to guess the concept I am thinking.";
const RULES_TO_BOB: &str = "Hello Bob, we are going to play twenty questions. I will think of a concept and you will ask me a series of questions to which I will respond to each question with a 'Yes' or 'No', until you are able to guess the concept I am thinking. What is your first question?";
const TURN: &str = "\nX 0 Is the concept";

pub fn alice_prompt(concept: &str) -> String {
    alloc::format!(
        "X 0 Hello Alice, I am Bob.\nX 1 Hello Bob \nX 2 {RULES_TO_ALICE}\nX 1 Sounds good. What is the concept?\nX 2 The concept is '{concept}'.\nX 1 The concept is {concept} ? Perfect, I got it. Bob, what is your first question?"
    )
}

pub fn bob_prompt() -> String {
    alloc::format!("X 0 Hello Alice, I am Bob.\nX 1 {RULES_TO_BOB}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig {
    pub concept: String,
    pub max_questions: usize,
    pub temperature: f64,
}

impl GameConfig {
    pub fn new(concept: impl Into<String>) -> Self {
        Self { concept: concept.into(), max_questions: 10, temperature: 1.0 }
    }

    pub fn max_questions(mut self, n: usize) -> Self {
        self.max_questions = n;
        self
    }

    pub fn temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn validate(&self) -> Result<(), CascadeError> {
        if self.concept.trim().is_empty() {
            return Err(CascadeError::InvalidConfig("concept must be non-empty".into()));
        }
        if self.max_questions == 0 {
            return Err(CascadeError::InvalidConfig("max_questions must be at least 1".into()));
        }
        Ok(())
    }
}

/// Lowercases the whole reply and replaces every occurrence of the concept
/// with "concept" when the concept occurs in it, ignoring case.
pub fn mask_concept(reply: &str, concept: &str) -> String {
    let lowered = reply.to_lowercase();
    let needle = concept.to_lowercase();
    if needle.is_empty() || !lowered.contains(&needle) {
        return reply.to_string();
    }
    lowered.replace(&needle, MASK_TOKEN)
}

fn tokens(text: &str) -> Vec<String> {
    text.replace('?', "").to_lowercase().split_whitespace().map(String::from).collect()
}

/// True when the concept's words appear as a contiguous run of Bob's words
/// (question marks removed, case ignored).
pub fn detect_success(bob_response: &str, concept: &str) -> bool {
    let needle = tokens(concept);
    if needle.is_empty() {
        return false;
    }
    tokens(bob_response).windows(needle.len()).any(|w| w == needle.as_slice())
}

/// Alice's completion up to the first ".", newline or "X".
pub fn truncate_reply(raw: &str) -> &str {
    raw.split(['.', '\n', 'X']).next().unwrap_or("")
}

pub fn twenty_questions_program(config: &GameConfig) -> Result<FnCascade, CascadeError> {
    config.validate()?;
    let config = config.clone();
    let alice = alice_prompt(&config.concept);
    let bob = bob_prompt();
    Ok(FnCascade::new("twentyq", move |cx| {
        let raw = |backend: &str, prompt: String| {
            DistSpec::new()
                .backend(backend)
                .formatter(FormatterId::custom(RAW))
                .given("prompt", prompt)
                .temperature(config.temperature)
        };
        let mut common = String::new();
        for round in 1..=config.max_questions {
            let mut turn = String::from(TURN);
            let question = cx.sample(alloc::format!("bob/{round}"), raw(BOB_BACKEND, alloc::format!("{bob}{common}{turn}")))?;
            if !question.contains('?') {
                return Err(cx.reject(NOT_A_QUESTION));
            }
            turn.push_str(&question);
            turn.push_str("\nX 1 ");
            if detect_success(&question, &config.concept) {
                return Err(cx.success(round.to_string()));
            }
            let completion =
                cx.sample(alloc::format!("raw_alice/{round}"), raw(ALICE_BACKEND, alloc::format!("{alice}{common}{turn}")))?;
            let reply = mask_concept(truncate_reply(&completion), &config.concept);
            let reply = cx.deterministic(alloc::format!("alice/{round}"), reply)?;
            turn.push_str(&reply);
            common.push_str(&turn);
        }
        Err(cx.reject(OUT_OF_TURNS))
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameStatus {
    Solved(usize),
    RejectedMalformed(usize),
    OutOfTurns,
    /// The run hit the effect budget or was rejected for another reason.
    Unfinished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Speaker {
    Bob,
    Alice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameOutcome {
    pub status: GameStatus,
    pub transcript: Vec<(Speaker, String)>,
}

impl GameOutcome {
    pub fn from_trace(trace: &Trace) -> Self {
        let mut transcript = Vec::new();
        let mut bob_turns = 0;
        for r in &trace.records {
            match r.name.base() {
                "bob" => {
                    bob_turns += 1;
                    transcript.push((Speaker::Bob, alloc::format!("{BOB_SEED_PREFIX}{}", r.value)));
                }
                "alice" => transcript.push((Speaker::Alice, r.value.clone())),
                _ => {}
            }
        }
        let status = match &trace.status {
            TraceStatus::Completed(round) => round.parse().map_or(GameStatus::Unfinished, GameStatus::Solved),
            TraceStatus::Rejected(reason) if reason == NOT_A_QUESTION => GameStatus::RejectedMalformed(bob_turns),
            TraceStatus::Rejected(reason) if reason == OUT_OF_TURNS => GameStatus::OutOfTurns,
            _ => GameStatus::Unfinished,
        };
        Self { status, transcript }
    }

    pub fn solved_round(&self) -> Option<usize> {
        match self.status {
            GameStatus::Solved(r) => Some(r),
            _ => None,
        }
    }
}

/// Plays one game. Bob and Alice use the `bob` and `alice` backends of
/// `env` when registered and its default backend otherwise.
pub fn play(config: &GameConfig, env: &Env, seed: u64) -> Result<(GameOutcome, Trace), RunError> {
    let program = twenty_questions_program(config).map_err(|e| RunError::Program {
        source: crate::runtime::ProgramError::Fault(e.to_string()),
        partial: alloc::boxed::Box::new(Trace {
            records: Vec::new(),
            status: TraceStatus::Exhausted,
            seed,
            program_id: "twentyq".into(),
        }),
    })?;
    let trace = run_with_options(&program, &mut ForwardHandler::new(env), seed, &env.options)?;
    Ok((GameOutcome::from_trace(&trace), trace))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub samples_per_concept: usize,
    pub temperature: f64,
    pub max_questions: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { samples_per_concept: 50, temperature: 1.0, max_questions: 10 }
    }
}

/// Seed of game `sample` for concept number `concept`.
pub fn game_seed(seed: u64, concept: usize, sample: usize) -> u64 {
    mix64(mix64(seed, concept as u64), sample as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptReport {
    pub concept: String,
    pub solved: bool,
    pub mean_solved_round: Option<f64>,
    pub games: Vec<GameOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwentyQReport {
    pub concepts: Vec<ConceptReport>,
    pub solve_fraction: f64,
    /// Game traces in (concept, sample) order.
    pub traces: Vec<Trace>,
}

impl TwentyQReport {
    /// Aggregates per-concept games. A concept counts as solved when any of
    /// its games is.
    pub fn from_games(games: Vec<(String, Vec<(GameOutcome, Trace)>)>) -> Self {
        let mut concepts = Vec::new();
        let mut traces = Vec::new();
        for (concept, played) in games {
            let rounds: Vec<usize> = played.iter().filter_map(|(g, _)| g.solved_round()).collect();
            let mean_solved_round =
                (!rounds.is_empty()).then(|| rounds.iter().sum::<usize>() as f64 / rounds.len() as f64);
            let mut outcomes = Vec::with_capacity(played.len());
            for (g, t) in played {
                outcomes.push(g);
                traces.push(t);
            }
            concepts.push(ConceptReport { concept, solved: !rounds.is_empty(), mean_solved_round, games: outcomes });
        }
        let solved = concepts.iter().filter(|c| c.solved).count();
        let solve_fraction = if concepts.is_empty() { 0.0 } else { solved as f64 / concepts.len() as f64 };
        Self { concepts, solve_fraction, traces }
    }
}

impl fmt::Display for TwentyQReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.concepts.iter().map(|c| c.concept.len()).max().unwrap_or(0).max(7);
        writeln!(f, "{:<width$}  solved  games  mean round", "concept")?;
        for c in &self.concepts {
            let mean = c.mean_solved_round.map_or_else(|| "-".to_string(), |m| alloc::format!("{m:.2}"));
            writeln!(f, "{:<width$}  {:<6}  {:<5}  {}", c.concept, if c.solved { "yes" } else { "no" }, c.games.len(), mean)?;
        }
        write!(f, "solve fraction: {:.4}", self.solve_fraction)
    }
}

pub fn evaluate_twentyq(concepts: &[String], config: &EvalConfig, env: &Env, seed: u64) -> Result<TwentyQReport, RunError> {
    let mut games = Vec::with_capacity(concepts.len());
    for (ci, concept) in concepts.iter().enumerate() {
        let game = GameConfig::new(concept.clone()).max_questions(config.max_questions).temperature(config.temperature);
        let played = (0..config.samples_per_concept)
            .map(|si| play(&game, env, game_seed(seed, ci, si)))
            .collect::<Result<Vec<_>, _>>()?;
        games.push((concept.clone(), played));
    }
    Ok(TwentyQReport::from_games(games))
}

/// A Bob that asks about `guesses` in order, one per round, and falls back
/// to a question about "something else" once they run out.
pub fn scripted_bob(guesses: Vec<String>) -> ScriptedLM {
    ScriptedLM::new(move |prompt| {
        let round = prompt.matches(TURN).count().max(1);
        match guesses.get(round - 1) {
            Some(g) => alloc::format!(" {g}?"),
            None => " something else?".into(),
        }
    })
}

/// An Alice that answers "Yes" exactly when Bob's latest question names
/// the concept from her prompt.
pub fn scripted_alice() -> ScriptedLM {
    ScriptedLM::new(|prompt| {
        let concept = prompt
            .lines()
            .find_map(|l| l.strip_prefix("X 2 The concept is '").and_then(|rest| rest.strip_suffix("'.")))
            .unwrap_or("");
        let question = prompt.rsplit(TURN).next().unwrap_or("");
        let question = question.split("\nX 1 ").next().unwrap_or("");
        if detect_success(question, concept) { "Yes".into() } else { "No".into() }
    })
}
