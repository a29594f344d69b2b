//! Command-line surface. [`run_cli`] parses arguments, executes a command and
//! returns the process exit code: 0 on success, 1 for configuration errors,
//! 2 for failures while running.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cascade_core::cascades::twentyq::{EvalConfig, ALICE_BACKEND, BOB_BACKEND};
use cascade_core::cascades::{ChainBuilder, ChainVariant, SelectionInferenceBuilder, ToolProgramBuilder, VerifierProgramBuilder};
use cascade_core::inference::{beam_map, enumerate_posterior, rejection_infer, self_consistency, smc_infer, DEFAULT_POSITIVE};
use cascade_core::star::{star_loop, StarConfig};
use cascade_core::{Env, FnCascade, InferenceResult, LanguageModel, NGramLM, ObservationSet, Query, ToolRegistry, Trace, Unit};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::config::{load_backend, RemoteSettings, RunConfig};
use crate::formats::{load_concepts, load_dataset, load_examples, load_ngram, save_ngram};
use crate::parallel::{evaluate_twentyq_par, forward_sample_par};
use crate::store::write_jsonl;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

fn config_err(e: impl ToString) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime_err(e: impl ToString) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "cascade", version, about = "Run language model cascades")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run inference over a cascade program.
    Run(RunArgs),
    /// Exact posterior by enumeration (same as `run --engine enumerate`).
    Enumerate(RunArgs),
    /// Play and score twenty-questions games.
    Twentyq(TwentyqArgs),
    /// Bootstrap a rationale model on labeled pairs.
    Star(StarArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RemoteArgs {
    /// Environment variable holding a bearer token for remote backends.
    #[arg(long)]
    pub auth_env: Option<String>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    /// Attempts per remote request, including the first.
    #[arg(long)]
    pub retries: Option<u32>,
}

impl RemoteArgs {
    fn settings(&self) -> RemoteSettings {
        RemoteSettings {
            auth_token_env: self.auth_env.clone(),
            timeout_ms: self.timeout_ms,
            max_attempts: self.retries,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// qa, qta, qta_critique, verifier, selection_inference or tool.
    #[arg(long)]
    pub program: Option<String>,
    /// forward, rejection, enumerate, smc, beam or self_consistency.
    #[arg(long)]
    pub engine: Option<String>,
    /// table:FILE, ngram:FILE, remote:URL or scripted:TEXT.
    #[arg(long)]
    pub backend: Option<String>,
    /// NAME=VALUE; repeatable.
    #[arg(long, value_parser = parse_observation)]
    pub observe: Vec<(String, String)>,
    #[arg(long)]
    pub examples: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub particles: Option<usize>,
    #[arg(long)]
    pub beam_width: Option<usize>,
    #[arg(long)]
    pub ess_threshold: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Variable whose marginal is reported; defaults to the return value.
    #[arg(long)]
    pub query: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write weighted traces here as JSON lines.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub remote: RemoteArgs,
}

fn parse_observation(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    if k.is_empty() {
        return Err("observation name is empty".into());
    }
    Ok((k.to_string(), v.to_string()))
}

impl RunArgs {
    fn flags(&self) -> RunConfig {
        let remote = self.remote.settings();
        RunConfig {
            program: self.program.clone(),
            engine: self.engine.clone(),
            backend: self.backend.clone(),
            observe: self.observe.iter().cloned().collect(),
            examples: self.examples.clone(),
            samples: self.samples,
            particles: self.particles,
            beam_width: self.beam_width,
            ess_threshold: self.ess_threshold,
            max_steps: self.max_steps,
            temperature: self.temperature,
            positive: None,
            query: self.query.clone(),
            seed: self.seed,
            out: self.out.clone(),
            remote,
        }
    }

    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path).map_err(config_err)?,
            None => RunConfig::default(),
        };
        Ok(base.merge(self.flags()))
    }
}

#[derive(Debug, Clone, Args)]
pub struct TwentyqArgs {
    /// One concept per line.
    #[arg(long)]
    pub concepts: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 10)]
    pub max_questions: usize,
    /// Backend for both players unless overridden.
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub bob_backend: Option<String>,
    #[arg(long)]
    pub alice_backend: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub remote: RemoteArgs,
}

#[derive(Debug, Clone, Args)]
pub struct StarArgs {
    /// Tab-separated question/answer lines.
    #[arg(long)]
    pub data: PathBuf,
    /// Starting n-gram model; an empty order-4 word model if omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub examples: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub iters: usize,
    #[arg(long, default_value_t = 8)]
    pub budget: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 { write!(out, "{rendered}") } else { write!(err, "{rendered}") };
            return code;
        }
    };
    match execute(&cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            run_inference(&cfg, out)
        }
        Command::Enumerate(args) => {
            let mut cfg = args.resolve()?;
            cfg.engine = Some("enumerate".into());
            run_inference(&cfg, out)
        }
        Command::Twentyq(args) => run_twentyq(args, out),
        Command::Star(args) => run_star(args, out),
    }
}

const ENGINES: &[&str] = &["forward", "rejection", "enumerate", "smc", "beam", "self_consistency"];

/// A fully checked run: every referenced file has been loaded.
pub struct Prepared {
    pub program_name: String,
    pub engine: String,
    pub program: FnCascade,
    pub env: Env,
    pub observations: ObservationSet,
    pub query: Query,
    pub seed: u64,
    pub samples: usize,
    pub particles: usize,
    pub beam_width: usize,
    pub ess_threshold: f64,
}

fn at_least_one(name: &str, value: usize) -> Result<usize, CliError> {
    if value == 0 {
        return Err(config_err(format!("{name} must be at least 1")));
    }
    Ok(value)
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let program_name = cfg.program.clone().unwrap_or_else(|| "qa".into());
    let engine = cfg.engine.clone().unwrap_or_else(|| "forward".into());
    if !ENGINES.contains(&engine.as_str()) {
        return Err(config_err(format!("unknown engine `{engine}` (expected one of {})", ENGINES.join(", "))));
    }
    let temperature = cfg.temperature.unwrap_or(1.0);
    if !(temperature.is_finite() && temperature >= 0.0) {
        return Err(config_err("temperature must be a non-negative number"));
    }
    let ess_threshold = cfg.ess_threshold.unwrap_or(0.5);
    if !(ess_threshold > 0.0 && ess_threshold <= 1.0) {
        return Err(config_err("ess_threshold must lie in (0, 1]"));
    }
    let samples = at_least_one("samples", cfg.samples.unwrap_or(1000))?;
    let particles = at_least_one("particles", cfg.particles.unwrap_or(1000))?;
    if particles < 2 && engine == "smc" {
        return Err(config_err("smc needs at least 2 particles"));
    }
    let beam_width = at_least_one("beam_width", cfg.beam_width.unwrap_or(16))?;
    let max_steps = at_least_one("max_steps", cfg.max_steps.unwrap_or(3))?;

    let spec = cfg.backend.as_deref().ok_or_else(|| config_err("no backend given (use --backend)"))?;
    let backend = load_backend(spec, &cfg.remote).map_err(config_err)?;
    let mut env = Env::new(backend);
    if let Some(path) = &cfg.examples {
        env = env.with_examples(load_examples(path).map_err(config_err)?);
    }
    if matches!(engine.as_str(), "enumerate" | "beam") && !env.is_enumerable() {
        return Err(config_err(format!("engine `{engine}` needs a backend that can list its support; `{spec}` cannot")));
    }

    let observations: ObservationSet = cfg.observe.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    let obs = |name: &str| cfg.observe.get(name).cloned();
    let program = match program_name.as_str() {
        "verifier" => {
            let mut b = VerifierProgramBuilder::new(max_steps, cfg.positive.clone().unwrap_or_else(|| DEFAULT_POSITIVE.into()))
                .temperature(temperature);
            if let Some(q) = obs("question") {
                b = b.question(q);
            }
            b.build()
        }
        "selection_inference" => {
            let mut b = SelectionInferenceBuilder::new(max_steps).temperature(temperature);
            if let Some(f) = obs("facts") {
                b = b.facts(f);
            }
            if let Some(q) = obs("question") {
                b = b.question(q);
            }
            b.build()
        }
        "tool" => {
            let mut b = ToolProgramBuilder::new().temperature(temperature);
            if let Some(q) = obs("question") {
                b = b.question(q);
            }
            b.build(&ToolRegistry::new())
        }
        other => {
            let variant = ChainVariant::parse(other).ok_or_else(|| {
                config_err(format!(
                    "unknown program `{other}` (expected qa, qta, qta_critique, verifier, selection_inference or tool)"
                ))
            })?;
            let mut b = ChainBuilder::new(variant).temperature(temperature);
            for (k, v) in &cfg.observe {
                if variant.variables().contains(&k.as_str()) {
                    b = b.observe(k.clone(), v.clone());
                }
            }
            b.build()
        }
    }
    .map_err(config_err)?;

    Ok(Prepared {
        program_name,
        engine,
        program,
        env,
        observations,
        query: cfg.query.clone().map_or(Query::Return, Query::Variable),
        seed: cfg.seed.unwrap_or(0),
        samples,
        particles,
        beam_width,
        ess_threshold,
    })
}

/// JSON numbers cannot be infinite; those become strings.
fn number(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or_else(|| Value::String(format!("{x}")), Value::Number)
}

fn marginal_json(result: &InferenceResult) -> Value {
    Value::Object(result.marginal.iter().map(|(k, p)| (k.0.clone(), number(*p))).collect())
}

fn diagnostics_json(d: &BTreeMap<String, f64>) -> Value {
    Value::Object(d.iter().map(|(k, v)| (k.clone(), number(*v))).collect())
}

fn trace_json(trace: &Trace) -> Value {
    let records: Vec<Value> = trace
        .records
        .iter()
        .map(|r| json!({"name": r.name.as_str(), "value": r.value, "log_prob": number(r.log_prob), "observed": r.observed}))
        .collect();
    json!({"payload": trace.payload(), "records": records})
}

fn write_traces<'a>(path: &Path, prefix: &str, traces: impl IntoIterator<Item = (&'a Trace, f64)>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| runtime_err(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    write_jsonl(&mut w, prefix, traces).map_err(runtime_err)?;
    w.flush().map_err(runtime_err)
}

/// Runs a prepared configuration and returns the summary object together
/// with the weighted traces it produced.
pub fn infer(p: &Prepared) -> Result<(Value, Vec<(Trace, f64)>), CliError> {
    let mut summary = Map::new();
    summary.insert("program".into(), json!(p.program_name));
    summary.insert("engine".into(), json!(p.engine));
    summary.insert("seed".into(), json!(p.seed));
    let result = match p.engine.as_str() {
        "forward" => forward_sample_par(&p.program, &p.env, p.samples, p.seed, &p.query),
        "rejection" => rejection_infer(&p.program, &p.env, &p.observations, p.samples, p.seed, &p.query),
        "enumerate" => enumerate_posterior(&p.program, &p.env, &p.observations, &p.query),
        "smc" => smc_infer(&p.program, &p.env, &p.observations, p.particles, p.ess_threshold, p.seed, &p.query),
        "self_consistency" => self_consistency(&p.program, &p.env, p.samples, p.seed, &p.query).map(|(answer, result)| {
            summary.insert("answer".into(), json!(answer.0));
            result
        }),
        "beam" => {
            let trace = beam_map(&p.program, &p.env, p.beam_width).map_err(runtime_err)?;
            summary.insert("map".into(), trace_json(&trace));
            let joint = cascade_core::log_joint(&trace).map_or(f64::NEG_INFINITY, |lj| lj);
            summary.insert("log_joint".into(), number(joint));
            return Ok((Value::Object(summary), vec![(trace, 1.0)]));
        }
        _ => unreachable!("engine names are validated in prepare"),
    }
    .map_err(runtime_err)?;
    summary.insert("marginal".into(), marginal_json(&result));
    summary.insert("diagnostics".into(), diagnostics_json(&result.diagnostics));
    summary.insert("traces".into(), json!(result.traces.len()));
    Ok((Value::Object(summary), result.traces.into_iter().map(|wt| (wt.trace, wt.weight)).collect()))
}

fn run_inference(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let prepared = prepare(cfg)?;
    let (summary, traces) = infer(&prepared)?;
    if let Some(path) = &cfg.out {
        write_traces(path, &format!("{}-", prepared.program_name), traces.iter().map(|(t, w)| (t, *w)))?;
    }
    writeln!(out, "{summary}").map_err(runtime_err)
}

fn run_twentyq(args: &TwentyqArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.samples == 0 || args.max_questions == 0 {
        return Err(config_err("samples and max-questions must be at least 1"));
    }
    if !(args.temperature.is_finite() && args.temperature >= 0.0) {
        return Err(config_err("temperature must be a non-negative number"));
    }
    let remote = args.remote.settings();
    let load = |spec: &Option<String>| -> Result<Option<Arc<dyn LanguageModel>>, CliError> {
        spec.as_deref().map(|s| load_backend(s, &remote)).transpose().map_err(config_err)
    };
    let shared = load(&args.backend)?;
    let bob = load(&args.bob_backend)?.or_else(|| shared.clone());
    let alice = load(&args.alice_backend)?.or_else(|| shared.clone());
    let (Some(bob), Some(alice)) = (bob, alice) else {
        return Err(config_err("both players need a backend (use --backend or --bob-backend/--alice-backend)"));
    };
    let env = Env::new(bob.clone()).with_backend(BOB_BACKEND, bob).with_backend(ALICE_BACKEND, alice);
    let concepts = load_concepts(&args.concepts).map_err(config_err)?;
    if concepts.is_empty() {
        return Err(config_err(format!("{}: no concepts", args.concepts.display())));
    }
    let config = EvalConfig { samples_per_concept: args.samples, temperature: args.temperature, max_questions: args.max_questions };
    let report = evaluate_twentyq_par(&concepts, &config, &env, args.seed).map_err(runtime_err)?;
    if let Some(path) = &args.out {
        write_traces(path, "twentyq-", report.traces.iter().map(|t| (t, 1.0)))?;
    }
    let per_concept: Vec<Value> = report
        .concepts
        .iter()
        .map(|c| json!({"concept": c.concept, "solved": c.solved, "mean_solved_round": c.mean_solved_round}))
        .collect();
    writeln!(out, "{report}").map_err(runtime_err)?;
    writeln!(out, "{}", json!({"solve_fraction": report.solve_fraction, "concepts": per_concept})).map_err(runtime_err)
}

fn run_star(args: &StarArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let pairs = load_dataset(&args.data).map_err(config_err)?;
    if pairs.is_empty() {
        return Err(config_err(format!("{}: no labeled pairs", args.data.display())));
    }
    let model = match &args.model {
        Some(path) => load_ngram(path).map_err(config_err)?,
        None => NGramLM::new(4, Unit::Word, 0.01).map_err(config_err)?,
    };
    let mut env = Env::new(Arc::new(model.clone()));
    if let Some(path) = &args.examples {
        env = env.with_examples(load_examples(path).map_err(config_err)?);
    }
    let config = StarConfig { budget: args.budget, temperature: args.temperature };
    if args.iters == 0 || args.budget == 0 {
        return Err(config_err("iters and budget must be at least 1"));
    }
    let outcome = star_loop(&pairs, model, args.iters, &config, &env, args.seed).map_err(runtime_err)?;
    let metrics: Vec<Value> = outcome
        .metrics
        .iter()
        .map(|m| {
            json!({
                "iteration": m.iteration,
                "accepted": m.accepted,
                "sampled": m.sampled,
                "rationalized": m.rationalized,
                "skipped": m.skipped,
                "train_accuracy": m.train_accuracy,
            })
        })
        .collect();
    if let Some(path) = &args.model_out {
        save_ngram(path, &outcome.model).map_err(runtime_err)?;
    }
    writeln!(
        out,
        "{}",
        json!({"initial_accuracy": outcome.initial_accuracy, "iterations": metrics, "halted_early": outcome.halted_early})
    )
    .map_err(runtime_err)
}
