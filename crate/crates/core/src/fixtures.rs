//! Small worlds with known answers, for tests and demos.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::cascades::{ChainBuilder, ChainVariant};
use crate::lm::TableLM;
use crate::prompting::render_prompt;
use crate::rng::{rng_from_seed, uniform, RunRng};
use crate::runtime::{DistSpec, ExampleSet, FnCascade, VariableName};

/// The two-thought arithmetic world: thought "add" (0.6) or "guess" (0.4),
/// then answer "4"/"5" with probabilities 0.9/0.1 after "add" and 0.2/0.8
/// after "guess". The question "2+2?" has probability 1.
pub fn toy_world_table() -> TableLM {
    TableLM::new([
        ("Question: ", alloc::vec![("2+2?", 1.0)]),
        ("Question: 2+2?\nThought: ", alloc::vec![("add", 0.6), ("guess", 0.4)]),
        ("Question: 2+2?\nThought: add\nAnswer: ", alloc::vec![("4", 0.9), ("5", 0.1)]),
        ("Question: 2+2?\nThought: guess\nAnswer: ", alloc::vec![("4", 0.2), ("5", 0.8)]),
    ])
    .expect("fixture table is well formed")
}

/// The question-thought-answer chain over [`toy_world_table`] with the
/// question observed.
pub fn toy_world_program() -> FnCascade {
    ChainBuilder::new(ChainVariant::Qta).observe("question", "2+2?").build().expect("qta accepts a question")
}

/// A random finite cascade: `variables.len()` sites, each conditioned on all
/// earlier ones, with at most four outcomes per prompt.
#[derive(Debug, Clone)]
pub struct RandomWorld {
    pub variables: Vec<String>,
    pub table: TableLM,
    pub program: FnCascade,
    /// Exact joint probability of every full path, keyed by its values.
    pub joint: BTreeMap<Vec<String>, f64>,
    /// A value of the last variable with positive probability, the most
    /// likely one.
    pub likely_last: String,
}

impl RandomWorld {
    /// Exact marginal of variable `index`, optionally conditioned on the last
    /// variable taking value `last`.
    pub fn marginal(&self, index: usize, last: Option<&str>) -> BTreeMap<String, f64> {
        let mut out: BTreeMap<String, f64> = BTreeMap::new();
        let mut total = 0.0;
        for (path, p) in &self.joint {
            if last.is_some_and(|v| path.last().map(String::as_str) != Some(v)) {
                continue;
            }
            *out.entry(path[index].clone()).or_default() += p;
            total += p;
        }
        for v in out.values_mut() {
            *v /= total;
        }
        out
    }

    /// The most probable full path, ties to the lexicographically smallest.
    pub fn argmax(&self) -> (Vec<String>, f64) {
        let mut best: Option<(&Vec<String>, f64)> = None;
        for (path, p) in &self.joint {
            if best.is_none_or(|(_, bp)| *p > bp) {
                best = Some((path, *p));
            }
        }
        let (path, p) = best.expect("worlds have at least one path");
        (path.clone(), p)
    }
}

const OUTCOMES: [&str; 4] = ["o0", "o1", "o2", "o3"];

fn random_support(rng: &mut RunRng) -> Vec<(String, f64)> {
    let k = 1 + (rng.next_u64() % 4) as usize;
    let mut values: Vec<&str> = OUTCOMES.to_vec();
    for i in (1..values.len()).rev() {
        values.swap(i, (rng.next_u64() % (i as u64 + 1)) as usize);
    }
    values.truncate(k);
    values.sort_unstable();
    let raw: Vec<f64> = (0..k).map(|_| 0.05 + uniform(rng)).collect();
    let sum: f64 = raw.iter().sum();
    values.into_iter().zip(raw).map(|(v, p)| (String::from(v), p / sum)).collect()
}

fn dist_for(variables: &[String], prefix: &[String]) -> DistSpec {
    let mut dist = DistSpec::new();
    for (name, value) in variables.iter().zip(prefix) {
        dist = dist.given(name.clone(), value.clone());
    }
    dist
}

fn expand(
    variables: &[String],
    prefix: &mut Vec<String>,
    p: f64,
    rng: &mut RunRng,
    table: &mut Vec<(String, Vec<(String, f64)>)>,
    joint: &mut BTreeMap<Vec<String>, f64>,
) {
    if prefix.len() == variables.len() {
        joint.insert(prefix.clone(), p);
        return;
    }
    let target = VariableName::new(variables[prefix.len()].clone()).expect("non-empty name");
    let prompt = render_prompt(&dist_for(variables, prefix), &ExampleSet::default(), &target).expect("default formatter");
    let support = random_support(rng);
    table.push((prompt, support.clone()));
    for (value, q) in support {
        prefix.push(value);
        expand(variables, prefix, p * q, rng, table, joint);
        prefix.pop();
    }
}

/// Builds the random world for `seed`, with 2 to 4 variables.
pub fn random_world(seed: u64) -> RandomWorld {
    let mut rng = rng_from_seed(seed);
    let n = 2 + (rng.next_u64() % 3) as usize;
    let variables: Vec<String> = (0..n).map(|i| alloc::format!("v{i}")).collect();
    let mut entries = Vec::new();
    let mut joint = BTreeMap::new();
    expand(&variables, &mut Vec::new(), 1.0, &mut rng, &mut entries, &mut joint);
    let table = TableLM::new(entries).expect("generated supports are normalized");

    let mut last: BTreeMap<&str, f64> = BTreeMap::new();
    for (path, p) in &joint {
        *last.entry(path[n - 1].as_str()).or_default() += p;
    }
    let likely_last = last
        .iter()
        .fold(None::<(&str, f64)>, |best, (v, p)| if best.is_none_or(|(_, bp)| *p > bp) { Some((v, *p)) } else { best })
        .map(|(v, _)| String::from(v))
        .expect("non-empty");

    let names = variables.clone();
    let program = FnCascade::new(alloc::format!("random/{seed}"), move |cx| {
        let mut prefix: Vec<String> = Vec::new();
        for name in &names {
            let value = cx.sample(name, dist_for(&names, &prefix))?;
            prefix.push(value);
        }
        Ok(prefix.pop().unwrap_or_default())
    });
    RandomWorld { variables, table, program, joint, likely_last }
}

/// A memorizable reasoning task for the n-gram backend.
///
/// Five seed chains teach rationale `rK` for answer `aK` in both the forward
/// ("Question, Thought, Answer") and the answer-first layout. The ten
/// labeled questions `q0..q9` are unseen; question `qI` has answer
/// `a(I mod 5)`. Returns the pairs and the seeded order-4 word model.
pub fn star_task() -> (Vec<crate::star::LabeledPair>, crate::lm::NGramLM) {
    let mut corpus = Vec::new();
    for k in 0..5 {
        corpus.push(alloc::format!("Question: s{k}\nThought: r{k}\nAnswer: a{k}\n"));
        corpus.push(alloc::format!("Question: s{k}\nAnswer: a{k}\nThought: r{k}\n"));
    }
    let model = crate::lm::NGramLM::new(4, crate::lm::Unit::Word, 0.01).expect("valid n-gram settings").update(&corpus);
    let pairs = (0..10)
        .map(|i| crate::star::LabeledPair::new(alloc::format!("q{i}"), alloc::format!("a{}", i % 5)).expect("non-empty"))
        .collect();
    (pairs, model)
}
