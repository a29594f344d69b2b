use std::sync::Arc;

use cascade_core::fixtures::{random_world, toy_world_program, toy_world_table};
use cascade_core::inference::{
    beam_map, enumerate_posterior, enumerate_with, forward_sample, rank_by_verifier, rejection_infer,
    self_consistency, smc_infer, systematic_resample, total_variation, EnumerateOptions, Verifier,
};
use cascade_core::runtime::{log_joint, Cx, Halt};
use cascade_core::{
    normalize_answer, BucketKey, DistSpec, Env, FnCascade, InferenceError, NGramLM, ObservationSet, Query,
    TableLM, Trace, TraceRecord, TraceStatus, VariableName,
};

fn toy_env() -> Env {
    Env::new(Arc::new(toy_world_table()))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn thought() -> Query {
    Query::variable("thought")
}

#[test]
fn exact_prior_predictive() {
    let r = enumerate_posterior(&toy_world_program(), &toy_env(), &ObservationSet::new(), &Query::Return).unwrap();
    assert!(close(r.prob("4"), 0.62, 1e-12));
    assert!(close(r.prob("5"), 0.38, 1e-12));
    assert!(close(r.diagnostic("evidence").unwrap(), 1.0, 1e-12));
    assert_eq!(r.diagnostic("paths"), Some(4.0));
}

#[test]
fn exact_posterior_over_thought() {
    let obs = ObservationSet::new().with("answer", "5");
    let r = enumerate_posterior(&toy_world_program(), &toy_env(), &obs, &thought()).unwrap();
    assert!(close(r.prob("guess"), 0.32 / 0.38, 1e-12));
    assert!(close(r.prob("add"), 0.06 / 0.38, 1e-12));
    assert!(close(r.diagnostic("evidence").unwrap(), 0.38, 1e-12));
}

#[test]
fn impossible_observation_has_zero_evidence() {
    let obs = ObservationSet::new().with("answer", "6");
    let err = enumerate_posterior(&toy_world_program(), &toy_env(), &obs, &Query::Return).unwrap_err();
    assert_eq!(err, InferenceError::ZeroEvidence);
    assert_eq!(err.to_string(), "conditioning event has probability zero");
}

#[test]
fn enumeration_refuses_non_enumerable_backends() {
    let env = Env::new(Arc::new(NGramLM::default()));
    let err = enumerate_posterior(&toy_world_program(), &env, &ObservationSet::new(), &Query::Return).unwrap_err();
    assert!(matches!(err, InferenceError::Unsupported(_)));
    assert!(matches!(beam_map(&toy_world_program(), &env, 2), Err(InferenceError::Unsupported(_))));
}

#[test]
fn path_cap_is_an_error_with_a_count() {
    let options = EnumerateOptions { path_cap: 3 };
    let err =
        enumerate_with(&toy_world_program(), &toy_env(), &ObservationSet::new(), &Query::Return, &options).unwrap_err();
    assert_eq!(err, InferenceError::PathCapExceeded { explored: 3 });
}

#[test]
fn forward_sampling_matches_fixture() {
    let r = forward_sample(&toy_world_program(), &toy_env(), 20_000, 7, &Query::Return).unwrap();
    assert!(close(r.prob("4"), 0.62, 0.02), "{}", r.prob("4"));
    assert_eq!(r.traces.len(), 20_000);
}

#[test]
fn forward_sampling_of_a_fixed_program_repeats_it() {
    let program = FnCascade::new("fixed", |cx: &mut Cx<'_>| cx.deterministic("x", "same"));
    let env = toy_env();
    let r = forward_sample(&program, &env, 3, 1, &Query::Return).unwrap();
    assert!(r.traces.windows(2).all(|w| w[0].trace.records == w[1].trace.records));
}

#[test]
fn always_rejecting_program_has_empty_marginal() {
    let program = FnCascade::new("reject", |cx: &mut Cx<'_>| Err::<String, Halt>(cx.reject("no")));
    let r = forward_sample(&program, &toy_env(), 10, 1, &Query::Return).unwrap();
    assert_eq!(r.traces.len(), 10);
    assert!(r.traces.iter().all(|t| t.weight == 0.0));
    assert!(r.marginal.is_empty());
    assert_eq!(r.diagnostic("no_completed_traces"), Some(1.0));
}

#[test]
fn rejection_matches_posterior_and_evidence() {
    let obs = ObservationSet::new().with("answer", "5");
    let r = rejection_infer(&toy_world_program(), &toy_env(), &obs, 50_000, 3, &thought()).unwrap();
    assert!(close(r.prob("guess"), 0.8421, 0.02));
    assert!(close(r.diagnostic("acceptance_rate").unwrap(), 0.38, 0.02));
}

#[test]
fn rejection_on_deterministic_and_impossible_values() {
    let obs = ObservationSet::new().with("question", "2+2?");
    let r = rejection_infer(&toy_world_program(), &toy_env(), &obs, 200, 3, &Query::Return).unwrap();
    assert_eq!(r.diagnostic("acceptance_rate"), Some(1.0));
    let obs = ObservationSet::new().with("answer", "7");
    let r = rejection_infer(&toy_world_program(), &toy_env(), &obs, 200, 3, &Query::Return).unwrap();
    assert_eq!(r.diagnostic("acceptance_rate"), Some(0.0));
    assert!(r.marginal.is_empty());
}

#[test]
fn rejection_matches_after_normalization() {
    let obs = ObservationSet::new().with("answer", " 5. ");
    let r = rejection_infer(&toy_world_program(), &toy_env(), &obs, 2000, 3, &thought()).unwrap();
    assert!(r.diagnostic("acceptance_rate").unwrap() > 0.3);
}

#[test]
fn smc_matches_posterior() {
    let obs = ObservationSet::new().with("answer", "5");
    let r = smc_infer(&toy_world_program(), &toy_env(), &obs, 2000, 0.5, 11, &thought()).unwrap();
    let exact = enumerate_posterior(&toy_world_program(), &toy_env(), &obs, &thought()).unwrap();
    assert!(total_variation(&r.marginal, &exact.marginal) <= 0.05);
    assert!(close(r.diagnostic("evidence").unwrap(), 0.38, 0.03));
}

#[test]
fn smc_without_observations_keeps_uniform_weights() {
    let r = smc_infer(&toy_world_program(), &toy_env(), &ObservationSet::new(), 100, 0.5, 1, &Query::Return).unwrap();
    assert_eq!(r.diagnostic("resample_count"), Some(0.0));
    let w = r.traces[0].weight;
    assert!(r.traces.iter().all(|t| close(t.weight, w, 1e-12)));
}

#[test]
fn smc_with_certain_observation_never_resamples() {
    let obs = ObservationSet::new().with("question", "2+2?");
    let r = smc_infer(&toy_world_program(), &toy_env(), &obs, 100, 0.5, 1, &Query::Return).unwrap();
    assert_eq!(r.diagnostic("resample_count"), Some(0.0));
    assert!(close(r.diagnostic("ess").unwrap(), 100.0, 1e-9));
}

#[test]
fn smc_unreachable_observation() {
    let obs = ObservationSet::new().with("answer", "7");
    let err = smc_infer(&toy_world_program(), &toy_env(), &obs, 10, 0.5, 1, &Query::Return).unwrap_err();
    assert_eq!(err.to_string(), "conditioning event unreachable");
}

#[test]
fn smc_preconditions() {
    let obs = ObservationSet::new();
    assert!(smc_infer(&toy_world_program(), &toy_env(), &obs, 1, 0.5, 1, &Query::Return).is_err());
    assert!(smc_infer(&toy_world_program(), &toy_env(), &obs, 10, 0.0, 1, &Query::Return).is_err());
    assert!(smc_infer(&toy_world_program(), &toy_env(), &obs, 10, 1.5, 1, &Query::Return).is_err());
}

#[test]
fn systematic_resampling_oracle() {
    assert_eq!(systematic_resample(&[0.5, 0.5], 0.25), vec![0, 1]);
    assert_eq!(systematic_resample(&[1.0, 0.0, 0.0], 0.9), vec![0, 0, 0]);
    assert_eq!(systematic_resample(&[0.0, 0.0, 1.0], 0.0), vec![2, 2, 2]);
    // points 1/6, 1/2, 5/6 against cumulative 0.1, 0.7, 1.0
    assert_eq!(systematic_resample(&[0.1, 0.6, 0.3], 0.5), vec![1, 1, 2]);
    assert_eq!(systematic_resample(&[0.1, 0.2, 0.3, 0.4], 0.5), vec![1, 2, 3, 3]);
}

#[test]
fn beam_finds_map_trace() {
    for width in [1, 2, 8] {
        let trace = beam_map(&toy_world_program(), &toy_env(), width).unwrap();
        assert_eq!(trace.value("thought"), Some("add"));
        assert_eq!(trace.value("answer"), Some("4"));
        assert!(close(log_joint(&trace).unwrap(), 0.54f64.ln(), 1e-12));
    }
    assert!(beam_map(&toy_world_program(), &toy_env(), 0).is_err());
}

#[test]
fn narrow_beam_can_miss_the_map_trace() {
    // a: 0.55 then 0.5/0.5 (best 0.275); b: 0.45 then 0.9/0.1 (best 0.405)
    let table = TableLM::new([
        ("X: ", vec![("a", 0.55), ("b", 0.45)]),
        ("X: a\nY: ", vec![("c", 0.5), ("d", 0.5)]),
        ("X: b\nY: ", vec![("c", 0.9), ("d", 0.1)]),
    ])
    .unwrap();
    let program = FnCascade::new("two", |cx: &mut Cx<'_>| {
        let x = cx.sample("x", DistSpec::new())?;
        cx.sample("y", DistSpec::new().given("x", x))
    });
    let env = Env::new(Arc::new(table));
    let greedy = beam_map(&program, &env, 1).unwrap();
    assert_eq!(greedy.value("x"), Some("a"));
    let wide = beam_map(&program, &env, 4).unwrap();
    assert_eq!((wide.value("x"), wide.value("y")), (Some("b"), Some("c")));
}

#[test]
fn self_consistency_picks_the_mode() {
    let (bucket, _) = self_consistency(&toy_world_program(), &toy_env(), 5000, 5, &Query::Return).unwrap();
    assert_eq!(bucket, BucketKey("4".into()));
}

#[test]
fn self_consistency_ties_go_to_the_smaller_key() {
    let table = TableLM::new([("A: ", vec![("b", 1.0)])]).unwrap();
    let env = Env::new(Arc::new(table));
    let program = FnCascade::new("deterministic", |cx: &mut Cx<'_>| cx.sample("a", DistSpec::new()));
    let (bucket, _) = self_consistency(&program, &env, 3, 0, &Query::Return).unwrap();
    assert_eq!(bucket.as_str(), "b");

    let coin = FnCascade::new("coin", |cx: &mut Cx<'_>| cx.sample("side", DistSpec::new()));
    let table = TableLM::new([("Side: ", vec![("zeta", 0.5), ("alpha", 0.5)])]).unwrap();
    let env = Env::new(Arc::new(table));
    let seed = (0..100)
        .find(|&seed| {
            let r = forward_sample(&coin, &env, 2, seed, &Query::Return).unwrap();
            r.traces[0].trace.payload() != r.traces[1].trace.payload()
        })
        .expect("some seed splits two fair draws");
    let (bucket, _) = self_consistency(&coin, &env, 2, seed, &Query::Return).unwrap();
    assert_eq!(bucket.as_str(), "alpha");
}

#[test]
fn self_consistency_without_completions_fails() {
    let program = FnCascade::new("reject", |cx: &mut Cx<'_>| Err::<String, Halt>(cx.reject("no")));
    let err = self_consistency(&program, &toy_env(), 5, 0, &Query::Return).unwrap_err();
    assert_eq!(err, InferenceError::NoCompletedTraces);
}

fn candidate(answer: &str) -> Trace {
    Trace {
        records: vec![TraceRecord {
            name: VariableName::new("answer").unwrap(),
            value: answer.into(),
            log_prob: 0.0,
            observed: false,
        }],
        status: TraceStatus::Completed(answer.into()),
        seed: 0,
        program_id: "qa".into(),
    }
}

fn verifier_env(good: f64, bad: f64) -> Env {
    let table = TableLM::new([
        ("Answer: 4\nVerifier: ", vec![("yes", good), ("no", 1.0 - good)]),
        ("Answer: 5\nVerifier: ", vec![("yes", bad), ("no", 1.0 - bad)]),
    ])
    .unwrap();
    Env::new(Arc::new(table))
}

#[test]
fn verifier_ranks_by_positive_probability() {
    let env = verifier_env(0.9, 0.3);
    let ranking = rank_by_verifier(&[candidate("4"), candidate("5")], &Verifier::new("yes"), &env).unwrap();
    assert_eq!(ranking.best, 0);
    assert!(close(ranking.scores[0].score, 0.9, 1e-12));
    assert!(close(ranking.scores[1].score, 0.3, 1e-12));
    let reordered = rank_by_verifier(&[candidate("5"), candidate("4")], &Verifier::new("yes"), &env).unwrap();
    assert_eq!(reordered.best, 1);
}

#[test]
fn verifier_ties_and_singletons() {
    let env = verifier_env(0.5, 0.5);
    let ranking = rank_by_verifier(&[candidate("5"), candidate("4")], &Verifier::new("yes"), &env).unwrap();
    assert_eq!(ranking.best, 0);
    let env = verifier_env(0.9, 0.01);
    let single = rank_by_verifier(&[candidate("5")], &Verifier::new("yes"), &env).unwrap();
    assert_eq!(single.best, 0);
}

#[test]
fn verifier_prompt_unknown_to_table_is_an_error() {
    let env = verifier_env(0.9, 0.3);
    assert!(rank_by_verifier(&[candidate("6")], &Verifier::new("yes"), &env).is_err());
    assert!(rank_by_verifier(&[], &Verifier::new("yes"), &env).is_err());
}

#[test]
fn a_few_random_worlds_agree_with_their_oracles() {
    for seed in 0..5 {
        let world = random_world(seed);
        let env = Env::new(Arc::new(world.table.clone()));
        let last = world.variables.len() - 1;
        let exact = enumerate_posterior(&world.program, &env, &ObservationSet::new(), &Query::Return).unwrap();
        let oracle: std::collections::BTreeMap<BucketKey, f64> =
            world.marginal(last, None).into_iter().map(|(k, v)| (normalize_answer(&k), v)).collect();
        assert!(total_variation(&exact.marginal, &oracle) < 1e-12);
        let map = beam_map(&world.program, &env, 1 << 10).unwrap();
        let (path, p) = world.argmax();
        assert_eq!(map.records.iter().map(|r| r.value.clone()).collect::<Vec<_>>(), path);
        assert!(close(log_joint(&map).unwrap(), p.ln(), 1e-9));
    }
}
