mod common;

use std::time::Duration;

use cascade::remote::{RemoteLM, RemoteLMConfig};
use cascade_core::{CompletionRequest, LanguageModel, LmError, Stop};
use common::Stub;

fn config(url: &str) -> RemoteLMConfig {
    let mut c = RemoteLMConfig::new(url);
    c.backoff_base = Duration::from_millis(5);
    c.timeout = Duration::from_secs(5);
    c
}

fn request() -> CompletionRequest {
    CompletionRequest { prompt: "Question: 2+2?\nAnswer: ".into(), temperature: 0.5, stop: Stop::Newline, max_length: 16, rng_seed: 42 }
}

#[test]
fn retries_server_errors_then_succeeds() {
    let stub = Stub::serve(vec![
        (500, "{}".into()),
        (500, "{}".into()),
        (200, r#"{"text":"4","token_logprobs":[-0.25,-0.5]}"#.into()),
    ]);
    let lm = RemoteLM::new(config(&stub.url)).unwrap();
    let result = lm.sample(&request()).unwrap();
    assert_eq!(result.text, "4");
    assert_eq!(result.log_prob, -0.75);
    let seen = stub.finish();
    assert_eq!(seen.len(), 3);
    assert!(seen.iter().all(|c| c.body == seen[0].body));
    assert_eq!(
        seen[0].body,
        r#"{"prompt":"Question: 2+2?\nAnswer: ","max_tokens":16,"temperature":0.5,"stop":["\n"],"seed":42,"logprobs":true}"#
    );
}

#[test]
fn gives_up_after_max_attempts() {
    let stub = Stub::serve(vec![(503, "busy".into()), (503, "busy".into())]);
    let mut c = config(&stub.url);
    c.max_attempts = 2;
    let err = RemoteLM::new(c).unwrap().sample(&request()).unwrap_err();
    assert!(matches!(err, LmError::Remote { attempts: 2, status: Some(503), .. }), "{err:?}");
    assert_eq!(stub.finish().len(), 2);
}

#[test]
fn bearer_token_only_when_variable_is_set() {
    std::env::set_var("CASCADE_TEST_TOKEN_SET", "s3cret");
    std::env::remove_var("CASCADE_TEST_TOKEN_UNSET");
    let stub = Stub::serve(vec![(200, r#"{"text":"a"}"#.into()), (200, r#"{"text":"b"}"#.into())]);
    let mut with = config(&stub.url);
    with.auth_token_env = Some("CASCADE_TEST_TOKEN_SET".into());
    RemoteLM::new(with).unwrap().sample(&request()).unwrap();
    let mut without = config(&stub.url);
    without.auth_token_env = Some("CASCADE_TEST_TOKEN_UNSET".into());
    RemoteLM::new(without).unwrap().sample(&request()).unwrap();
    let seen = stub.finish();
    assert_eq!(seen[0].header("authorization"), Some("Bearer s3cret"));
    assert_eq!(seen[1].header("authorization"), None);
}

#[test]
fn missing_logprobs_mean_unscored() {
    let stub = Stub::serve(vec![(200, r#"{"text":"free text"}"#.into())]);
    let result = RemoteLM::new(config(&stub.url)).unwrap().sample(&request()).unwrap();
    assert_eq!(result.text, "free text");
    assert!(!result.is_scored());
    stub.finish();
}

#[test]
fn malformed_success_body_is_a_parse_error() {
    let stub = Stub::serve(vec![(200, r#"{"txt":"x"}"#.into())]);
    let err = RemoteLM::new(config(&stub.url)).unwrap().sample(&request()).unwrap_err();
    assert!(matches!(err, LmError::Parse { .. }), "{err:?}");
    stub.finish();
}

#[test]
fn token_budget_maps_to_max_tokens() {
    let stub = Stub::serve(vec![(200, r#"{"text":"x"}"#.into())]);
    let mut req = request();
    req.stop = Stop::TokenBudget(4);
    RemoteLM::new(config(&stub.url)).unwrap().sample(&req).unwrap();
    let body: serde_json::Value = serde_json::from_str(&stub.finish()[0].body).unwrap();
    assert_eq!(body["max_tokens"], 4);
    assert_eq!(body["stop"], serde_json::json!([]));
}

#[test]
fn scoring_a_continuation_is_unsupported() {
    let lm = RemoteLM::new(config("http://127.0.0.1:9/never")).unwrap();
    assert!(matches!(lm.logprob("p", "c"), Err(LmError::Unsupported(_))));
    assert!(!lm.is_enumerable());
}
