//! Completion client for an HTTP model endpoint.
//!
//! Each attempt POSTs
//! `{"prompt", "max_tokens", "temperature", "stop": [..], "seed", "logprobs": true}`
//! and expects `{"text", "token_logprobs"?}` back. The completion's
//! log-probability is the sum of `token_logprobs`; without them it is NaN.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use cascade_core::lm::{CompletionRequest, CompletionResult, LanguageModel, LmError};
use cascade_core::Stop;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteLMConfig {
    pub endpoint_url: String,
    /// Environment variable holding the bearer token.
    pub auth_token_env: Option<String>,
    pub timeout: Duration,
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles for every later one.
    pub backoff_base: Duration,
    pub max_in_flight: usize,
}

impl RemoteLMConfig {
    pub fn new(endpoint_url: impl Into<String>) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            auth_token_env: None,
            timeout: Duration::from_secs(60),
            max_attempts: 3,
            backoff_base: Duration::from_millis(500),
            max_in_flight: 4,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.timeout.is_zero() {
            return Err("timeout must be positive".into());
        }
        if self.max_attempts == 0 {
            return Err("at least one attempt is required".into());
        }
        if self.max_in_flight == 0 {
            return Err("max_in_flight must be at least 1".into());
        }
        Ok(())
    }

    /// Delay after failed attempt number `attempt` (1-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        self.backoff_base.saturating_mul(1u32 << (attempt - 1).min(16))
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    prompt: &'a str,
    max_tokens: usize,
    temperature: f64,
    stop: Vec<&'a str>,
    seed: u64,
    logprobs: bool,
}

#[derive(Deserialize)]
struct WireResponse {
    text: String,
    #[serde(default)]
    token_logprobs: Option<Vec<f64>>,
}

/// The request body sent for `request`.
pub fn request_body(request: &CompletionRequest) -> String {
    let (stop, max_tokens) = match &request.stop {
        Stop::Newline => (vec!["\n"], request.max_length),
        Stop::Delimiter(d) => (vec![d.as_str()], request.max_length),
        Stop::TokenBudget(n) => (Vec::new(), (*n).min(request.max_length)),
    };
    let wire = WireRequest {
        prompt: &request.prompt,
        max_tokens,
        temperature: request.temperature,
        stop,
        seed: request.rng_seed,
        logprobs: true,
    };
    serde_json::to_string(&wire).expect("requests serialize")
}

/// Parses a success body.
pub fn parse_response(body: &str) -> Result<CompletionResult, LmError> {
    let wire: WireResponse = serde_json::from_str(body).map_err(|e| LmError::Parse {
        offset: body.split_inclusive('\n').take(e.line().saturating_sub(1)).map(str::len).sum::<usize>()
            + e.column().saturating_sub(1),
        message: e.to_string(),
    })?;
    let log_prob = match wire.token_logprobs {
        Some(lps) => lps.iter().sum(),
        None => f64::NAN,
    };
    Ok(CompletionResult { text: wire.text, log_prob })
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteLM {
    config: RemoteLMConfig,
    agent: ureq::Agent,
    slots: Semaphore,
}

impl std::fmt::Debug for RemoteLM {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteLM").field("config", &self.config).finish_non_exhaustive()
    }
}

impl RemoteLM {
    pub fn new(config: RemoteLMConfig) -> Result<Self, String> {
        config.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let slots = Semaphore { free: Mutex::new(config.max_in_flight), cv: Condvar::new() };
        Ok(Self { config, agent, slots })
    }

    pub fn config(&self) -> &RemoteLMConfig {
        &self.config
    }

    fn token(&self) -> Option<String> {
        let var = self.config.auth_token_env.as_deref()?;
        std::env::var(var).ok().filter(|t| !t.is_empty())
    }

    /// One exchange: `Ok` for a 2xx reply body, otherwise the status (if any)
    /// and a message.
    fn attempt(&self, body: &str) -> Result<String, (Option<u16>, String)> {
        let mut req = self.agent.post(&self.config.endpoint_url).header("Content-Type", "application/json");
        if let Some(token) = self.token() {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = req.send(body).map_err(|e| (None, e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| (Some(status), e.to_string()))?;
        if (200..300).contains(&status) {
            Ok(text)
        } else {
            Err((Some(status), format!("status {status}: {}", text.trim())))
        }
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, LmError> {
        let body = request_body(request);
        let _permit = self.slots.acquire();
        let mut last = (None, String::new());
        for attempt in 1..=self.config.max_attempts {
            match self.attempt(&body) {
                Ok(text) => return parse_response(&text),
                Err(e) => last = e,
            }
            if attempt < self.config.max_attempts {
                thread::sleep(self.config.backoff(attempt));
            }
        }
        Err(LmError::Remote { attempts: self.config.max_attempts, status: last.0, message: last.1 })
    }
}

impl LanguageModel for RemoteLM {
    fn sample(&self, request: &CompletionRequest) -> Result<CompletionResult, LmError> {
        self.complete(request)
    }

    fn logprob(&self, _prompt: &str, _continuation: &str) -> Result<f64, LmError> {
        Err(LmError::Unsupported("scoring a given continuation"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(stop: Stop) -> CompletionRequest {
        CompletionRequest { prompt: "Q: hi\nA: ".into(), temperature: 0.7, stop, max_length: 32, rng_seed: 9 }
    }

    #[test]
    fn request_wire_format() {
        assert_eq!(
            request_body(&request(Stop::Newline)),
            r#"{"prompt":"Q: hi\nA: ","max_tokens":32,"temperature":0.7,"stop":["\n"],"seed":9,"logprobs":true}"#
        );
        assert!(request_body(&request(Stop::TokenBudget(5))).contains(r#""max_tokens":5,"temperature":0.7,"stop":[]"#));
    }

    #[test]
    fn response_sums_token_logprobs() {
        let r = parse_response(r#"{"text":"ok","token_logprobs":[-0.1,-0.2]}"#).unwrap();
        assert_eq!(r.text, "ok");
        assert_eq!(r.log_prob, -0.1 + -0.2);
        let unscored = parse_response(r#"{"text":"ok"}"#).unwrap();
        assert!(!unscored.is_scored());
    }

    #[test]
    fn malformed_response_reports_offset() {
        let err = parse_response(r#"{"text": 3}"#).unwrap_err();
        assert!(matches!(err, LmError::Parse { offset: 9, .. }), "{err:?}");
    }

    #[test]
    fn backoff_doubles() {
        let mut c = RemoteLMConfig::new("http://localhost");
        c.backoff_base = Duration::from_millis(10);
        assert_eq!([c.backoff(1), c.backoff(2), c.backoff(3)], [10, 20, 40].map(Duration::from_millis));
    }

    #[test]
    fn config_validation() {
        let mut c = RemoteLMConfig::new("http://localhost");
        c.max_attempts = 0;
        assert!(RemoteLM::new(c).is_err());
    }
}
