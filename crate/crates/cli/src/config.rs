//! Run configuration files and backend specifications.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use cascade_core::{LanguageModel, ScriptedLM};
use serde::{Deserialize, Serialize};

use crate::formats::{load_ngram, load_table};
use crate::remote::{RemoteLM, RemoteLMConfig};

/// Remote client settings as they appear in a config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteSettings {
    pub auth_token_env: Option<String>,
    pub timeout_ms: Option<u64>,
    pub max_attempts: Option<u32>,
    pub backoff_ms: Option<u64>,
    pub max_in_flight: Option<usize>,
}

impl RemoteSettings {
    pub fn to_config(&self, url: &str) -> RemoteLMConfig {
        let mut c = RemoteLMConfig::new(url);
        c.auth_token_env = self.auth_token_env.clone();
        if let Some(ms) = self.timeout_ms {
            c.timeout = Duration::from_millis(ms);
        }
        if let Some(n) = self.max_attempts {
            c.max_attempts = n;
        }
        if let Some(ms) = self.backoff_ms {
            c.backoff_base = Duration::from_millis(ms);
        }
        if let Some(n) = self.max_in_flight {
            c.max_in_flight = n;
        }
        c
    }
}

/// Everything `cascade run` needs. Every field is optional in the file;
/// command-line flags override file values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub program: Option<String>,
    pub engine: Option<String>,
    pub backend: Option<String>,
    #[serde(default)]
    pub observe: BTreeMap<String, String>,
    pub examples: Option<PathBuf>,
    pub samples: Option<usize>,
    pub particles: Option<usize>,
    pub beam_width: Option<usize>,
    pub ess_threshold: Option<f64>,
    pub max_steps: Option<usize>,
    pub temperature: Option<f64>,
    pub positive: Option<String>,
    pub query: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub remote: RemoteSettings,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// `other`'s set fields win.
    pub fn merge(mut self, other: RunConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(program, engine, backend, examples, samples, particles, beam_width, ess_threshold, max_steps, temperature, positive, query, seed, out);
        self.observe.extend(other.observe);
        if other.remote != RemoteSettings::default() {
            self.remote = other.remote;
        }
        self
    }
}

/// Parses `table:FILE`, `ngram:FILE`, `remote:URL` or `scripted:TEXT`.
pub fn load_backend(spec: &str, remote: &RemoteSettings) -> Result<Arc<dyn LanguageModel>, String> {
    let (kind, arg) = spec.split_once(':').ok_or_else(|| format!("backend `{spec}` must look like KIND:ARG"))?;
    Ok(match kind {
        "table" => Arc::new(load_table(Path::new(arg)).map_err(|e| e.to_string())?),
        "ngram" => Arc::new(load_ngram(Path::new(arg)).map_err(|e| e.to_string())?),
        "remote" => Arc::new(RemoteLM::new(remote.to_config(arg))?),
        "scripted" => {
            let text = arg.to_string();
            Arc::new(ScriptedLM::new(move |_| text.clone()))
        }
        other => return Err(format!("unknown backend kind `{other}` (expected table, ngram, remote or scripted)")),
    })
}
