//! Run configuration: one TOML file naming the corpora, benchmarks,
//! templates, and endpoints a pipeline run works with.
//!
//! Resolution order is flags over config over built-in defaults; the
//! *effective* configuration (after flag overrides) is hashed, and that
//! hash is embedded in every artifact so any output can be traced to the
//! exact settings that produced it.

use std::collections::BTreeSet;
use std::net::{TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::client::{EndpointConfig, RetryPolicy};
use crate::error::{Error, Result};
use crate::persona::{Strategy, TemplateSet};

fn default_output_root() -> PathBuf {
    PathBuf::from("out")
}

fn default_templates_dir() -> PathBuf {
    PathBuf::from("templates")
}

fn default_markers() -> Vec<String> {
    vec!["final answer".to_string(), "boxed{".to_string()]
}

fn default_pool_size() -> usize {
    100
}

fn default_persona_temperature() -> f64 {
    1.0
}

fn default_persona_max_tokens() -> u32 {
    512
}

fn default_eval_max_tokens() -> u32 {
    32768
}

fn default_timeout_secs() -> u64 {
    120
}

fn default_max_parallel() -> usize {
    4
}

/// Corpus ingestion knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSection {
    /// A record is kept only if its supervision output contains every one
    /// of these substrings (case-sensitive).
    pub required_substrings: Vec<String>,
}

impl Default for CorpusSection {
    fn default() -> CorpusSection {
        CorpusSection {
            required_substrings: default_markers(),
        }
    }
}

/// Persona generation knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PersonaSection {
    pub domain_pool_size: usize,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for PersonaSection {
    fn default() -> PersonaSection {
        PersonaSection {
            domain_pool_size: default_pool_size(),
            temperature: default_persona_temperature(),
            max_tokens: default_persona_max_tokens(),
        }
    }
}

/// Evaluation decoding knobs (temperature is pinned to 0 and not a knob).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub max_tokens: u32,
}

impl Default for EvalSection {
    fn default() -> EvalSection {
        EvalSection {
            max_tokens: default_eval_max_tokens(),
        }
    }
}

/// Retry behavior for endpoint requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrySection {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub backoff_multiplier: f64,
}

impl Default for RetrySection {
    fn default() -> RetrySection {
        let policy = RetryPolicy::default();
        RetrySection {
            max_attempts: policy.max_attempts,
            initial_backoff_ms: policy.initial_backoff_ms,
            backoff_multiplier: policy.backoff_multiplier,
        }
    }
}

impl RetrySection {
    pub fn policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_attempts,
            initial_backoff_ms: self.initial_backoff_ms,
            backoff_multiplier: self.backoff_multiplier,
            ..RetryPolicy::default()
        }
    }
}

/// One model endpoint as written in the config file. An empty
/// `api_key_env` means the endpoint is unauthenticated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointSection {
    pub base_url: String,
    pub model_name: String,
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
}

impl EndpointSection {
    pub fn endpoint(&self) -> EndpointConfig {
        EndpointConfig {
            base_url: self.base_url.clone(),
            model_name: self.model_name.clone(),
            api_key_env: if self.api_key_env.is_empty() {
                None
            } else {
                Some(self.api_key_env.clone())
            },
            timeout_secs: self.timeout_secs,
            max_parallel: self.max_parallel,
        }
    }
}

/// A named source corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseSection {
    pub name: String,
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: String,
}

fn default_format() -> String {
    "ndjson".to_string()
}

/// A named benchmark gold file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSection {
    pub name: String,
    pub path: PathBuf,
}

/// A named evaluation endpoint: some fine-tuned model being measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTargetSection {
    pub name: String,
    #[serde(flatten)]
    pub endpoint: EndpointSection,
    /// The strategy this model was fine-tuned with, if declared here rather
    /// than per invocation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_strategy: Option<Strategy>,
}

/// The whole run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub output_root: PathBuf,
    pub seed: u64,
    pub templates_dir: PathBuf,
    pub corpus: CorpusSection,
    pub persona: PersonaSection,
    pub eval: EvalSection,
    pub retry: RetrySection,
    /// The persona generator endpoint; optional so offline subcommands can
    /// run from a config that never names one.
    pub generator: Option<EndpointSection>,
    pub bases: Vec<BaseSection>,
    pub benchmarks: Vec<BenchmarkSection>,
    pub eval_targets: Vec<EvalTargetSection>,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            output_root: default_output_root(),
            seed: 0,
            templates_dir: default_templates_dir(),
            corpus: CorpusSection::default(),
            persona: PersonaSection::default(),
            eval: EvalSection::default(),
            retry: RetrySection::default(),
            generator: None,
            bases: Vec::new(),
            benchmarks: Vec::new(),
            eval_targets: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))?;
        config.check_names()?;
        Ok(config)
    }

    fn check_names(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for base in &self.bases {
            if !seen.insert(format!("base {}", base.name)) {
                return Err(Error::Config(format!("duplicate base \"{}\"", base.name)));
            }
        }
        let mut seen = BTreeSet::new();
        for benchmark in &self.benchmarks {
            if !seen.insert(&benchmark.name) {
                return Err(Error::Config(format!(
                    "duplicate benchmark \"{}\"",
                    benchmark.name
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for target in &self.eval_targets {
            if !seen.insert(&target.name) {
                return Err(Error::Config(format!(
                    "duplicate eval target \"{}\"",
                    target.name
                )));
            }
        }
        Ok(())
    }

    /// Hash of the effective configuration. Computed over the canonical
    /// JSON encoding of the parsed struct, so formatting and comment changes
    /// in the TOML never shift the hash, while every meaningful setting does.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..16])
    }

    pub fn base(&self, name: &str) -> Result<&BaseSection> {
        self.bases.iter().find(|b| b.name == name).ok_or_else(|| {
            Error::Config(format!(
                "unknown base \"{name}\" (configured: {})",
                names(self.bases.iter().map(|b| b.name.as_str()))
            ))
        })
    }

    pub fn benchmark(&self, name: &str) -> Result<&BenchmarkSection> {
        self.benchmarks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown benchmark \"{name}\" (configured: {})",
                    names(self.benchmarks.iter().map(|b| b.name.as_str()))
                ))
            })
    }

    pub fn eval_target(&self, name: &str) -> Result<&EvalTargetSection> {
        self.eval_targets
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown eval target \"{name}\" (configured: {})",
                    names(self.eval_targets.iter().map(|t| t.name.as_str()))
                ))
            })
    }

    pub fn generator(&self) -> Result<&EndpointSection> {
        self.generator.as_ref().ok_or_else(|| {
            Error::Config("no [generator] endpoint configured".to_string())
        })
    }

    /// Dry-run every setting without touching any output: template files
    /// parse and carry their placeholders, data paths exist, benchmark gold
    /// files load (which canonicalizes every gold answer), API key
    /// environment variables resolve, and — unless `offline` — endpoints
    /// accept a TCP connection. Returns one line per problem found.
    pub fn validate(&self, offline: bool) -> Vec<String> {
        let mut problems = Vec::new();

        if let Err(e) = TemplateSet::load(&self.templates_dir) {
            problems.push(format!("templates: {e}"));
        }
        for base in &self.bases {
            if !base.path.exists() {
                problems.push(format!(
                    "base \"{}\": no such file {}",
                    base.name,
                    base.path.display()
                ));
            }
            if base.format.parse::<crate::corpus::RecordFormat>().is_err() {
                problems.push(format!(
                    "base \"{}\": unknown format \"{}\"",
                    base.name, base.format
                ));
            }
        }
        for benchmark in &self.benchmarks {
            if let Err(e) = crate::grader::load_benchmark(&benchmark.path) {
                problems.push(format!("benchmark \"{}\": {e}", benchmark.name));
            }
        }
        if self.persona.domain_pool_size == 0 {
            problems.push("persona.domain_pool_size must be at least 1".to_string());
        }
        if self.corpus.required_substrings.iter().any(|s| s.is_empty()) {
            problems.push("corpus.required_substrings contains an empty marker".to_string());
        }

        let mut endpoints: Vec<(String, &EndpointSection)> = Vec::new();
        if let Some(generator) = &self.generator {
            endpoints.push(("generator".to_string(), generator));
        }
        for target in &self.eval_targets {
            endpoints.push((format!("eval target \"{}\"", target.name), &target.endpoint));
        }
        for (label, section) in endpoints {
            if !section.api_key_env.is_empty() && std::env::var(&section.api_key_env).is_err() {
                problems.push(format!(
                    "{label}: api_key_env {} is not set",
                    section.api_key_env
                ));
            }
            match host_port(&section.base_url) {
                Ok(addr) => {
                    if !offline {
                        if let Err(e) = connect(&addr) {
                            problems.push(format!("{label}: {} unreachable: {e}", section.base_url));
                        }
                    }
                }
                Err(e) => problems.push(format!("{label}: {e}")),
            }
        }
        problems
    }
}

fn names<'a>(iter: impl Iterator<Item = &'a str>) -> String {
    let list: Vec<&str> = iter.collect();
    if list.is_empty() {
        "none".to_string()
    } else {
        list.join(", ")
    }
}

/// Extract `host:port` from an http(s) base URL without fetching anything.
fn host_port(base_url: &str) -> Result<String> {
    let (scheme, rest) = base_url
        .split_once("://")
        .ok_or_else(|| Error::Config(format!("bad URL \"{base_url}\" (missing scheme)")))?;
    let default_port = match scheme {
        "http" => 80,
        "https" => 443,
        other => {
            return Err(Error::Config(format!(
                "bad URL \"{base_url}\" (unsupported scheme \"{other}\")"
            )))
        }
    };
    let authority = rest.split(['/', '?', '#']).next().unwrap_or("");
    if authority.is_empty() {
        return Err(Error::Config(format!("bad URL \"{base_url}\" (no host)")));
    }
    Ok(match authority.rsplit_once(':') {
        Some((host, port)) if port.chars().all(|c| c.is_ascii_digit()) && !port.is_empty() => {
            format!("{host}:{port}")
        }
        _ => format!("{authority}:{default_port}"),
    })
}

fn connect(addr: &str) -> std::result::Result<(), String> {
    let mut addrs = addr
        .to_socket_addrs()
        .map_err(|e| format!("cannot resolve: {e}"))?;
    let addr = addrs.next().ok_or_else(|| "no address".to_string())?;
    TcpStream::connect_timeout(&addr, Duration::from_secs(3))
        .map(|_| ())
        .map_err(|e| e.to_string())
}
