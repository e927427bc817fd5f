//! Chat-completions HTTP client: retries, bounded parallelism, and an
//! append-only response ledger that makes every run replayable.
//!
//! The ledger is the backbone of resumability. Every successful completion
//! is recorded under a deterministic [`request_key`] before it is returned,
//! so re-running any step with an intact ledger answers from disk and
//! performs zero network calls.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Endpoint root; the client POSTs to `{base_url}/chat/completions`.
    pub base_url: String,
    pub model_name: String,
    /// Environment variable holding the bearer token; `None` for
    /// unauthenticated endpoints. Resolved once at client construction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
}

fn default_timeout_secs() -> u64 {
    120
}

fn default_max_parallel() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: "user".to_string(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

/// The exact JSON body sent over the wire. Also the input to
/// [`request_key`], so the key covers everything the model sees.
fn wire_body(model: &str, request: &ChatRequest) -> serde_json::Value {
    json!({
        "model": model,
        "messages": request.messages,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    })
}

/// Deterministic identity of a request: SHA-256 over the serialized wire
/// body (model, messages, temperature, max_tokens). Stable across runs and
/// processes for identical content.
pub fn request_key(model: &str, request: &ChatRequest) -> String {
    let body = serde_json::to_vec(&wire_body(model, request)).expect("wire body serializes");
    hex::encode(Sha256::digest(body))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub backoff_multiplier: f64,
    /// HTTP statuses worth retrying; transport errors (connect, timeout)
    /// are always retryable.
    pub retryable_statuses: Vec<u16>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff_ms: 500,
            backoff_multiplier: 2.0,
            retryable_statuses: vec![408, 429, 500, 502, 503, 504],
        }
    }
}

impl RetryPolicy {
    /// A policy with no waiting, for tests.
    pub fn immediate(max_attempts: u32) -> RetryPolicy {
        RetryPolicy {
            max_attempts,
            initial_backoff_ms: 0,
            ..RetryPolicy::default()
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = self.backoff_multiplier.powi(attempt.saturating_sub(1) as i32);
        Duration::from_millis((self.initial_backoff_ms as f64 * factor) as u64)
    }
}

/// What the ledger stores per request: enough to reproduce a completion
/// byte-for-byte without the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerResponse {
    pub content: String,
    pub finish_reason: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct LedgerEntry {
    key: String,
    model: String,
    response: LedgerResponse,
    timestamp: u64,
}

/// Append-only newline-delimited JSON store of completed requests.
///
/// A trailing partial line — the signature of a process killed mid-write —
/// is truncated away on open. Corruption anywhere earlier is an error:
/// that is not an interrupted append but a damaged file. Duplicate keys are
/// legal; the last entry wins.
#[derive(Debug)]
pub struct Ledger {
    path: PathBuf,
    file: std::fs::File,
    entries: HashMap<String, LedgerResponse>,
}

impl Ledger {
    pub fn open(path: &Path) -> Result<Ledger> {
        let raw = match std::fs::read(path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(Error::io(path, e)),
        };

        let mut entries = HashMap::new();
        let mut valid_len = 0usize;
        let mut lineno = 0usize;
        let mut offset = 0usize;
        while offset < raw.len() {
            lineno += 1;
            let end = raw[offset..]
                .iter()
                .position(|&b| b == b'\n')
                .map(|i| offset + i);
            let (line, next, terminated) = match end {
                Some(end) => (&raw[offset..end], end + 1, true),
                None => (&raw[offset..], raw.len(), false),
            };
            match serde_json::from_slice::<LedgerEntry>(line) {
                Ok(entry) => {
                    entries.insert(entry.key, entry.response);
                    valid_len = next;
                    offset = next;
                }
                Err(e) => {
                    if terminated && next < raw.len() {
                        // Damage in the middle of the file is not an
                        // interrupted append; refuse to guess.
                        return Err(Error::Malformed {
                            path: path.to_path_buf(),
                            line: lineno,
                            detail: format!("corrupt ledger entry: {e}"),
                        });
                    }
                    break;
                }
            }
        }

        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        if (valid_len as u64) < std::fs::metadata(path).map_err(|e| Error::io(path, e))?.len() {
            file.set_len(valid_len as u64).map_err(|e| Error::io(path, e))?;
        }
        Ok(Ledger {
            path: path.to_path_buf(),
            file,
            entries,
        })
    }

    pub fn get(&self, key: &str) -> Option<&LedgerResponse> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn record(&mut self, key: &str, model: &str, response: &LedgerResponse) -> Result<()> {
        let entry = LedgerEntry {
            key: key.to_string(),
            model: model.to_string(),
            response: response.clone(),
            timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let mut line = serde_json::to_vec(&entry).expect("ledger entry serializes");
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|()| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))?;
        self.entries.insert(entry.key, entry.response);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    pub finish_reason: String,
    /// Network attempts made (0 when answered from the ledger).
    pub attempts: u32,
    pub from_ledger: bool,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    content: String,
}

#[derive(Debug)]
pub struct LlmClient {
    config: EndpointConfig,
    policy: RetryPolicy,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
    ledger: Mutex<Ledger>,
    network_calls: AtomicUsize,
}

impl LlmClient {
    /// Build a client. The API key is resolved here, once, so a missing
    /// variable fails before any work starts rather than mid-batch.
    pub fn new(config: EndpointConfig, policy: RetryPolicy, ledger: Ledger) -> Result<LlmClient> {
        let api_key = match &config.api_key_env {
            Some(name) => Some(
                std::env::var(name).map_err(|_| Error::MissingApiKey { name: name.clone() })?,
            ),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(LlmClient {
            config,
            policy,
            api_key,
            http,
            ledger: Mutex::new(ledger),
            network_calls: AtomicUsize::new(0),
        })
    }

    pub fn model_name(&self) -> &str {
        &self.config.model_name
    }

    /// Total HTTP requests issued (retries included, ledger hits excluded).
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::SeqCst)
    }

    /// Complete one request, answering from the ledger when possible. A
    /// fresh success is appended to the ledger before it is returned.
    pub fn complete(&self, request: &ChatRequest) -> Result<CompletionResult> {
        let key = request_key(&self.config.model_name, request);
        if let Some(hit) = self.ledger.lock().expect("ledger lock").get(&key) {
            return Ok(CompletionResult {
                text: hit.content.clone(),
                finish_reason: hit.finish_reason.clone(),
                attempts: 0,
                from_ledger: true,
            });
        }

        let body = wire_body(&self.config.model_name, request);
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut last_failure = String::new();
        for attempt in 1..=self.policy.max_attempts {
            if attempt > 1 {
                std::thread::sleep(self.policy.backoff(attempt - 1));
            }
            self.network_calls.fetch_add(1, Ordering::SeqCst);
            let mut builder = self.http.post(&url).json(&body);
            if let Some(key) = &self.api_key {
                builder = builder.bearer_auth(key);
            }
            let response = match builder.send() {
                Ok(response) => response,
                Err(e) => {
                    last_failure = format!("transport: {e}");
                    continue;
                }
            };
            let status = response.status().as_u16();
            let text = response.text().unwrap_or_default();
            if !(200..300).contains(&status) {
                if self.policy.retryable_statuses.contains(&status) {
                    last_failure = format!("status {status}");
                    continue;
                }
                return Err(Error::HttpStatus {
                    status,
                    excerpt: excerpt(&text),
                });
            }
            let parsed: WireResponse = serde_json::from_str(&text).map_err(|_| Error::BadResponse {
                excerpt: excerpt(&text),
            })?;
            let Some(choice) = parsed.choices.into_iter().next() else {
                return Err(Error::BadResponse {
                    excerpt: excerpt(&text),
                });
            };
            let ledger_response = LedgerResponse {
                content: choice.message.content,
                finish_reason: choice.finish_reason.unwrap_or_else(|| "stop".to_string()),
            };
            self.ledger
                .lock()
                .expect("ledger lock")
                .record(&key, &self.config.model_name, &ledger_response)?;
            return Ok(CompletionResult {
                text: ledger_response.content,
                finish_reason: ledger_response.finish_reason,
                attempts: attempt,
                from_ledger: false,
            });
        }
        Err(Error::RetriesExhausted {
            attempts: self.policy.max_attempts,
            last: last_failure,
        })
    }

    /// Complete a batch with at most `max_parallel` requests in flight.
    /// Results are aligned to input order; per-item failures are embedded
    /// rather than aborting the batch.
    pub fn complete_batch(&self, requests: &[ChatRequest]) -> Vec<Result<CompletionResult>> {
        if requests.is_empty() {
            return Vec::new();
        }
        let workers = self.config.max_parallel.max(1).min(requests.len());
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<CompletionResult>>>> =
            requests.iter().map(|_| Mutex::new(None)).collect();

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let index = next.fetch_add(1, Ordering::SeqCst);
                    if index >= requests.len() {
                        break;
                    }
                    let result = self.complete(&requests[index]);
                    *slots[index].lock().expect("batch slot lock") = Some(result);
                });
            }
        });

        slots
            .into_iter()
            .map(|slot| {
                slot.into_inner()
                    .expect("batch slot lock")
                    .expect("every index visited")
            })
            .collect()
    }
}

fn excerpt(text: &str) -> String {
    let trimmed = text.trim();
    let mut cut = trimmed.len().min(200);
    while !trimmed.is_char_boundary(cut) {
        cut -= 1;
    }
    if cut < trimmed.len() {
        format!("{}…", &trimmed[..cut])
    } else {
        trimmed.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mockserver::{MockResponse, MockRule, MockServer, MockServerConfig};
    use std::collections::HashSet;

    fn request(text: &str) -> ChatRequest {
        ChatRequest {
            messages: vec![ChatMessage::user(text)],
            temperature: 0.0,
            max_tokens: 64,
        }
    }

    fn client_for(server: &MockServer, dir: &tempfile::TempDir, parallel: usize) -> LlmClient {
        let config = EndpointConfig {
            base_url: server.url(),
            model_name: "mock-model".to_string(),
            api_key_env: None,
            timeout_secs: 10,
            max_parallel: parallel,
        };
        let ledger = Ledger::open(&dir.path().join("ledger.jsonl")).unwrap();
        LlmClient::new(config, RetryPolicy::immediate(3), ledger).unwrap()
    }

    #[test]
    fn completes_and_records_to_the_ledger() {
        let server = MockServer::start(MockServerConfig {
            rules: vec![MockRule {
                contains_all: vec!["harbor".to_string()],
                response: MockResponse::with_content("PERSONA: a harbor pilot"),
                times: None,
            }],
            ..MockServerConfig::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let client = client_for(&server, &dir, 1);

        let result = client.complete(&request("harbor master question")).unwrap();
        assert_eq!(result.text, "PERSONA: a harbor pilot");
        assert_eq!(result.finish_reason, "stop");
        assert_eq!(result.attempts, 1);
        assert!(!result.from_ledger);

        let ledger = Ledger::open(&dir.path().join("ledger.jsonl")).unwrap();
        assert_eq!(ledger.len(), 1);
    }

    #[test]
    fn identical_request_replays_with_zero_network_calls() {
        let server = MockServer::start(MockServerConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let client = client_for(&server, &dir, 1);

        let first = client.complete(&request("same thing")).unwrap();
        assert_eq!(client.network_calls(), 1);
        let second = client.complete(&request("same thing")).unwrap();
        assert_eq!(client.network_calls(), 1, "second call hit the network");
        assert_eq!(server.stats().requests, 1);
        assert!(second.from_ledger);
        assert_eq!(second.text, first.text);
        assert_eq!(second.finish_reason, first.finish_reason);
    }

    #[test]
    fn retries_through_transient_failures() {
        let server = MockServer::start(MockServerConfig {
            default: MockResponse::with_content("made it"),
            rules: vec![MockRule {
                contains_all: vec![],
                response: MockResponse::with_status(503),
                times: Some(2),
            }],
            ..MockServerConfig::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let client = client_for(&server, &dir, 1);

        let result = client.complete(&request("flaky")).unwrap();
        assert_eq!(result.text, "made it");
        assert_eq!(result.attempts, 3);
    }

    #[test]
    fn exhausted_retries_carry_the_last_failure() {
        let server = MockServer::start(MockServerConfig {
            default: MockResponse::with_status(500),
            ..MockServerConfig::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let client = client_for(&server, &dir, 1);

        let err = client.complete(&request("always down")).unwrap_err();
        assert!(
            matches!(err, Error::RetriesExhausted { attempts: 3, ref last } if last == "status 500"),
            "got {err}"
        );
        assert_eq!(server.stats().requests, 3);
    }

    #[test]
    fn non_retryable_status_fails_immediately() {
        let server = MockServer::start(MockServerConfig {
            default: MockResponse {
                status: 401,
                raw_body: Some(r#"{"error":"bad key"}"#.to_string()),
                ..MockResponse::default()
            },
            ..MockServerConfig::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let client = client_for(&server, &dir, 1);

        let err = client.complete(&request("x")).unwrap_err();
        assert!(matches!(err, Error::HttpStatus { status: 401, .. }), "got {err}");
        assert_eq!(server.stats().requests, 1);
    }

    #[test]
    fn malformed_response_body_is_an_error_with_excerpt() {
        let server = MockServer::start(MockServerConfig {
            default: MockResponse {
                raw_body: Some("definitely not json".to_string()),
                ..MockResponse::default()
            },
            ..MockServerConfig::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let client = client_for(&server, &dir, 1);

        let err = client.complete(&request("x")).unwrap_err();
        assert!(
            matches!(err, Error::BadResponse { ref excerpt } if excerpt.contains("definitely not json")),
            "got {err}"
        );
    }

    #[test]
    fn missing_api_key_fails_at_construction() {
        let config = EndpointConfig {
            base_url: "http://127.0.0.1:1".to_string(),
            model_name: "m".to_string(),
            api_key_env: Some("DEFINITELY_UNSET_VAR_8321".to_string()),
            timeout_secs: 1,
            max_parallel: 1,
        };
        let dir = tempfile::tempdir().unwrap();
        let ledger = Ledger::open(&dir.path().join("l.jsonl")).unwrap();
        let err = LlmClient::new(config, RetryPolicy::default(), ledger).unwrap_err();
        assert!(matches!(err, Error::MissingApiKey { ref name } if name.contains("8321")));
    }

    #[test]
    fn batch_preserves_order_and_respects_the_parallel_bound() {
        let rules = (0..10)
            .map(|i| MockRule {
                contains_all: vec![format!("item-{i}-marker")],
                response: MockResponse::with_content(&format!("answer {i}")),
                times: None,
            })
            .collect();
        let server = MockServer::start(MockServerConfig {
            rules,
            latency_jitter_ms: 20,
            jitter_seed: 7,
            ..MockServerConfig::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let client = client_for(&server, &dir, 3);

        let requests: Vec<ChatRequest> =
            (0..10).map(|i| request(&format!("item-{i}-marker"))).collect();
        let results = client.complete_batch(&requests);
        for (i, result) in results.iter().enumerate() {
            assert_eq!(result.as_ref().unwrap().text, format!("answer {i}"));
        }
        assert!(
            server.stats().high_water <= 3,
            "high water {} exceeded max_parallel",
            server.stats().high_water
        );
    }

    #[test]
    fn batch_embeds_per_item_failures() {
        let server = MockServer::start(MockServerConfig {
            default: MockResponse::with_content("fine"),
            rules: vec![MockRule {
                contains_all: vec!["item-3".to_string()],
                response: MockResponse::with_status(500),
                times: None,
            }],
            ..MockServerConfig::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let client = client_for(&server, &dir, 2);

        let requests: Vec<ChatRequest> = (0..5).map(|i| request(&format!("item-{i}"))).collect();
        let results = client.complete_batch(&requests);
        assert_eq!(results.len(), 5);
        for (i, result) in results.iter().enumerate() {
            if i == 3 {
                assert!(result.is_err(), "index 3 should fail");
            } else {
                assert_eq!(result.as_ref().unwrap().text, "fine");
            }
        }
    }

    #[test]
    fn empty_batch_is_an_empty_result() {
        let server = MockServer::start(MockServerConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let client = client_for(&server, &dir, 4);
        assert!(client.complete_batch(&[]).is_empty());
        assert_eq!(server.stats().requests, 0);
    }

    #[test]
    fn batch_replays_entirely_from_ledger() {
        let server = MockServer::start(MockServerConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let requests: Vec<ChatRequest> = (0..6).map(|i| request(&format!("q{i}"))).collect();

        let first: Vec<String> = {
            let client = client_for(&server, &dir, 2);
            client
                .complete_batch(&requests)
                .into_iter()
                .map(|r| r.unwrap().text)
                .collect()
        };
        assert_eq!(server.stats().requests, 6);

        let client = client_for(&server, &dir, 2);
        let second: Vec<CompletionResult> = client
            .complete_batch(&requests)
            .into_iter()
            .map(|r| r.unwrap())
            .collect();
        assert_eq!(server.stats().requests, 6, "replay touched the network");
        assert_eq!(client.network_calls(), 0);
        assert!(second.iter().all(|r| r.from_ledger));
        let texts: Vec<String> = second.into_iter().map(|r| r.text).collect();
        assert_eq!(first, texts);
    }

    #[test]
    fn ledger_truncates_a_trailing_partial_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        {
            let mut ledger = Ledger::open(&path).unwrap();
            ledger
                .record(
                    "k1",
                    "m",
                    &LedgerResponse {
                        content: "one".to_string(),
                        finish_reason: "stop".to_string(),
                    },
                )
                .unwrap();
        }
        let intact = std::fs::read(&path).unwrap();
        let mut damaged = intact.clone();
        damaged.extend_from_slice(b"{\"key\":\"k2\",\"model\":\"m\",\"resp");
        std::fs::write(&path, &damaged).unwrap();

        let ledger = Ledger::open(&path).unwrap();
        assert_eq!(ledger.len(), 1);
        assert!(ledger.get("k1").is_some());
        // The partial tail was cut off, restoring the intact prefix.
        assert_eq!(std::fs::read(&path).unwrap(), intact);
    }

    #[test]
    fn ledger_rejects_mid_file_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        std::fs::write(
            &path,
            concat!(
                "{\"key\":\"k1\",\"model\":\"m\",\"response\":{\"content\":\"a\",\"finish_reason\":\"stop\"},\"timestamp\":1}\n",
                "GARBAGE LINE\n",
                "{\"key\":\"k3\",\"model\":\"m\",\"response\":{\"content\":\"c\",\"finish_reason\":\"stop\"},\"timestamp\":3}\n",
            ),
        )
        .unwrap();
        let err = Ledger::open(&path).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 2, .. }), "got {err}");
    }

    #[test]
    fn ledger_last_duplicate_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        {
            let mut ledger = Ledger::open(&path).unwrap();
            for content in ["first", "second"] {
                ledger
                    .record(
                        "k",
                        "m",
                        &LedgerResponse {
                            content: content.to_string(),
                            finish_reason: "stop".to_string(),
                        },
                    )
                    .unwrap();
            }
        }
        let ledger = Ledger::open(&path).unwrap();
        assert_eq!(ledger.get("k").unwrap().content, "second");
    }

    #[test]
    fn request_keys_are_collision_free_at_scale() {
        // Hash-quality smoke test: one million distinct requests, one
        // million distinct keys.
        let mut keys: HashSet<[u8; 32]> = HashSet::with_capacity(1_000_000);
        let mut raw = [0u8; 32];
        for i in 0..1_000_000u32 {
            let key = request_key("m", &request(&format!("synthetic request {i}")));
            hex::decode_to_slice(&key, &mut raw).unwrap();
            assert!(keys.insert(raw), "collision at {i}");
        }
    }
}
