//! A tiny in-process chat-completions endpoint for tests and offline demos.
//!
//! The server answers `POST /chat/completions` from a fixture: an ordered
//! rule list matched against the raw request body, with a default response
//! when nothing matches. It can inject latency jitter, scripted failures,
//! and a "wedge" mode that stops answering after N requests — enough to
//! exercise retries, parallelism bounds, and kill/resume flows without a
//! real model behind it.
//!
//! Admin endpoints (`GET /__admin/stats`, `GET /__admin/requests`,
//! `POST /__admin/reset`) expose counters to out-of-process callers; tests
//! in this crate can read the same counters directly via [`MockServer`].

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockResponse {
    pub content: String,
    #[serde(default = "default_status")]
    pub status: u16,
    #[serde(default = "default_finish_reason")]
    pub finish_reason: String,
    /// When set, this exact body is sent instead of the chat-completions
    /// JSON shape — for malformed-response tests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_body: Option<String>,
}

fn default_status() -> u16 {
    200
}

fn default_finish_reason() -> String {
    "stop".to_string()
}

impl Default for MockResponse {
    fn default() -> Self {
        MockResponse {
            content: "ok".to_string(),
            status: 200,
            finish_reason: "stop".to_string(),
            raw_body: None,
        }
    }
}

impl MockResponse {
    pub fn with_content(content: &str) -> MockResponse {
        MockResponse {
            content: content.to_string(),
            ..MockResponse::default()
        }
    }

    pub fn with_status(status: u16) -> MockResponse {
        MockResponse {
            status,
            ..MockResponse::default()
        }
    }
}

/// First matching rule wins; a rule matches when the raw request body
/// contains every string in `contains_all`. `times` caps how often the rule
/// fires before it is skipped (for fail-then-succeed scripts).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockRule {
    pub contains_all: Vec<String>,
    pub response: MockResponse,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct MockServerConfig {
    #[serde(default)]
    pub default: MockResponse,
    #[serde(default)]
    pub rules: Vec<MockRule>,
    /// Completion requests after the first N are accepted but never
    /// answered, simulating a wedged endpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hang_after: Option<usize>,
    /// Maximum per-request artificial delay; the actual delay is a
    /// deterministic function of `jitter_seed` and the arrival number.
    #[serde(default)]
    pub latency_jitter_ms: u64,
    #[serde(default)]
    pub jitter_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockStats {
    /// Completion requests that arrived (including hung ones).
    pub requests: usize,
    /// Completion responses fully written.
    pub served: usize,
    /// Most completion requests simultaneously in flight.
    pub high_water: usize,
}

struct MockState {
    config: Mutex<MockServerConfig>,
    requests: AtomicUsize,
    served: AtomicUsize,
    in_flight: AtomicUsize,
    high_water: AtomicUsize,
    bodies: Mutex<Vec<String>>,
    shutdown: AtomicBool,
}

pub struct MockServer {
    addr: SocketAddr,
    state: Arc<MockState>,
    accept_handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(config: MockServerConfig) -> std::io::Result<MockServer> {
        Self::start_on(config, 0)
    }

    /// Bind a specific port (0 picks a free one).
    pub fn start_on(config: MockServerConfig, port: u16) -> std::io::Result<MockServer> {
        let listener = TcpListener::bind(("127.0.0.1", port))?;
        let addr = listener.local_addr()?;
        let state = Arc::new(MockState {
            config: Mutex::new(config),
            requests: AtomicUsize::new(0),
            served: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            high_water: AtomicUsize::new(0),
            bodies: Mutex::new(Vec::new()),
            shutdown: AtomicBool::new(false),
        });
        let accept_state = Arc::clone(&state);
        let accept_handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if accept_state.shutdown.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let conn_state = Arc::clone(&accept_state);
                std::thread::spawn(move || handle_connection(stream, conn_state));
            }
        });
        Ok(MockServer {
            addr,
            state,
            accept_handle: Some(accept_handle),
        })
    }

    /// Base URL for an [`crate::client::EndpointConfig`].
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stats(&self) -> MockStats {
        MockStats {
            requests: self.state.requests.load(Ordering::SeqCst),
            served: self.state.served.load(Ordering::SeqCst),
            high_water: self.state.high_water.load(Ordering::SeqCst),
        }
    }

    pub fn request_bodies(&self) -> Vec<String> {
        self.state.bodies.lock().expect("mock state lock").clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.state.shutdown.store(true, Ordering::SeqCst);
        // Wake the blocking accept so the loop observes the flag.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.accept_handle.take() {
            let _ = handle.join();
        }
    }
}

struct InFlightGuard<'a>(&'a MockState);

impl<'a> InFlightGuard<'a> {
    fn enter(state: &'a MockState) -> InFlightGuard<'a> {
        let now = state.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        state.high_water.fetch_max(now, Ordering::SeqCst);
        InFlightGuard(state)
    }
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

fn handle_connection(mut stream: TcpStream, state: Arc<MockState>) {
    let Some((method, path, body)) = read_request(&mut stream) else {
        return;
    };
    match (method.as_str(), path.as_str()) {
        ("POST", "/chat/completions") => handle_completion(stream, &state, body),
        ("GET", "/__admin/stats") => {
            let stats = json!({
                "requests": state.requests.load(Ordering::SeqCst),
                "served": state.served.load(Ordering::SeqCst),
                "high_water": state.high_water.load(Ordering::SeqCst),
            });
            write_response(&mut stream, 200, &stats.to_string());
        }
        ("GET", "/__admin/requests") => {
            let bodies = state.bodies.lock().expect("mock state lock").clone();
            write_response(&mut stream, 200, &json!(bodies).to_string());
        }
        ("POST", "/__admin/reset") => {
            state.requests.store(0, Ordering::SeqCst);
            state.served.store(0, Ordering::SeqCst);
            state.high_water.store(0, Ordering::SeqCst);
            state.bodies.lock().expect("mock state lock").clear();
            write_response(&mut stream, 200, "{}");
        }
        _ => write_response(&mut stream, 404, "{\"error\":\"not found\"}"),
    }
}

fn handle_completion(mut stream: TcpStream, state: &MockState, body: String) {
    let _guard = InFlightGuard::enter(state);
    let arrival = state.requests.fetch_add(1, Ordering::SeqCst) + 1;
    state
        .bodies
        .lock()
        .expect("mock state lock")
        .push(body.clone());

    let (response, jitter_ms, hang) = {
        let mut config = state.config.lock().expect("mock state lock");
        let hang = config.hang_after.is_some_and(|n| arrival > n);
        let jitter = if config.latency_jitter_ms > 0 {
            rng::derive_seed(config.jitter_seed, &arrival.to_string())
                % (config.latency_jitter_ms + 1)
        } else {
            0
        };
        let response = pick_response(&mut config, &body);
        (response, jitter, hang)
    };

    if hang {
        // Hold the connection open without answering until shutdown.
        while !state.shutdown.load(Ordering::SeqCst) {
            std::thread::sleep(Duration::from_millis(50));
        }
        return;
    }
    if jitter_ms > 0 {
        std::thread::sleep(Duration::from_millis(jitter_ms));
    }

    let body = match &response.raw_body {
        Some(raw) => raw.clone(),
        None => json!({
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": response.content},
                "finish_reason": response.finish_reason,
            }]
        })
        .to_string(),
    };
    write_response(&mut stream, response.status, &body);
    state.served.fetch_add(1, Ordering::SeqCst);
}

fn pick_response(config: &mut MockServerConfig, body: &str) -> MockResponse {
    for rule in &mut config.rules {
        if rule.times == Some(0) {
            continue;
        }
        if rule.contains_all.iter().all(|needle| body.contains(needle)) {
            if let Some(times) = &mut rule.times {
                *times -= 1;
            }
            return rule.response.clone();
        }
    }
    config.default.clone()
}

/// Minimal HTTP/1.1 request reader: request line, headers (only
/// Content-Length is honored), then exactly that many body bytes.
fn read_request(stream: &mut TcpStream) -> Option<(String, String, String)> {
    let _ = stream.set_read_timeout(Some(Duration::from_secs(30)));
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        if let Some(pos) = find_subslice(&buf, b"\r\n\r\n") {
            break pos;
        }
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            return None;
        }
        buf.extend_from_slice(&chunk[..n]);
    };

    let head = String::from_utf8_lossy(&buf[..header_end]).into_owned();
    let mut lines = head.lines();
    let request_line = lines.next()?;
    let mut parts = request_line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();
    let content_length = lines
        .filter_map(|line| line.split_once(':'))
        .find(|(name, _)| name.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, value)| value.trim().parse::<usize>().ok())
        .unwrap_or(0);

    let mut body = buf[header_end + 4..].to_vec();
    while body.len() < content_length {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            break;
        }
        body.extend_from_slice(&chunk[..n]);
    }
    body.truncate(content_length);
    Some((method, path, String::from_utf8_lossy(&body).into_owned()))
}

fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack
        .windows(needle.len())
        .position(|window| window == needle)
}

fn write_response(stream: &mut TcpStream, status: u16, body: &str) {
    let reason = if status == 200 { "OK" } else { "ERR" };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(response.as_bytes());
    let _ = stream.flush();
}
