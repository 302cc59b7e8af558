//! JSON-over-HTTP model protocol: a blocking client with bounded retries,
//! and a deterministic stub model that can also be served locally.
//!
//! Endpoints are `POST /v1/generate` and `POST /v1/score`. Scores are
//! natural-log likelihoods summed over completion tokens.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::tokenizer::{END_OF_CHUNK_MARKER, IMAGE_MARKER};

pub const ENDPOINT_ENV: &str = "MODEL_ENDPOINT";
pub const DEFAULT_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ClientError {
    #[error("invalid request: {0}")]
    Validation(String),
    #[error("request timed out")]
    Timeout,
    #[error("http status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("unconfigured pair")]
    Unconfigured,
    #[error("stub spec: {0}")]
    Spec(String),
    #[error("injected failure {0}")]
    Injected(u64),
}

impl ClientError {
    fn retryable(&self) -> bool {
        match self {
            ClientError::Timeout | ClientError::Transport(_) | ClientError::Malformed(_) => true,
            ClientError::Http { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub prompt: String,
    pub image_ids: Vec<String>,
    pub beams: u32,
    pub max_new_tokens: u32,
    pub stop_sequences: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_data: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub prompt: String,
    pub image_ids: Vec<String>,
    pub completion: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_data: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Length,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub text: String,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub logprob: f64,
}

fn check_images(prompt: &str, image_ids: &[String]) -> Result<(), ClientError> {
    let markers = prompt.matches(IMAGE_MARKER).count();
    if markers != image_ids.len() {
        return Err(ClientError::Validation(format!(
            "prompt has {markers} image markers but {} image ids",
            image_ids.len()
        )));
    }
    Ok(())
}

impl GenerateRequest {
    pub fn validate(&self) -> Result<(), ClientError> {
        check_images(&self.prompt, &self.image_ids)?;
        if self.beams == 0 {
            return Err(ClientError::Validation("beams must be at least 1".into()));
        }
        if self.max_new_tokens == 0 {
            return Err(ClientError::Validation("max_new_tokens must be at least 1".into()));
        }
        Ok(())
    }
}

impl ScoreRequest {
    pub fn validate(&self) -> Result<(), ClientError> {
        check_images(&self.prompt, &self.image_ids)?;
        if self.completion.is_empty() {
            return Err(ClientError::Validation("empty completion".into()));
        }
        Ok(())
    }
}

pub trait ModelClient: Send + Sync {
    fn generate(&self, req: &GenerateRequest) -> Result<GenerateResponse, ClientError>;
    fn score(&self, req: &ScoreRequest) -> Result<f64, ClientError>;
}

/// Cut `raw` at the earliest stop sequence and at `max_new_tokens`
/// whitespace-delimited tokens, whichever comes first.
pub fn apply_decoding(raw: &str, max_new_tokens: u32, stops: &[String]) -> GenerateResponse {
    let stop_at = stops.iter().filter(|s| !s.is_empty()).filter_map(|s| raw.find(s.as_str())).min();
    let body = &raw[..stop_at.unwrap_or(raw.len())];
    let mut words = 0u32;
    let mut in_word = false;
    for (i, c) in body.char_indices() {
        if c.is_whitespace() {
            in_word = false;
        } else if !in_word {
            if words == max_new_tokens {
                return GenerateResponse { text: body[..i].trim_end().to_owned(), finish_reason: FinishReason::Length };
            }
            words += 1;
            in_word = true;
        }
    }
    let finish_reason = if stop_at.is_none() && words >= max_new_tokens { FinishReason::Length } else { FinishReason::Stop };
    GenerateResponse { text: body.to_owned(), finish_reason }
}

/// Blocking HTTP client. Safe to share across threads; connections are pooled.
pub struct HttpModelClient {
    base: String,
    http: reqwest::blocking::Client,
    attempts: u32,
    backoff: Duration,
}

impl HttpModelClient {
    pub fn new(endpoint: &str) -> Result<Self, ClientError> {
        Self::with_timeout(endpoint, Duration::from_secs(60))
    }

    pub fn with_timeout(endpoint: &str, timeout: Duration) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Self {
            base: endpoint.trim_end_matches('/').to_owned(),
            http,
            attempts: DEFAULT_ATTEMPTS,
            backoff: Duration::from_millis(50),
        })
    }

    /// Client for the endpoint named by `MODEL_ENDPOINT`.
    pub fn from_env() -> Result<Self, ClientError> {
        let endpoint = std::env::var(ENDPOINT_ENV)
            .map_err(|_| ClientError::Validation(format!("{ENDPOINT_ENV} is not set")))?;
        Self::new(&endpoint)
    }

    pub fn with_retry(mut self, attempts: u32, backoff: Duration) -> Self {
        self.attempts = attempts.max(1);
        self.backoff = backoff;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.base
    }

    fn post_once(&self, path: &str, body: &[u8]) -> Result<Vec<u8>, ClientError> {
        let resp = self
            .http
            .post(format!("{}{path}", self.base))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec())
            .send()
            .map_err(|e| if e.is_timeout() { ClientError::Timeout } else { ClientError::Transport(e.to_string()) })?;
        let status = resp.status();
        let bytes = resp.bytes().map_err(|e| {
            if e.is_timeout() {
                ClientError::Timeout
            } else {
                ClientError::Transport(e.to_string())
            }
        })?;
        if !status.is_success() {
            return Err(ClientError::Http { status: status.as_u16(), body: String::from_utf8_lossy(&bytes).into_owned() });
        }
        Ok(bytes.to_vec())
    }

    fn post<T: serde::de::DeserializeOwned>(&self, path: &str, body: &[u8]) -> Result<T, ClientError> {
        let mut delay = self.backoff;
        let mut attempt = 1;
        loop {
            let result = self
                .post_once(path, body)
                .and_then(|b| serde_json::from_slice(&b).map_err(|e| ClientError::Malformed(e.to_string())));
            match result {
                Err(e) if e.retryable() && attempt < self.attempts => {
                    log::warn!("{path} attempt {attempt} failed: {e}");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

impl ModelClient for HttpModelClient {
    fn generate(&self, req: &GenerateRequest) -> Result<GenerateResponse, ClientError> {
        req.validate()?;
        let body = serde_json::to_vec(req).map_err(|e| ClientError::Validation(e.to_string()))?;
        let resp: GenerateResponse = self.post("/v1/generate", &body)?;
        let cut = apply_decoding(&resp.text, u32::MAX, &req.stop_sequences);
        if cut.text.len() < resp.text.len() {
            return Ok(GenerateResponse { text: cut.text, finish_reason: FinishReason::Stop });
        }
        Ok(resp)
    }

    fn score(&self, req: &ScoreRequest) -> Result<f64, ClientError> {
        req.validate()?;
        let body = serde_json::to_vec(req).map_err(|e| ClientError::Validation(e.to_string()))?;
        let resp: ScoreResponse = self.post("/v1/score", &body)?;
        if !resp.logprob.is_finite() {
            return Err(ClientError::Malformed(format!("non-finite logprob {}", resp.logprob)));
        }
        Ok(resp.logprob)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRule {
    #[serde(default)]
    pub prompt: Option<String>,
    #[serde(default)]
    pub prompt_regex: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRule {
    #[serde(default)]
    pub prompt: Option<String>,
    #[serde(default)]
    pub prompt_regex: Option<String>,
    pub completion: String,
    pub logprob: f64,
}

fn default_true() -> bool {
    true
}

fn default_logprob() -> f64 {
    -100.0
}

/// Stub behaviour, loadable from JSON.
///
/// Generation: exact-prompt rules, then regex rules in order, then echo of
/// the last demonstration's answer when `echo` is set. Scoring: exact rules,
/// regex rules, then a unigram table summed over completion words, then a
/// hash of the (prompt, completion) pair when `hash_scores` is set. Anything
/// still unresolved is an error when `strict`, otherwise `default_logprob`
/// (scores) or an empty generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubSpec {
    #[serde(default)]
    pub echo: bool,
    #[serde(default)]
    pub generate: Vec<GenerateRule>,
    #[serde(default)]
    pub score: Vec<ScoreRule>,
    #[serde(default)]
    pub unigram: BTreeMap<String, f64>,
    #[serde(default)]
    pub hash_scores: bool,
    #[serde(default = "default_true")]
    pub strict: bool,
    #[serde(default = "default_logprob")]
    pub default_logprob: f64,
    #[serde(default)]
    pub latency_ms: u64,
    #[serde(default)]
    pub fail_first_n: u64,
}

impl Default for StubSpec {
    fn default() -> Self {
        Self {
            echo: false,
            generate: Vec::new(),
            score: Vec::new(),
            unigram: BTreeMap::new(),
            hash_scores: false,
            strict: true,
            default_logprob: default_logprob(),
            latency_ms: 0,
            fail_first_n: 0,
        }
    }
}

impl StubSpec {
    pub fn echo() -> Self {
        Self { echo: true, ..Self::default() }
    }

    pub fn from_json(text: &str) -> Result<Self, ClientError> {
        serde_json::from_str(text).map_err(|e| ClientError::Spec(e.to_string()))
    }
}

enum Matcher {
    Exact(String),
    Regex(Regex),
}

impl Matcher {
    fn new(prompt: &Option<String>, regex: &Option<String>) -> Result<Self, ClientError> {
        match (prompt, regex) {
            (Some(p), None) => Ok(Matcher::Exact(p.clone())),
            (None, Some(r)) => Regex::new(r).map(Matcher::Regex).map_err(|e| ClientError::Spec(e.to_string())),
            _ => Err(ClientError::Spec("each rule needs exactly one of prompt, prompt_regex".into())),
        }
    }

    fn exact(&self, prompt: &str) -> bool {
        matches!(self, Matcher::Exact(p) if p == prompt)
    }

    fn regex(&self, prompt: &str) -> bool {
        matches!(self, Matcher::Regex(r) if r.is_match(prompt))
    }
}

/// Deterministic in-process model.
pub struct StubModel {
    spec: StubSpec,
    generate: Vec<(Matcher, String)>,
    score: Vec<(Matcher, String, f64)>,
    calls: AtomicU64,
}

const ANSWER_CUES: [&str; 3] = ["Output:", "Short answer:", "Answer:"];

/// The answer of the last complete demonstration in `prompt`, i.e. the text
/// after the last answer cue of the second-to-last chunk.
pub fn last_demo_answer(prompt: &str) -> Option<&str> {
    let mut chunks: Vec<&str> = prompt.split(END_OF_CHUNK_MARKER).collect();
    chunks.pop();
    let demo = chunks.pop()?;
    let (pos, cue) = ANSWER_CUES.iter().filter_map(|c| demo.rfind(c).map(|p| (p, *c))).max_by_key(|(p, _)| *p)?;
    let answer = &demo[pos + cue.len()..];
    Some(answer.strip_prefix(' ').unwrap_or(answer))
}

fn hash_logprob(prompt: &str, completion: &str) -> f64 {
    let mut h = Sha256::new();
    h.update((prompt.len() as u64).to_le_bytes());
    h.update(prompt.as_bytes());
    h.update(completion.as_bytes());
    let d = h.finalize();
    let v = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
    -((v >> 11) as f64 / (1u64 << 53) as f64) * 10.0
}

impl StubModel {
    pub fn new(spec: StubSpec) -> Result<Self, ClientError> {
        let generate = spec
            .generate
            .iter()
            .map(|r| Ok((Matcher::new(&r.prompt, &r.prompt_regex)?, r.text.clone())))
            .collect::<Result<_, ClientError>>()?;
        let score = spec
            .score
            .iter()
            .map(|r| {
                if !r.logprob.is_finite() {
                    return Err(ClientError::Spec(format!("non-finite logprob for {:?}", r.completion)));
                }
                Ok((Matcher::new(&r.prompt, &r.prompt_regex)?, r.completion.clone(), r.logprob))
            })
            .collect::<Result<_, ClientError>>()?;
        Ok(Self { spec, generate, score, calls: AtomicU64::new(0) })
    }

    pub fn echo() -> Self {
        Self::new(StubSpec::echo()).expect("echo spec is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, ClientError> {
        Self::new(StubSpec::from_json(text)?)
    }

    pub fn spec(&self) -> &StubSpec {
        &self.spec
    }

    fn enter(&self) -> Result<(), ClientError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if self.spec.latency_ms > 0 {
            std::thread::sleep(Duration::from_millis(self.spec.latency_ms));
        }
        if n < self.spec.fail_first_n {
            return Err(ClientError::Injected(n + 1));
        }
        Ok(())
    }

    /// Untruncated generation for `prompt`.
    pub fn raw_generation(&self, prompt: &str) -> Result<String, ClientError> {
        let hit = self
            .generate
            .iter()
            .find(|(m, _)| m.exact(prompt))
            .or_else(|| self.generate.iter().find(|(m, _)| m.regex(prompt)));
        if let Some((_, text)) = hit {
            return Ok(text.clone());
        }
        if self.spec.echo {
            let answer = last_demo_answer(prompt).unwrap_or("");
            return Ok(format!("{answer}{END_OF_CHUNK_MARKER}"));
        }
        if self.spec.strict {
            return Err(ClientError::Unconfigured);
        }
        Ok(END_OF_CHUNK_MARKER.to_owned())
    }

    pub fn logprob(&self, prompt: &str, completion: &str) -> Result<f64, ClientError> {
        let rule = |exact: bool| {
            self.score
                .iter()
                .find(|(m, c, _)| c == completion && if exact { m.exact(prompt) } else { m.regex(prompt) })
                .map(|r| r.2)
        };
        if let Some(v) = rule(true).or_else(|| rule(false)) {
            return Ok(v);
        }
        if !self.spec.unigram.is_empty() {
            let words: Option<Vec<f64>> = completion.split_whitespace().map(|w| self.spec.unigram.get(w).copied()).collect();
            match words {
                Some(ws) => return Ok(ws.iter().sum()),
                None if self.spec.strict && !self.spec.hash_scores => return Err(ClientError::Unconfigured),
                None => {}
            }
        }
        if self.spec.hash_scores {
            return Ok(hash_logprob(prompt, completion));
        }
        if self.spec.strict {
            return Err(ClientError::Unconfigured);
        }
        Ok(self.spec.default_logprob)
    }
}

impl ModelClient for StubModel {
    fn generate(&self, req: &GenerateRequest) -> Result<GenerateResponse, ClientError> {
        req.validate()?;
        self.enter()?;
        let raw = self.raw_generation(&req.prompt)?;
        Ok(apply_decoding(&raw, req.max_new_tokens, &req.stop_sequences))
    }

    fn score(&self, req: &ScoreRequest) -> Result<f64, ClientError> {
        req.validate()?;
        self.enter()?;
        self.logprob(&req.prompt, &req.completion)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggedRequest {
    pub path: String,
    pub body: Vec<u8>,
}

struct ServerState {
    model: StubModel,
    log: Mutex<Vec<LoggedRequest>>,
}

/// A [`StubModel`] served over HTTP on a background thread.
pub struct StubServer {
    addr: SocketAddr,
    state: Arc<ServerState>,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

fn error_response(status: axum::http::StatusCode, e: &ClientError) -> axum::response::Response {
    use axum::response::IntoResponse;
    (status, axum::Json(serde_json::json!({ "error": e.to_string() }))).into_response()
}

fn status_for(e: &ClientError) -> axum::http::StatusCode {
    use axum::http::StatusCode;
    match e {
        ClientError::Validation(_) | ClientError::Malformed(_) => StatusCode::BAD_REQUEST,
        ClientError::Unconfigured => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::SERVICE_UNAVAILABLE,
    }
}

async fn handle<Req, Resp>(
    state: Arc<ServerState>,
    path: &'static str,
    body: axum::body::Bytes,
    call: fn(&StubModel, &Req) -> Result<Resp, ClientError>,
) -> axum::response::Response
where
    Req: serde::de::DeserializeOwned + Send + 'static,
    Resp: Serialize + Send + 'static,
{
    use axum::response::IntoResponse;
    state.log.lock().expect("log lock").push(LoggedRequest { path: path.to_owned(), body: body.to_vec() });
    let req: Req = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error_response(axum::http::StatusCode::BAD_REQUEST, &ClientError::Malformed(e.to_string())),
    };
    let result = tokio::task::spawn_blocking(move || call(&state.model, &req)).await;
    match result {
        Ok(Ok(resp)) => axum::Json(resp).into_response(),
        Ok(Err(e)) => error_response(status_for(&e), &e),
        Err(e) => error_response(axum::http::StatusCode::INTERNAL_SERVER_ERROR, &ClientError::Transport(e.to_string())),
    }
}

impl StubServer {
    /// Bind `addr` (use port 0 for an ephemeral port) and serve in the background.
    pub fn start(model: StubModel, addr: &str) -> Result<Self, ClientError> {
        use axum::routing::post;
        let listener = std::net::TcpListener::bind(addr).map_err(|e| ClientError::Transport(e.to_string()))?;
        listener.set_nonblocking(true).map_err(|e| ClientError::Transport(e.to_string()))?;
        let addr = listener.local_addr().map_err(|e| ClientError::Transport(e.to_string()))?;
        let state = Arc::new(ServerState { model, log: Mutex::new(Vec::new()) });
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let app_state = state.clone();
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let generate_state = app_state.clone();
                let score_state = app_state;
                let app = axum::Router::new()
                    .route(
                        "/v1/generate",
                        post(move |body: axum::body::Bytes| {
                            handle(generate_state.clone(), "/v1/generate", body, |m, r: &GenerateRequest| m.generate(r))
                        }),
                    )
                    .route(
                        "/v1/score",
                        post(move |body: axum::body::Bytes| {
                            handle(score_state.clone(), "/v1/score", body, |m, r: &ScoreRequest| {
                                m.score(r).map(|logprob| ScoreResponse { logprob })
                            })
                        }),
                    );
                let listener = match tokio::net::TcpListener::from_std(listener) {
                    Ok(l) => l,
                    Err(e) => {
                        log::error!("stub server: {e}");
                        return;
                    }
                };
                let served = axum::serve(listener, app).with_graceful_shutdown(async {
                    let _ = rx.await;
                });
                if let Err(e) = served.await {
                    log::error!("stub server: {e}");
                }
            });
        });
        Ok(Self { addr, state, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Raw request bodies in arrival order.
    pub fn requests(&self) -> Vec<LoggedRequest> {
        self.state.log.lock().expect("log lock").clone()
    }

    /// Block until the server thread exits.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(prompt: &str, max: u32) -> GenerateRequest {
        GenerateRequest {
            prompt: prompt.into(),
            image_ids: vec!["i".into(); prompt.matches(IMAGE_MARKER).count()],
            beams: 3,
            max_new_tokens: max,
            stop_sequences: vec![END_OF_CHUNK_MARKER.into()],
            image_data: None,
        }
    }

    #[test]
    fn table_generation_stops() {
        let spec = StubSpec {
            generate: vec![GenerateRule { prompt: Some("<image>Output: ".into()), text: "a cat<|endofchunk|>".into(), ..Default::default() }],
            ..StubSpec::default()
        };
        let stub = StubModel::new(spec).unwrap();
        let out = stub.generate(&gen("<image>Output: ", 20)).unwrap();
        assert_eq!(out, GenerateResponse { text: "a cat".into(), finish_reason: FinishReason::Stop });
    }

    #[test]
    fn long_generation_truncated() {
        let text: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
        let spec = StubSpec {
            generate: vec![GenerateRule { prompt_regex: Some(".*".into()), text: text.join(" "), ..Default::default() }],
            ..StubSpec::default()
        };
        let out = StubModel::new(spec).unwrap().generate(&gen("q", 20)).unwrap();
        assert_eq!(out.finish_reason, FinishReason::Length);
        assert_eq!(out.text, text[..20].join(" "));
    }

    #[test]
    fn image_count_validated() {
        let mut req = gen("<image>x<image>", 5);
        req.image_ids.pop();
        assert!(matches!(StubModel::echo().generate(&req), Err(ClientError::Validation(_))));
    }

    #[test]
    fn score_table_and_strict() {
        let spec = StubSpec {
            score: vec![ScoreRule { prompt: Some("p".into()), completion: "yes".into(), logprob: -1.2, ..Default::default() }],
            ..StubSpec::default()
        };
        let stub = StubModel::new(spec).unwrap();
        let req = |c: &str| ScoreRequest { prompt: "p".into(), image_ids: vec![], completion: c.into(), image_data: None };
        assert_eq!(stub.score(&req("yes")).unwrap(), -1.2);
        assert_eq!(stub.score(&req("no")).unwrap_err().to_string(), "unconfigured pair");
    }

    #[test]
    fn unigram_additivity() {
        let spec = StubSpec {
            unigram: [("a".to_owned(), -0.5), ("b".to_owned(), -1.25)].into_iter().collect(),
            ..StubSpec::default()
        };
        let stub = StubModel::new(spec).unwrap();
        let ab = stub.logprob("p", "a b").unwrap();
        assert_eq!(ab, stub.logprob("p", "a").unwrap() + stub.logprob("pa", "b").unwrap());
    }

    #[test]
    fn echo_last_demo() {
        let prompt = "<image>Output: a dog<|endofchunk|><image>Output: two cats<|endofchunk|><image>Output: ";
        let out = StubModel::echo().generate(&gen(prompt, 20)).unwrap();
        assert_eq!(out.text, "two cats");
        assert_eq!(last_demo_answer("<image>Question: q Short answer: blue<|endofchunk|>x"), Some("blue"));
        assert_eq!(last_demo_answer("no demos"), None);
    }

    #[test]
    fn malformed_spec_rejected() {
        assert!(StubModel::from_json(r#"{"generate":[{"prompt_regex":"(","text":"x"}]}"#).is_err());
        assert!(StubModel::from_json(r#"{"bogus":1}"#).is_err());
        assert!(StubModel::from_json(r#"{"generate":[{"text":"x"}]}"#).is_err());
    }
}
