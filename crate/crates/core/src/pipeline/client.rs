use std::time::{Duration, Instant};

use base64::Engine as _;
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::protocol::{
    EmbedRequest, EmbedResponse, EnhanceRequest, ErrorBody, HealthResponse, ImageResponse,
    TranslateRequest, EMBED_PATH, ENHANCE_PATH, HEALTH_PATH, TRANSLATE_PATH,
};

pub(crate) fn b64_encode(bytes: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

pub(crate) fn b64_decode(text: &str) -> Result<Vec<u8>, String> {
    base64::engine::general_purpose::STANDARD
        .decode(text)
        .map_err(|e| format!("invalid base64 image: {e}"))
}

/// Exponential backoff: `base * factor^(attempt-1)`, scaled by a random
/// factor in `[0.5, 1.5)` when jitter is on.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts per request, including the first.
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: f64,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
            factor: 2.0,
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, where `attempt >= 1` just failed.
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let exp = self.factor.powi(attempt.saturating_sub(1) as i32);
        let scale = if self.jitter {
            rand::rng().random_range(0.5..1.5)
        } else {
            1.0
        };
        self.base_delay.mul_f64(exp * scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CallErrorKind {
    /// Connection failures, timeouts, 5xx and 429 responses. Retried.
    Transport,
    /// The backend answered but the exchange broke the protocol. Not retried.
    Protocol,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message} ({attempts} attempt(s))")]
pub struct CallError {
    pub kind: CallErrorKind,
    pub status: Option<u16>,
    pub message: String,
    pub attempts: u32,
}

/// A response plus bookkeeping about how it was obtained.
#[derive(Debug, Clone)]
pub struct Called<T> {
    pub value: T,
    pub attempts: u32,
    pub elapsed: Duration,
}

/// HTTP client for the backend protocol with bounded retries.
#[derive(Debug, Clone)]
pub struct BackendClient {
    http: reqwest::Client,
    retry: RetryPolicy,
}

impl BackendClient {
    pub fn new(retry: RetryPolicy, timeout: Duration) -> Self {
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .expect("reqwest client builds");
        Self { http, retry }
    }

    pub fn retry_policy(&self) -> &RetryPolicy {
        &self.retry
    }

    fn url(endpoint: &str, path: &str) -> String {
        format!("{}{}", endpoint.trim_end_matches('/'), path)
    }

    async fn attempt<Resp: DeserializeOwned>(
        &self,
        request: reqwest::RequestBuilder,
    ) -> Result<Resp, (CallErrorKind, Option<u16>, String)> {
        let response = request
            .send()
            .await
            .map_err(|e| (CallErrorKind::Transport, None, e.to_string()))?;
        let status = response.status();
        let body = response.bytes().await.map_err(|e| {
            (
                CallErrorKind::Transport,
                Some(status.as_u16()),
                e.to_string(),
            )
        })?;
        if !status.is_success() {
            let detail = serde_json::from_slice::<ErrorBody>(&body)
                .map(|e| format!("{}: {}", e.code, e.message))
                .unwrap_or_else(|_| String::from_utf8_lossy(&body).into_owned());
            let kind = if status.is_server_error() || status.as_u16() == 429 {
                CallErrorKind::Transport
            } else {
                CallErrorKind::Protocol
            };
            return Err((
                kind,
                Some(status.as_u16()),
                format!("HTTP {status}: {detail}"),
            ));
        }
        serde_json::from_slice(&body).map_err(|e| {
            (
                CallErrorKind::Protocol,
                Some(status.as_u16()),
                format!("malformed response body: {e}"),
            )
        })
    }

    async fn with_retries<Resp, F>(&self, mut build: F) -> Result<Called<Resp>, CallError>
    where
        Resp: DeserializeOwned,
        F: FnMut() -> reqwest::RequestBuilder,
    {
        let start = Instant::now();
        let max = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.attempt(build()).await {
                Ok(value) => {
                    return Ok(Called {
                        value,
                        attempts: attempt,
                        elapsed: start.elapsed(),
                    })
                }
                Err((CallErrorKind::Transport, _, message)) if attempt < max => {
                    let delay = self.retry.delay_after(attempt);
                    log::debug!("attempt {attempt} failed ({message}); retrying in {delay:?}");
                    tokio::time::sleep(delay).await;
                }
                Err((kind, status, message)) => {
                    return Err(CallError {
                        kind,
                        status,
                        message,
                        attempts: attempt,
                    })
                }
            }
        }
    }

    async fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        endpoint: &str,
        path: &str,
        body: &Req,
    ) -> Result<Called<Resp>, CallError> {
        let bytes = serde_json::to_vec(body).expect("request serializes");
        let url = Self::url(endpoint, path);
        self.with_retries(|| {
            self.http
                .post(&url)
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(bytes.clone())
        })
        .await
    }

    pub async fn health(&self, endpoint: &str) -> Result<Called<HealthResponse>, CallError> {
        let url = Self::url(endpoint, HEALTH_PATH);
        self.with_retries(|| self.http.get(&url)).await
    }

    pub async fn enhance(
        &self,
        endpoint: &str,
        request: &EnhanceRequest,
    ) -> Result<Called<ImageResponse>, CallError> {
        self.post(endpoint, ENHANCE_PATH, request).await
    }

    pub async fn translate(
        &self,
        endpoint: &str,
        request: &TranslateRequest,
    ) -> Result<Called<ImageResponse>, CallError> {
        self.post(endpoint, TRANSLATE_PATH, request).await
    }

    pub async fn embed(
        &self,
        endpoint: &str,
        request: &EmbedRequest,
    ) -> Result<Called<EmbedResponse>, CallError> {
        self.post(endpoint, EMBED_PATH, request).await
    }
}
