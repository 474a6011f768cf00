//! In-process HTTP backend speaking the pipeline protocol, for tests.
//!
//! The server runs on its own thread and runtime, so it can be used from
//! synchronous tests and from inside other tokio runtimes alike. Every
//! request body is captured verbatim for golden-request assertions.

use std::collections::HashMap;
use std::io::Cursor;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use image::ImageFormat;
use serde::de::DeserializeOwned;
use tokio::sync::oneshot;

use crate::hash::ContentHasher;
use crate::pipeline::client::{b64_decode, b64_encode};
use crate::pipeline::protocol::{
    EmbedRequest, EmbedResponse, EmbedRow, EnhanceRequest, ErrorBody, HealthResponse,
    ImageResponse, TranslateRequest, EMBED_PATH, ENHANCE_PATH, HEALTH_PATH, TRANSLATE_PATH,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StubMode {
    /// Returns the input bytes unchanged.
    Identity,
    /// Gaussian-blurs the image, keeping its dimensions.
    Blur,
    /// Upscales 2x, which a well-behaved client must reject.
    ResizeBug,
}

#[derive(Debug, Clone)]
pub struct StubOptions {
    pub mode: StubMode,
    pub deterministic: bool,
    pub model_id: String,
    /// Image requests whose input has one of these widths get HTTP 503.
    pub fail_widths: Vec<u32>,
    /// Dimensionality returned by successive `/v1/embed` calls; the last
    /// entry repeats.
    pub embed_dims: Vec<usize>,
    /// Report `ok: false` from `/v1/health`.
    pub unhealthy: bool,
}

impl Default for StubOptions {
    fn default() -> Self {
        Self {
            mode: StubMode::Identity,
            deterministic: true,
            model_id: "stub-identity".into(),
            fail_widths: Vec::new(),
            embed_dims: vec![16],
            unhealthy: false,
        }
    }
}

impl StubOptions {
    pub fn mode(mode: StubMode) -> Self {
        Self {
            mode,
            model_id: format!("stub-{mode:?}").to_lowercase(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapturedRequest {
    pub method: &'static str,
    pub path: &'static str,
    pub body: Vec<u8>,
}

struct StubState {
    options: StubOptions,
    captured: Mutex<Vec<CapturedRequest>>,
    embed_calls: Mutex<usize>,
}

impl StubState {
    fn capture(&self, method: &'static str, path: &'static str, body: &[u8]) {
        self.captured.lock().unwrap().push(CapturedRequest {
            method,
            path,
            body: body.to_vec(),
        });
    }
}

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    (
        status,
        Json(ErrorBody {
            code: code.into(),
            message: message.into(),
        }),
    )
        .into_response()
}

#[allow(clippy::result_large_err)]
fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, Response> {
    serde_json::from_slice(body)
        .map_err(|e| error(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))
}

#[allow(clippy::result_large_err)]
fn transform(state: &StubState, image_b64: &str) -> Result<String, Response> {
    let bytes =
        b64_decode(image_b64).map_err(|e| error(StatusCode::BAD_REQUEST, "bad_image", e))?;
    let img = image::load_from_memory(&bytes)
        .map_err(|e| error(StatusCode::BAD_REQUEST, "bad_image", e.to_string()))?;
    if state.options.fail_widths.contains(&img.width()) {
        return Err(error(
            StatusCode::SERVICE_UNAVAILABLE,
            "backend_failure",
            format!("configured to fail images of width {}", img.width()),
        ));
    }
    let out = match state.options.mode {
        StubMode::Identity => return Ok(image_b64.to_owned()),
        StubMode::Blur => img.blur(1.0),
        StubMode::ResizeBug => img.resize_exact(
            img.width() * 2,
            img.height() * 2,
            image::imageops::FilterType::Nearest,
        ),
    };
    let mut png = Vec::new();
    out.write_to(&mut Cursor::new(&mut png), ImageFormat::Png)
        .map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, "encode", e.to_string()))?;
    Ok(b64_encode(&png))
}

async fn health(State(state): State<Arc<StubState>>) -> Response {
    state.capture("GET", HEALTH_PATH, b"");
    Json(HealthResponse {
        ok: !state.options.unhealthy,
        model_id: state.options.model_id.clone(),
        deterministic: state.options.deterministic,
    })
    .into_response()
}

async fn enhance(State(state): State<Arc<StubState>>, body: Bytes) -> Response {
    state.capture("POST", ENHANCE_PATH, &body);
    let req: EnhanceRequest = match parse(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    if req.prompt.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "bad_request", "empty prompt");
    }
    match transform(&state, &req.image_b64) {
        Ok(image_b64) => Json(ImageResponse {
            image_b64,
            format: "png".into(),
            model_id: state.options.model_id.clone(),
            target_domain: None,
        })
        .into_response(),
        Err(resp) => resp,
    }
}

async fn translate(State(state): State<Arc<StubState>>, body: Bytes) -> Response {
    state.capture("POST", TRANSLATE_PATH, &body);
    let req: TranslateRequest = match parse(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    if req.target_domain != "kitti" && req.target_domain != "cs" {
        return error(
            StatusCode::UNPROCESSABLE_ENTITY,
            "unknown_domain",
            format!("unknown target_domain {:?}", req.target_domain),
        );
    }
    match transform(&state, &req.image_b64) {
        Ok(image_b64) => Json(ImageResponse {
            image_b64,
            format: "png".into(),
            model_id: state.options.model_id.clone(),
            target_domain: Some(req.target_domain),
        })
        .into_response(),
        Err(resp) => resp,
    }
}

/// Deterministic pseudo-embedding: SHA-256 of the image bytes, extended by
/// counter blocks, read as 16-bit words mapped to `[-1, 1]`.
pub fn pseudo_embedding(image: &[u8], dims: usize) -> Vec<f64> {
    let mut words = Vec::with_capacity(dims);
    let mut block = 0u32;
    while words.len() < dims {
        let mut h = ContentHasher::new();
        h.update(image).update(&block.to_le_bytes());
        let digest = h.finish_bytes();
        for pair in digest.chunks_exact(2) {
            if words.len() == dims {
                break;
            }
            let w = u16::from_le_bytes([pair[0], pair[1]]);
            words.push(f64::from(w) / f64::from(u16::MAX) * 2.0 - 1.0);
        }
        block += 1;
    }
    words
}

async fn embed(State(state): State<Arc<StubState>>, body: Bytes) -> Response {
    state.capture("POST", EMBED_PATH, &body);
    let req: EmbedRequest = match parse(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let dims = {
        let mut calls = state.embed_calls.lock().unwrap();
        let dims = &state.options.embed_dims;
        let d = dims[(*calls).min(dims.len() - 1)];
        *calls += 1;
        d
    };
    let mut rows = Vec::with_capacity(req.images.len());
    for img in &req.images {
        let bytes = match b64_decode(&img.image_b64) {
            Ok(b) => b,
            Err(e) => return error(StatusCode::BAD_REQUEST, "bad_image", e),
        };
        rows.push(EmbedRow {
            id: img.id.clone(),
            values: pseudo_embedding(&bytes, dims),
        });
    }
    Json(EmbedResponse { dims, rows }).into_response()
}

/// A running stub server. Stops when dropped.
pub struct StubServer {
    addr: SocketAddr,
    state: Arc<StubState>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(options: StubOptions) -> Self {
        let state = Arc::new(StubState {
            options,
            captured: Mutex::new(Vec::new()),
            embed_calls: Mutex::new(0),
        });
        let listener = std::net::TcpListener::bind("127.0.0.1:0").expect("bind stub listener");
        listener
            .set_nonblocking(true)
            .expect("nonblocking listener");
        let addr = listener.local_addr().expect("listener address");
        let (tx, rx) = oneshot::channel::<()>();
        let app = Router::new()
            .route(HEALTH_PATH, get(health))
            .route(ENHANCE_PATH, post(enhance))
            .route(TRANSLATE_PATH, post(translate))
            .route(EMBED_PATH, post(embed))
            .with_state(Arc::clone(&state));
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .expect("stub runtime");
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("tokio listener");
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
                    .expect("stub server");
            });
        });
        Self {
            addr,
            state,
            shutdown: Some(tx),
            thread: Some(thread),
        }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> Vec<CapturedRequest> {
        self.state.captured.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.state.captured.lock().unwrap().len()
    }

    /// Request counts keyed by route path.
    pub fn counts(&self) -> HashMap<&'static str, usize> {
        let mut out = HashMap::new();
        for r in self.state.captured.lock().unwrap().iter() {
            *out.entry(r.path).or_default() += 1;
        }
        out
    }

    pub fn bodies(&self, path: &str) -> Vec<Vec<u8>> {
        self.state
            .captured
            .lock()
            .unwrap()
            .iter()
            .filter(|r| r.path == path)
            .map(|r| r.body.clone())
            .collect()
    }

    pub fn clear(&self) {
        self.state.captured.lock().unwrap().clear();
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
