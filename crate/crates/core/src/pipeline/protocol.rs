//! Request and response bodies of the backend HTTP protocol.
//!
//! | route              | request             | response             |
//! |--------------------|---------------------|----------------------|
//! | `POST /v1/enhance`   | [`EnhanceRequest`]   | [`ImageResponse`]     |
//! | `POST /v1/translate` | [`TranslateRequest`] | [`ImageResponse`]     |
//! | `POST /v1/embed`     | [`EmbedRequest`]     | [`EmbedResponse`]     |
//! | `GET /v1/health`     |                     | [`HealthResponse`]    |

use serde::{Deserialize, Serialize};

pub const ENHANCE_PATH: &str = "/v1/enhance";
pub const TRANSLATE_PATH: &str = "/v1/translate";
pub const EMBED_PATH: &str = "/v1/embed";
pub const HEALTH_PATH: &str = "/v1/health";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnhanceRequest {
    pub image_b64: String,
    pub format: String,
    pub prompt: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslateRequest {
    pub image_b64: String,
    pub format: String,
    pub target_domain: String,
}

/// Response of both image routes. `target_domain` is echoed by `/v1/translate`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageResponse {
    pub image_b64: String,
    pub format: String,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_domain: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedImage {
    pub id: String,
    pub image_b64: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub images: Vec<EmbedImage>,
    pub format: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRow {
    pub id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dims: usize,
    pub rows: Vec<EmbedRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub ok: bool,
    pub model_id: String,
    pub deterministic: bool,
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}
