use std::io::Cursor;
use std::time::Duration;

use image::{ImageFormat, ImageReader};

use super::client::{b64_decode, b64_encode, BackendClient, CallError};
use super::config::{TargetDomain, UnknownDomain};
use super::protocol::{EnhanceRequest, ImageResponse, TranslateRequest};

/// Why one phase failed for one image.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PhaseFailure {
    #[error("transport: {0}")]
    Transport(CallError),

    #[error("protocol: {0}")]
    Protocol(String),

    #[error("backend changed dimensions from {expected:?} to {actual:?}; resizing is not allowed")]
    DimensionChanged {
        expected: (u32, u32),
        actual: (u32, u32),
    },

    #[error(transparent)]
    UnknownDomain(#[from] UnknownDomain),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("diffusion prompt is empty")]
    EmptyPrompt,
}

impl From<CallError> for PhaseFailure {
    fn from(e: CallError) -> Self {
        match e.kind {
            super::client::CallErrorKind::Transport => PhaseFailure::Transport(e),
            super::client::CallErrorKind::Protocol => PhaseFailure::Protocol(e.to_string()),
        }
    }
}

/// A backend result, re-encoded as PNG when the backend answered otherwise.
#[derive(Debug, Clone)]
pub struct PhaseOutput {
    pub png: Vec<u8>,
    pub model_id: String,
    pub target_domain: Option<String>,
    pub attempts: u32,
    pub elapsed: Duration,
}

pub fn image_dimensions(bytes: &[u8]) -> Result<(u32, u32), PhaseFailure> {
    ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| PhaseFailure::InvalidImage(e.to_string()))?
        .into_dimensions()
        .map_err(|e| PhaseFailure::InvalidImage(e.to_string()))
}

/// Returns PNG bytes unchanged; decodes and re-encodes anything else as PNG.
pub fn ensure_png(bytes: Vec<u8>) -> Result<Vec<u8>, PhaseFailure> {
    match image::guess_format(&bytes) {
        Ok(ImageFormat::Png) => Ok(bytes),
        _ => {
            let img = image::load_from_memory(&bytes)
                .map_err(|e| PhaseFailure::InvalidImage(e.to_string()))?;
            let mut out = Vec::new();
            img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
                .map_err(|e| PhaseFailure::InvalidImage(e.to_string()))?;
            Ok(out)
        }
    }
}

fn finish(
    input_dims: (u32, u32),
    response: ImageResponse,
    attempts: u32,
    elapsed: Duration,
) -> Result<PhaseOutput, PhaseFailure> {
    let raw = b64_decode(&response.image_b64).map_err(PhaseFailure::Protocol)?;
    let png =
        ensure_png(raw).map_err(|e| PhaseFailure::Protocol(format!("response image: {e}")))?;
    let actual = image_dimensions(&png)?;
    if actual != input_dims {
        return Err(PhaseFailure::DimensionChanged {
            expected: input_dims,
            actual,
        });
    }
    Ok(PhaseOutput {
        png,
        model_id: response.model_id,
        target_domain: response.target_domain,
        attempts,
        elapsed,
    })
}

/// Sends a PNG through the diffusion enhancement backend.
pub async fn enhance_phase(
    client: &BackendClient,
    endpoint: &str,
    png: &[u8],
    prompt: &str,
    seed: u64,
) -> Result<PhaseOutput, PhaseFailure> {
    if prompt.trim().is_empty() {
        return Err(PhaseFailure::EmptyPrompt);
    }
    let dims = image_dimensions(png)?;
    let request = EnhanceRequest {
        image_b64: b64_encode(png),
        format: "png".into(),
        prompt: prompt.to_owned(),
        seed,
    };
    let called = client.enhance(endpoint, &request).await?;
    finish(dims, called.value, called.attempts, called.elapsed)
}

/// Sends a PNG through the im2im translation backend. The backend must echo
/// the requested domain.
pub async fn translate_phase(
    client: &BackendClient,
    endpoint: &str,
    png: &[u8],
    target_domain: TargetDomain,
) -> Result<PhaseOutput, PhaseFailure> {
    let dims = image_dimensions(png)?;
    let request = TranslateRequest {
        image_b64: b64_encode(png),
        format: "png".into(),
        target_domain: target_domain.as_str().into(),
    };
    let called = client.translate(endpoint, &request).await?;
    match called.value.target_domain.as_deref() {
        Some(d) if d == target_domain.as_str() => {}
        other => {
            return Err(PhaseFailure::Protocol(format!(
                "backend echoed target_domain {other:?}, expected {:?}",
                target_domain.as_str()
            )))
        }
    }
    finish(dims, called.value, called.attempts, called.elapsed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn png(w: u32, h: u32) -> Vec<u8> {
        let img = image::RgbImage::from_fn(w, h, |x, y| image::Rgb([x as u8, y as u8, 7]));
        let mut out = Vec::new();
        img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
            .unwrap();
        out
    }

    #[test]
    fn png_passes_through_untouched() {
        let p = png(5, 3);
        assert_eq!(ensure_png(p.clone()).unwrap(), p);
        assert_eq!(image_dimensions(&p).unwrap(), (5, 3));
    }

    #[test]
    fn jpeg_is_reencoded_losslessly_as_png() {
        let img = image::RgbImage::from_pixel(4, 4, image::Rgb([10, 20, 30]));
        let mut jpeg = Vec::new();
        img.write_to(&mut Cursor::new(&mut jpeg), ImageFormat::Jpeg)
            .unwrap();
        let out = ensure_png(jpeg.clone()).unwrap();
        assert_eq!(image::guess_format(&out).unwrap(), ImageFormat::Png);
        let a = image::load_from_memory(&jpeg).unwrap().to_rgb8();
        let b = image::load_from_memory(&out).unwrap().to_rgb8();
        assert_eq!(a, b);
    }

    #[test]
    fn garbage_is_invalid_image() {
        assert!(matches!(
            ensure_png(b"not an image".to_vec()),
            Err(PhaseFailure::InvalidImage(_))
        ));
    }

    #[test]
    fn resized_response_is_dimension_changed() {
        let response = ImageResponse {
            image_b64: b64_encode(&png(10, 6)),
            format: "png".into(),
            model_id: "m".into(),
            target_domain: None,
        };
        assert_eq!(
            finish((5, 3), response, 1, Duration::ZERO).unwrap_err(),
            PhaseFailure::DimensionChanged {
                expected: (5, 3),
                actual: (10, 6)
            }
        );
    }
}
