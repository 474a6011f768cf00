use std::collections::HashMap;
use std::path::Path;

use futures::stream::{self, StreamExt, TryStreamExt};

use super::{EmbeddingError, EmbeddingMatrix, Result};
use crate::dataset::ImageRecord;
use crate::pipeline::client::{b64_encode, BackendClient, CallErrorKind};
use crate::pipeline::ensure_png;
use crate::pipeline::protocol::{EmbedImage, EmbedRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbedOptions {
    pub batch_size: usize,
    /// Batch requests in flight at once.
    pub concurrency: usize,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        Self {
            batch_size: 16,
            concurrency: 4,
        }
    }
}

struct Batch {
    dims: usize,
    rows: Vec<Vec<f32>>,
}

async fn embed_batch(
    client: &BackendClient,
    endpoint: &str,
    root: &Path,
    records: &[ImageRecord],
) -> Result<Batch> {
    let mut images = Vec::with_capacity(records.len());
    for r in records {
        let path = root.join(&r.path);
        let raw = std::fs::read(&path).map_err(|source| EmbeddingError::Io {
            path: path.clone(),
            source,
        })?;
        let png =
            ensure_png(raw).map_err(|e| EmbeddingError::Shape(format!("image {}: {e}", r.id)))?;
        images.push(EmbedImage {
            id: r.id.clone(),
            image_b64: b64_encode(&png),
        });
    }
    let request = EmbedRequest {
        images,
        format: "png".into(),
    };
    let response = client
        .embed(endpoint, &request)
        .await
        .map_err(|e| match e.kind {
            CallErrorKind::Transport => EmbeddingError::Transport(e.to_string()),
            CallErrorKind::Protocol => EmbeddingError::Protocol(e.to_string()),
        })?
        .value;

    let dims = response.dims;
    if dims == 0 {
        return Err(EmbeddingError::Protocol(
            "embedder reported dims = 0".into(),
        ));
    }
    if response.rows.len() != records.len() {
        return Err(EmbeddingError::Protocol(format!(
            "sent {} images, received {} rows",
            records.len(),
            response.rows.len()
        )));
    }
    let mut by_id: HashMap<String, Vec<f64>> = response
        .rows
        .into_iter()
        .map(|r| (r.id, r.values))
        .collect();
    let mut rows = Vec::with_capacity(records.len());
    for r in records {
        let values = by_id
            .remove(&r.id)
            .ok_or_else(|| EmbeddingError::Protocol(format!("no row returned for {:?}", r.id)))?;
        if values.len() != dims {
            return Err(EmbeddingError::Protocol(format!(
                "row {:?} has {} values, response declared dims = {dims}",
                r.id,
                values.len()
            )));
        }
        let row: Vec<f32> = values.into_iter().map(|v| v as f32).collect();
        if row.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::Protocol(format!(
                "row {:?} is not finite in float32",
                r.id
            )));
        }
        rows.push(row);
    }
    Ok(Batch { dims, rows })
}

/// Embeds `records` (paths relative to `root`) through a `/v1/embed`
/// backend. Rows come back in record order regardless of batching.
pub async fn embed_remote(
    client: &BackendClient,
    endpoint: &str,
    root: &Path,
    records: &[ImageRecord],
    options: EmbedOptions,
) -> Result<EmbeddingMatrix> {
    if records.is_empty() {
        return Err(EmbeddingError::EmptyInput);
    }
    let batch_size = options.batch_size.max(1);
    let batches: Vec<Batch> = stream::iter(records.chunks(batch_size))
        .map(|chunk| embed_batch(client, endpoint, root, chunk))
        .buffered(options.concurrency.max(1))
        .try_collect()
        .await?;

    let dims = batches[0].dims;
    let mut data = Vec::with_capacity(records.len() * dims);
    for (i, batch) in batches.into_iter().enumerate() {
        if batch.dims != dims {
            return Err(EmbeddingError::Protocol(format!(
                "batch {i} has dims {} but batch 0 had {dims}",
                batch.dims
            )));
        }
        batch.rows.into_iter().for_each(|r| data.extend(r));
    }
    let ids = records.iter().map(|r| r.id.clone()).collect();
    EmbeddingMatrix::new(ids, dims, data)
}
