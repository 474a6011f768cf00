//! Embedding matrices, their on-disk format, and the remote embedder client.

mod format;
mod remote;

pub use format::{decode_embeddings, encode_embeddings, read_embeddings, write_embeddings, MAGIC};
pub use remote::{embed_remote, EmbedOptions};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("embedding file format: {0}")]
    Format(String),

    #[error("I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row} has zero norm and cannot be normalized")]
    DegenerateRow { row: usize },

    #[error("invalid embedding matrix: {0}")]
    Shape(String),

    #[error("embedder transport failed: {0}")]
    Transport(String),

    #[error("embedder protocol violation: {0}")]
    Protocol(String),

    #[error("no images to embed")]
    EmptyInput,
}

pub type Result<T, E = EmbeddingError> = std::result::Result<T, E>;

/// `n x dims` float32 rows, row-major, each labeled by an image id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dims: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, dims: usize, data: Vec<f32>) -> Result<Self> {
        if dims == 0 {
            return Err(EmbeddingError::Shape(
                "dimensionality must be positive".into(),
            ));
        }
        if data.len() != ids.len() * dims {
            return Err(EmbeddingError::Shape(format!(
                "{} ids x {dims} dims needs {} values, got {}",
                ids.len(),
                ids.len() * dims,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::Shape(format!(
                "non-finite value in row {} column {}",
                i / dims,
                i % dims
            )));
        }
        Ok(Self { ids, dims, data })
    }

    /// Builds a matrix from rows, assigning ids `0..n`.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dims = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dims);
        for (i, r) in rows.iter().enumerate() {
            if r.as_ref().len() != dims {
                return Err(EmbeddingError::Shape(format!(
                    "row {i} has {} values, expected {dims}",
                    r.as_ref().len()
                )));
            }
            data.extend_from_slice(r.as_ref());
        }
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::new(ids, dims, data)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.dims)
    }

    /// Scales every row to unit Euclidean norm. Rows already within 1e-6 of
    /// unit norm are left untouched, so a second pass is a no-op.
    pub fn normalize_rows(&self) -> Result<Self> {
        let mut data = Vec::with_capacity(self.data.len());
        for (i, row) in self.rows().enumerate() {
            let norm = row
                .iter()
                .map(|&v| f64::from(v) * f64::from(v))
                .sum::<f64>()
                .sqrt();
            if norm == 0.0 {
                return Err(EmbeddingError::DegenerateRow { row: i });
            }
            if (norm - 1.0).abs() <= 1e-6 {
                data.extend_from_slice(row);
            } else {
                data.extend(row.iter().map(|&v| (f64::from(v) / norm) as f32));
            }
        }
        Ok(Self {
            ids: self.ids.clone(),
            dims: self.dims,
            data,
        })
    }
}
