//! Two-phase enhancement over remote backends: diffusion enhancement, then
//! im2im translation towards a real dataset, with a content-addressed cache
//! and a run manifest recording every phase applied to every image.

pub mod client;
mod config;
mod phases;
pub mod protocol;
mod run;
mod store;

pub use client::{BackendClient, CallError, CallErrorKind, RetryPolicy};
pub use config::{
    PhaseKind, PhaseParams, PhaseSpec, PipelineConfig, ResizePolicy, TargetDomain, UnknownDomain,
    DEFAULT_ENHANCE_PROMPT, DEFAULT_PROMPT_VERSION,
};
pub use phases::{
    enhance_phase, ensure_png, image_dimensions, translate_phase, PhaseFailure, PhaseOutput,
};
pub use run::{
    run_pipeline, BackendInfo, ImageFailure, OutputRecord, PhaseEntry, RunManifest, RunOutcome,
};
pub use store::{cache_key, cache_key_for_hash, ArtifactStore, CacheEntry};

use std::path::PathBuf;

use crate::dataset::DatasetError;

/// Errors that stop a whole run. Per-image problems are [`PhaseFailure`]s.
#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),

    #[error("backend {endpoint} unavailable: {reason}")]
    BackendUnavailable { endpoint: String, reason: String },

    #[error("I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;
