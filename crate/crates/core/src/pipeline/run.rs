use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, Semaphore};

use super::client::{BackendClient, RetryPolicy};
use super::config::{PhaseKind, PhaseParams, PipelineConfig};
use super::phases::{enhance_phase, ensure_png, image_dimensions, translate_phase, PhaseFailure};
use super::store::{cache_key_for_hash, ArtifactStore, CacheEntry};
use super::{PipelineError, Result};
use crate::dataset::{DatasetManifest, ImageRecord};

/// One phase applied to one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEntry {
    pub image_id: String,
    pub phase_index: usize,
    pub phase_kind: PhaseKind,
    pub input_hash: String,
    pub output_hash: String,
    pub endpoint: String,
    pub model_id: String,
    pub duration_ms: u64,
    pub attempts: u32,
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageFailure {
    pub image_id: String,
    /// `None` when the input image itself could not be read.
    pub phase_index: Option<usize>,
    pub error: String,
}

/// Final artifact for an image that went through every phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub image_id: String,
    pub output_hash: String,
    pub width: u32,
    pub height: u32,
}

/// What a backend reported from `/v1/health` at the start of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub endpoint: String,
    pub model_id: String,
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub toolkit_version: String,
    pub config_hash: String,
    /// Effective configuration, as needed to replay the run.
    pub config: serde_json::Value,
    pub dataset: String,
    pub started: String,
    pub finished: String,
    pub backends: Vec<BackendInfo>,
    /// Ordered by dataset record, then phase.
    pub entries: Vec<PhaseEntry>,
    pub outputs: Vec<OutputRecord>,
    pub failures: Vec<ImageFailure>,
    /// HTTP requests issued, health checks and retries included.
    pub backend_calls: u64,
    pub all_cached: bool,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_slice(&text).map_err(|e| PipelineError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })
    }

    pub fn is_complete_success(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub run_dir: PathBuf,
    pub manifest_path: PathBuf,
    /// Dataset manifest over the exported final images.
    pub outputs_manifest_path: Option<PathBuf>,
}

fn effective_config(config: &PipelineConfig) -> serde_json::Value {
    let phases: Vec<_> = config.phases.iter().map(|p| p.to_json()).collect();
    serde_json::json!({
        "phases": phases,
        "concurrency": config.concurrency,
        "retries": config.retries,
        "resize_policy": config.resize_policy,
        "backoff_base_ms": config.backoff_base.as_millis() as u64,
        "timeout_secs": config.request_timeout.as_secs(),
        "cache_dir": config.cache_dir,
    })
}

struct ImageResult {
    index: usize,
    entries: Vec<PhaseEntry>,
    output: Option<OutputRecord>,
    failure: Option<ImageFailure>,
}

struct Shared {
    config: PipelineConfig,
    store: ArtifactStore,
    client: BackendClient,
    calls: AtomicU64,
    deterministic: BTreeMap<String, bool>,
}

fn read_input(manifest: &DatasetManifest, record: &ImageRecord) -> Result<Vec<u8>, String> {
    let path = manifest.image_path(record);
    let raw = std::fs::read(&path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    ensure_png(raw).map_err(|e| e.to_string())
}

/// Follows cached phases from `input_hash`. Returns the index of the first
/// phase that still needs a backend call, if any.
fn first_uncached_phase(shared: &Shared, input_hash: &str) -> Option<usize> {
    let mut current = input_hash.to_owned();
    for (i, phase) in shared.config.phases.iter().enumerate() {
        match shared.store.lookup(&cache_key_for_hash(&current, phase)) {
            Some(entry) => current = entry.output_hash,
            None => return Some(i),
        }
    }
    None
}

async fn process_image(
    shared: &Shared,
    index: usize,
    record: &ImageRecord,
    input_hash: String,
) -> ImageResult {
    let mut result = ImageResult {
        index,
        entries: Vec::with_capacity(shared.config.phases.len()),
        output: None,
        failure: None,
    };
    let mut current = input_hash;
    for (i, phase) in shared.config.phases.iter().enumerate() {
        let key = cache_key_for_hash(&current, phase);
        if let Some(hit) = shared.store.lookup(&key) {
            result.entries.push(PhaseEntry {
                image_id: record.id.clone(),
                phase_index: i,
                phase_kind: phase.kind(),
                input_hash: current.clone(),
                output_hash: hit.output_hash.clone(),
                endpoint: phase.endpoint.clone(),
                model_id: hit.model_id,
                duration_ms: 0,
                attempts: 0,
                cached: true,
            });
            current = hit.output_hash;
            continue;
        }

        let outcome = async {
            let input = shared
                .store
                .get_object(&current)
                .map_err(|e| PhaseFailure::InvalidImage(e.to_string()))?;
            match &phase.params {
                PhaseParams::Diffusion { prompt, seed } => {
                    enhance_phase(&shared.client, &phase.endpoint, &input, prompt, *seed).await
                }
                PhaseParams::Im2im { target_domain } => {
                    translate_phase(&shared.client, &phase.endpoint, &input, *target_domain).await
                }
            }
        }
        .await;

        let attempts = match &outcome {
            Ok(o) => o.attempts,
            Err(PhaseFailure::Transport(e)) => e.attempts,
            // Protocol errors come back after exactly one exchange.
            Err(PhaseFailure::Protocol(_)) | Err(PhaseFailure::DimensionChanged { .. }) => 1,
            Err(_) => 0,
        };
        shared.calls.fetch_add(attempts as u64, Ordering::Relaxed);

        let stored = outcome.and_then(|out| {
            let hash = shared
                .store
                .put_object(&out.png)
                .map_err(|e| PhaseFailure::InvalidImage(e.to_string()))?;
            shared
                .store
                .record(
                    &key,
                    &CacheEntry {
                        output_hash: hash.clone(),
                        model_id: out.model_id.clone(),
                        deterministic: shared.deterministic.get(&phase.endpoint).copied(),
                    },
                )
                .map_err(|e| PhaseFailure::InvalidImage(e.to_string()))?;
            Ok((hash, out))
        });

        match stored {
            Ok((hash, out)) => {
                result.entries.push(PhaseEntry {
                    image_id: record.id.clone(),
                    phase_index: i,
                    phase_kind: phase.kind(),
                    input_hash: current.clone(),
                    output_hash: hash.clone(),
                    endpoint: phase.endpoint.clone(),
                    model_id: out.model_id,
                    duration_ms: out.elapsed.as_millis() as u64,
                    attempts: out.attempts,
                    cached: false,
                });
                current = hash;
            }
            Err(e) => {
                log::warn!("image {} failed in phase {i}: {e}", record.id);
                result.failure = Some(ImageFailure {
                    image_id: record.id.clone(),
                    phase_index: Some(i),
                    error: e.to_string(),
                });
                return result;
            }
        }
    }

    let dims = shared
        .store
        .get_object(&current)
        .map_err(|e| e.to_string())
        .and_then(|b| image_dimensions(&b).map_err(|e| e.to_string()));
    match dims {
        Ok((width, height)) => {
            result.output = Some(OutputRecord {
                image_id: record.id.clone(),
                output_hash: current,
                width,
                height,
            })
        }
        Err(error) => {
            result.failure = Some(ImageFailure {
                image_id: record.id.clone(),
                phase_index: None,
                error,
            })
        }
    }
    result
}

fn create_run_dir(store: &ArtifactStore, config_hash: &str) -> Result<PathBuf> {
    let stamp = Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    let base = format!("{stamp}-{}", &config_hash[..16]);
    for n in 0.. {
        let name = if n == 0 {
            base.clone()
        } else {
            format!("{base}-{n}")
        };
        let dir = store.runs_dir().join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(source) => return Err(PipelineError::Io { path: dir, source }),
        }
    }
    unreachable!()
}

fn export_outputs(
    store: &ArtifactStore,
    dataset: &DatasetManifest,
    outputs: &[OutputRecord],
    dir: &Path,
) -> Result<Option<PathBuf>> {
    if outputs.is_empty() {
        return Ok(None);
    }
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PipelineError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut records = Vec::with_capacity(outputs.len());
    for out in outputs {
        let source = dataset
            .record(&out.image_id)
            .expect("outputs come from the dataset");
        let name = format!("{}.png", out.image_id);
        let target = dir.join(&name);
        std::fs::copy(store.object_path(&out.output_hash), &target).map_err(io(&target))?;
        records.push(ImageRecord {
            id: out.image_id.clone(),
            path: name,
            width: out.width,
            height: out.height,
            source_tag: source.source_tag.clone(),
        });
    }
    let manifest = DatasetManifest {
        name: format!("{}-enhanced", dataset.name),
        root: ".".into(),
        annotation_kind: dataset.annotation_kind,
        categories: dataset.categories.clone(),
        box_format: dataset.box_format,
        records,
        base_dir: dir.to_path_buf(),
    };
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(Some(path))
}

/// Runs every configured phase over every image of `dataset`.
///
/// Images are processed up to `config.concurrency` at a time; phases within
/// an image run in order, each consuming the previous output. Backends are
/// health-checked only when some image still needs them, so a fully cached
/// rerun issues no requests. An image that fails is recorded in
/// [`RunManifest::failures`] without stopping the others.
pub async fn run_pipeline(
    config: &PipelineConfig,
    dataset: &DatasetManifest,
) -> Result<RunOutcome> {
    config.validate()?;
    let started = Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true);
    let store = ArtifactStore::open(&config.cache_dir)?;
    let client = BackendClient::new(
        RetryPolicy {
            max_attempts: config.retries,
            base_delay: config.backoff_base,
            ..RetryPolicy::default()
        },
        config.request_timeout,
    );
    let mut shared = Shared {
        config: config.clone(),
        store,
        client,
        calls: AtomicU64::new(0),
        deterministic: BTreeMap::new(),
    };

    // Ingest inputs and find which backends are actually needed.
    let mut inputs: Vec<std::result::Result<String, String>> =
        Vec::with_capacity(dataset.records.len());
    let mut needed = vec![false; config.phases.len()];
    for record in &dataset.records {
        let ingested = read_input(dataset, record)
            .and_then(|png| shared.store.put_object(&png).map_err(|e| e.to_string()));
        if let Ok(hash) = &ingested {
            if let Some(first) = first_uncached_phase(&shared, hash) {
                needed[first..].iter_mut().for_each(|n| *n = true);
            }
        }
        inputs.push(ingested);
    }

    let mut endpoints: Vec<&str> = config
        .phases
        .iter()
        .zip(&needed)
        .filter(|(_, n)| **n)
        .map(|(p, _)| p.endpoint.as_str())
        .collect();
    endpoints.sort_unstable();
    endpoints.dedup();
    let mut backends = Vec::new();
    for endpoint in endpoints {
        let result = shared.client.health(endpoint).await;
        let attempts = match &result {
            Ok(c) => c.attempts,
            Err(e) => e.attempts,
        };
        shared.calls.fetch_add(attempts as u64, Ordering::Relaxed);
        match result {
            Ok(c) if c.value.ok => {
                shared
                    .deterministic
                    .insert(endpoint.to_owned(), c.value.deterministic);
                backends.push(BackendInfo {
                    endpoint: endpoint.to_owned(),
                    model_id: c.value.model_id,
                    deterministic: c.value.deterministic,
                });
            }
            Ok(_) => {
                return Err(PipelineError::BackendUnavailable {
                    endpoint: endpoint.to_owned(),
                    reason: "health check reported ok=false".into(),
                })
            }
            Err(e) => {
                return Err(PipelineError::BackendUnavailable {
                    endpoint: endpoint.to_owned(),
                    reason: e.to_string(),
                })
            }
        }
    }

    let shared = Arc::new(shared);
    let records = Arc::new(dataset.records.clone());
    let semaphore = Arc::new(Semaphore::new(config.concurrency));
    let (tx, mut rx) = mpsc::channel::<ImageResult>(config.concurrency * 2);
    for (index, input) in inputs.into_iter().enumerate() {
        let tx = tx.clone();
        let shared = Arc::clone(&shared);
        let records = Arc::clone(&records);
        let semaphore = Arc::clone(&semaphore);
        tokio::spawn(async move {
            let record = &records[index];
            let result = match input {
                Ok(hash) => {
                    let _permit = semaphore
                        .acquire()
                        .await
                        .expect("semaphore is never closed");
                    process_image(&shared, index, record, hash).await
                }
                Err(error) => ImageResult {
                    index,
                    entries: Vec::new(),
                    output: None,
                    failure: Some(ImageFailure {
                        image_id: record.id.clone(),
                        phase_index: None,
                        error,
                    }),
                },
            };
            let _ = tx.send(result).await;
        });
    }
    drop(tx);

    let mut slots: Vec<Option<ImageResult>> = (0..dataset.records.len()).map(|_| None).collect();
    while let Some(result) = rx.recv().await {
        let i = result.index;
        slots[i] = Some(result);
    }

    let mut entries = Vec::new();
    let mut outputs = Vec::new();
    let mut failures = Vec::new();
    for (slot, record) in slots.into_iter().zip(dataset.records.iter()) {
        let Some(r) = slot else {
            failures.push(ImageFailure {
                image_id: record.id.clone(),
                phase_index: None,
                error: "worker task aborted".into(),
            });
            continue;
        };
        entries.extend(r.entries);
        outputs.extend(r.output);
        failures.extend(r.failure);
    }

    let config_hash = config.config_hash();
    let run_dir = create_run_dir(&shared.store, &config_hash)?;
    let outputs_manifest_path =
        export_outputs(&shared.store, dataset, &outputs, &run_dir.join("outputs"))?;
    let backend_calls = shared.calls.load(Ordering::Relaxed);
    let manifest = RunManifest {
        schema_version: crate::SCHEMA_VERSION,
        toolkit_version: crate::VERSION.to_owned(),
        all_cached: failures.is_empty() && entries.iter().all(|e| e.cached),
        config_hash,
        config: effective_config(config),
        dataset: dataset.name.clone(),
        started,
        finished: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
        backends,
        entries,
        outputs,
        failures,
        backend_calls,
    };
    let manifest_path = run_dir.join("manifest.json");
    let body = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, body).map_err(|source| PipelineError::Io {
        path: manifest_path.clone(),
        source,
    })?;
    log::info!(
        "run {} finished: {} outputs, {} failures, {} backend calls",
        run_dir.display(),
        manifest.outputs.len(),
        manifest.failures.len(),
        backend_calls
    );
    Ok(RunOutcome {
        manifest,
        run_dir,
        manifest_path,
        outputs_manifest_path,
    })
}
