use std::time::Duration;

use anyhow::{Context, Result};
use sim2real_core::dataset::load_manifest;
use sim2real_core::embedding::{embed_remote, write_embeddings, EmbedOptions};
use sim2real_core::pipeline::{
    run_pipeline, BackendClient, PhaseParams, PipelineConfig, RetryPolicy,
};

use crate::{EmbedArgs, RunArgs, EXIT_OK, EXIT_PARTIAL};

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting async runtime")
}

/// Config file values with command-line overrides applied.
pub fn effective_config(args: &RunArgs) -> Result<PipelineConfig> {
    let mut config = PipelineConfig::load(&args.config)?;
    if let Some(d) = &args.dataset {
        config.dataset = Some(d.clone());
    }
    if let Some(c) = &args.cache_dir {
        config.cache_dir = c.clone();
    }
    if let Some(n) = args.concurrency {
        config.concurrency = n;
    }
    if let Some(r) = args.retries {
        config.retries = r;
    }
    if let Some(path) = &args.prompt_file {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading prompt file {}", path.display()))?;
        for phase in &mut config.phases {
            if let PhaseParams::Diffusion { prompt, .. } = &mut phase.params {
                *prompt = text.clone();
            }
        }
    }
    config.validate()?;
    Ok(config)
}

pub fn run(args: RunArgs) -> Result<i32> {
    let config = effective_config(&args)?;
    let dataset_path = config
        .dataset
        .clone()
        .context("no dataset given; set `dataset` in the config or pass --dataset")?;
    let dataset = load_manifest(&dataset_path)?;
    let outcome = runtime()?.block_on(run_pipeline(&config, &dataset))?;
    let m = &outcome.manifest;
    for f in &m.failures {
        let phase = f.phase_index.map_or("-".to_owned(), |p| p.to_string());
        eprintln!("failed: {} (phase {phase}): {}", f.image_id, f.error);
    }
    eprintln!(
        "{} of {} images completed, {} backend calls{}",
        m.outputs.len(),
        dataset.records.len(),
        m.backend_calls,
        if m.all_cached { ", all cached" } else { "" }
    );
    println!("{}", outcome.manifest_path.display());
    Ok(if m.is_complete_success() {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    })
}

pub fn embed(args: EmbedArgs) -> Result<i32> {
    let manifest = load_manifest(&args.manifest)?;
    let client = BackendClient::new(
        RetryPolicy {
            max_attempts: args.retries,
            ..RetryPolicy::default()
        },
        Duration::from_secs(args.timeout_secs),
    );
    let options = EmbedOptions {
        batch_size: args.batch_size,
        concurrency: args.concurrency,
    };
    let matrix = runtime()?.block_on(embed_remote(
        &client,
        &args.endpoint,
        &manifest.resolved_root(),
        &manifest.records,
        options,
    ))?;
    write_embeddings(&matrix, &args.out)?;
    eprintln!("{} x {} embeddings written", matrix.len(), matrix.dims());
    println!("{}", args.out.display());
    Ok(EXIT_OK)
}
