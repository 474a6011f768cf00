#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Duration;

use image::{ImageFormat, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use sim2real_core::dataset::{AnnotationKind, BoxFormat, DatasetManifest, ImageRecord};

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Runs the `sim2real` binary with a clean cache-dir environment.
pub fn sim2real(args: &[&str]) -> Output {
    sim2real_env(args, &[])
}

pub fn sim2real_env(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sim2real"));
    cmd.args(args)
        .env_remove("SIM2REAL_CACHE_DIR")
        .env("RUST_LOG", "warn");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn sim2real")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_slice(
        &std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display())),
    )
    .unwrap()
}

/// Validates `value` against `schemas/v1/<name>.schema.json`.
pub fn assert_schema(name: &str, value: &Value) {
    let schema = read_json(&repo_root().join(format!("schemas/v1/{name}.schema.json")));
    let validator =
        jsonschema::validator_for(&schema).unwrap_or_else(|e| panic!("schema {name}: {e}"));
    let errors: Vec<String> = validator
        .iter_errors(value)
        .map(|e| format!("{} at {}", e, e.instance_path()))
        .collect();
    assert!(errors.is_empty(), "{name}: {errors:#?}\n{value:#}");
}

pub fn png_bytes(width: u32, height: u32, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = RgbImage::from_fn(width, height, |_, _| {
        Rgb([rng.random(), rng.random(), rng.random()])
    });
    let mut out = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut out), ImageFormat::Png)
        .unwrap();
    out
}

pub fn manifest(
    kind: AnnotationKind,
    categories: &[&str],
    records: Vec<ImageRecord>,
    dir: &Path,
) -> DatasetManifest {
    DatasetManifest {
        name: "fixture".into(),
        root: "images".into(),
        annotation_kind: kind,
        categories: categories.iter().map(|s| s.to_string()).collect(),
        box_format: BoxFormat::Pixel,
        records,
        base_dir: dir.to_path_buf(),
    }
}

/// Writes PNGs of the given sizes plus `manifest.json` under `dir`.
pub fn image_dataset(dir: &Path, sizes: &[(u32, u32)]) -> PathBuf {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).unwrap();
    let records = sizes
        .iter()
        .enumerate()
        .map(|(i, &(w, h))| {
            let id = format!("img_{i:03}");
            std::fs::write(images.join(format!("{id}.png")), png_bytes(w, h, i as u64)).unwrap();
            ImageRecord {
                path: format!("{id}.png"),
                id,
                width: w,
                height: h,
                source_tag: "synthetic".into(),
            }
        })
        .collect();
    let path = dir.join("manifest.json");
    manifest(AnnotationKind::None, &[], records, dir)
        .save(&path)
        .unwrap();
    path
}

/// Two-phase pipeline config against `url`, with fast retries.
pub fn write_config(dir: &Path, url: &str, extra: &str) -> PathBuf {
    let text = format!(
        r#"dataset = "manifest.json"
cache_dir = "cache"
concurrency = 4
retries = 2
backoff_base_ms = 5
timeout_secs = 10
{extra}
[[phases]]
kind = "diffusion_enhance"
endpoint = "{url}"
seed = 0

[[phases]]
kind = "im2im_translate"
endpoint = "{url}"
target_domain = "cs"
"#
    );
    let path = dir.join("pipeline.toml");
    std::fs::write(&path, text).unwrap();
    path
}

pub const SHORT: Duration = Duration::from_secs(10);
