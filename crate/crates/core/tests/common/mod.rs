#![allow(dead_code)]

use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sim2real_core::dataset::{AnnotationKind, BoxFormat, DatasetManifest, ImageRecord};

/// Random RGB PNG bytes.
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

/// Writes `sizes.len()` PNGs under `dir/images` and returns a manifest for them.
pub fn image_dataset(dir: &Path, sizes: &[(u32, u32)]) -> DatasetManifest {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).unwrap();
    let mut records = Vec::new();
    for (i, &(w, h)) in sizes.iter().enumerate() {
        let id = format!("img_{i:03}");
        let name = format!("{id}.png");
        std::fs::write(images.join(&name), png_bytes(w, h, i as u64)).unwrap();
        records.push(ImageRecord {
            id,
            path: name,
            width: w,
            height: h,
            source_tag: "synthetic".into(),
        });
    }
    let manifest = DatasetManifest {
        name: "fixture".into(),
        root: "images".into(),
        annotation_kind: AnnotationKind::None,
        categories: Vec::new(),
        box_format: BoxFormat::Pixel,
        records,
        base_dir: dir.to_path_buf(),
    };
    manifest.save(&dir.join("manifest.json")).unwrap();
    manifest
}
