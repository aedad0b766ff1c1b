//! Shared fixtures for the integration suites.

use std::path::Path;

use rand::Rng;

use cueforge_core::io;
use cueforge_core::manifest::{save_manifest, DatasetManifest, ManifestItem, Split};
use cueforge_core::raster::{ClassTable, ColorSpace, CueSet, LabelMask, RasterImage};
use cueforge_core::rng::rng_from_seed;

/// Synthetic base dataset: K vertical class bands with per-class base color
/// and mild texture jitter, written as PNG pairs plus a manifest.
pub fn synthetic_base(dir: &Path, n_items: usize, k: usize, size: usize) -> DatasetManifest {
    let mut items = Vec::new();
    for i in 0..n_items {
        let mut rng = rng_from_seed(51_000 + i as u64);
        let n = size * size;
        let mut data = vec![0.0; 3 * n];
        let mut labels = vec![0u8; n];
        for y in 0..size {
            for x in 0..size {
                let class = (x * k / size).min(k - 1);
                let base = 0.15 + 0.7 * class as f64 / k as f64;
                let jitter: f64 = rng.gen_range(-0.1..0.1);
                let idx = y * size + x;
                data[idx] = (base + jitter).clamp(0.0, 1.0);
                data[n + idx] = (base + 0.5 * jitter).clamp(0.0, 1.0);
                data[2 * n + idx] = (1.0 - base + jitter).clamp(0.0, 1.0);
                labels[idx] = class as u8;
            }
        }
        let img = RasterImage::new(ColorSpace::Rgb, size, size, data).unwrap();
        let mask = LabelMask::new(size, size, labels).unwrap();
        let image = format!("base_{i:03}.png");
        let mask_name = format!("base_{i:03}_mask.png");
        io::save_image(&img, &dir.join(&image)).unwrap();
        io::save_mask(&mask, &dir.join(&mask_name)).unwrap();
        items.push(ManifestItem {
            image: image.into(),
            mask: mask_name.into(),
        });
    }
    let manifest = DatasetManifest::new(
        "synthetic".into(),
        Split::Train,
        ClassTable::synthetic(k),
        CueSet::ALL,
        items,
        "synthetic fixture".into(),
        1,
        dir.to_path_buf(),
    )
    .unwrap();
    save_manifest(&manifest, &dir.join("manifest.json")).unwrap();
    manifest
}

/// Recursively collect relative path -> file bytes for tree comparison.
#[allow(dead_code)] // not every test binary compares trees
pub fn dir_contents(dir: &Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}
