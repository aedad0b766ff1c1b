//! Writes a small synthetic base dataset for manual smoke runs.
use cueforge_core::io;
use cueforge_core::manifest::{save_manifest, DatasetManifest, ManifestItem, Split};
use cueforge_core::raster::{ClassTable, ColorSpace, CueSet, LabelMask, RasterImage};
use cueforge_core::rng::rng_from_seed;
use rand::Rng;

fn main() {
    let dir = std::path::PathBuf::from(std::env::args().nth(1).expect("usage: make_fixture DIR"));
    std::fs::create_dir_all(&dir).unwrap();
    let (n_items, k, size) = (3usize, 3usize, 64usize);
    let mut items = Vec::new();
    for i in 0..n_items {
        let mut rng = rng_from_seed(7_000 + i as u64);
        let n = size * size;
        let mut data = vec![0.0; 3 * n];
        let mut labels = vec![0u8; n];
        for y in 0..size {
            for x in 0..size {
                let class = (x * k / size).min(k - 1);
                let base = 0.2 + 0.6 * class as f64 / k as f64;
                let jitter: f64 = rng.gen_range(-0.1..0.1);
                let idx = y * size + x;
                data[idx] = (base + jitter).clamp(0.0, 1.0);
                data[n + idx] = (base * 0.7 + jitter).clamp(0.0, 1.0);
                data[2 * n + idx] = (1.0 - base + 0.5 * jitter).clamp(0.0, 1.0);
                labels[idx] = class as u8;
            }
        }
        let img = RasterImage::new(ColorSpace::Rgb, size, size, data).unwrap();
        let mask = LabelMask::new(size, size, labels).unwrap();
        let image = format!("img_{i:03}.png");
        let mask_name = format!("img_{i:03}_mask.png");
        io::save_image(&img, &dir.join(&image)).unwrap();
        io::save_mask(&mask, &dir.join(&mask_name)).unwrap();
        items.push(ManifestItem { image: image.into(), mask: mask_name.into() });
    }
    let manifest = DatasetManifest::new(
        "smoke".into(),
        Split::Train,
        ClassTable::synthetic(k),
        CueSet::ALL,
        items,
        "fixture generator".into(),
        1,
        dir.clone(),
    )
    .unwrap();
    save_manifest(&manifest, &dir.join("manifest.json")).unwrap();
    println!("wrote {}", dir.display());
}
