//! Patch-pool cache: one RGBA PNG per patch (alpha carries the opacity
//! mask) plus a JSON index, so intermediate pools can be inspected or fed
//! to other tooling.

use std::path::Path;

use image::RgbaImage;
use serde::{Deserialize, Serialize};

use crate::error::{CueError, Result};
use crate::texture::patches::{PatchPool, TexturePatch};

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    file: String,
    class_id: u8,
    width: usize,
    height: usize,
    area: usize,
}

#[derive(Serialize, Deserialize)]
struct PoolIndex {
    patches: Vec<IndexEntry>,
    augmented: Vec<(u8, usize)>,
}

pub fn save_pool(pool: &PatchPool, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CueError::io(dir, e))?;
    let mut index = PoolIndex {
        patches: Vec::new(),
        augmented: pool.augmented.iter().map(|(&c, &n)| (c, n)).collect(),
    };
    for (&class, patches) in &pool.per_class {
        for (i, patch) in patches.iter().enumerate() {
            let file = format!("patch_{class:03}_{i:04}.png");
            let mut img = RgbaImage::new(patch.width as u32, patch.height as u32);
            for y in 0..patch.height {
                for x in 0..patch.width {
                    let [r, g, b] = patch.rgb_at(x, y);
                    let a = if patch.is_opaque(x, y) { 255 } else { 0 };
                    let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                    img.put_pixel(x as u32, y as u32, image::Rgba([q(r), q(g), q(b), a]));
                }
            }
            let path = dir.join(&file);
            img.save(&path).map_err(|e| CueError::Png {
                path: path.clone(),
                source: e,
            })?;
            index.patches.push(IndexEntry {
                file,
                class_id: class,
                width: patch.width,
                height: patch.height,
                area: patch.area(),
            });
        }
    }
    let index_path = dir.join("pool_index.json");
    std::fs::write(&index_path, serde_json::to_string_pretty(&index)? + "\n")
        .map_err(|e| CueError::io(&index_path, e))
}

pub fn load_pool(dir: &Path) -> Result<PatchPool> {
    let index_path = dir.join("pool_index.json");
    if !index_path.exists() {
        return Err(CueError::MissingFile(index_path));
    }
    let text = std::fs::read_to_string(&index_path).map_err(|e| CueError::io(&index_path, e))?;
    let index: PoolIndex = serde_json::from_str(&text)?;
    let mut pool = PatchPool::default();
    for entry in &index.patches {
        let path = dir.join(&entry.file);
        let img = image::ImageReader::open(&path)
            .map_err(|e| CueError::io(&path, e))?
            .decode()
            .map_err(|e| CueError::Png {
                path: path.clone(),
                source: e,
            })?
            .to_rgba8();
        let mut pixels = Vec::new();
        for (x, y, px) in img.enumerate_pixels() {
            if px.0[3] > 0 {
                pixels.push((
                    x as usize,
                    y as usize,
                    [
                        px.0[0] as f64 / 255.0,
                        px.0[1] as f64 / 255.0,
                        px.0[2] as f64 / 255.0,
                    ],
                ));
            }
        }
        if pixels.is_empty() {
            return Err(CueError::Schema(format!(
                "{}: cached patch has no opaque pixels",
                path.display()
            )));
        }
        pool.per_class
            .entry(entry.class_id)
            .or_default()
            .push(TexturePatch::from_pixels(entry.class_id, &pixels));
    }
    for (class, n) in index.augmented {
        pool.augmented.insert(class, n);
    }
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{ClassTable, ColorSpace, LabelMask, RasterImage};
    use crate::texture::patches::extract_patches;

    #[test]
    fn pool_cache_roundtrip_preserves_geometry_and_areas() {
        let n = 10 * 10;
        let data: Vec<f64> = (0..3 * n).map(|i| ((i * 7) % 256) as f64 / 255.0).collect();
        let img = RasterImage::new(ColorSpace::Rgb, 10, 10, data).unwrap();
        let mut mask = LabelMask::filled(10, 10, 255);
        for y in 0..7 {
            for x in 0..7 {
                mask.set(x, y, 1);
            }
        }
        let table = ClassTable::synthetic(2);
        let pool = extract_patches(&img, &mask, &table, 36).unwrap();

        let dir = tempfile::tempdir().unwrap();
        save_pool(&pool, dir.path()).unwrap();
        let back = load_pool(dir.path()).unwrap();
        assert_eq!(back.total_patches(), pool.total_patches());
        let (a, b) = (&pool.per_class[&1][0], &back.per_class[&1][0]);
        assert_eq!((a.width, a.height, a.area()), (b.width, b.height, b.area()));
        for y in 0..a.height {
            for x in 0..a.width {
                assert_eq!(a.is_opaque(x, y), b.is_opaque(x, y));
                if a.is_opaque(x, y) {
                    // Values originate from 8-bit data, so they survive.
                    assert_eq!(a.rgb_at(x, y), b.rgb_at(x, y));
                }
            }
        }
    }
}
