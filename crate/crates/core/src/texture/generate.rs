//! Orchestration of the full texture pipeline: one derived (image, mask)
//! pair per base item, written as PNGs next to a fresh manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{CueError, Result};
use crate::io;
use crate::manifest::{DatasetManifest, ManifestItem};
use crate::raster::{CueSet, LabelMask, RasterImage, IGNORE};
use crate::rng::{stage, stage_rng};
use crate::texture::mosaic::{build_mosaic, contour_fill, ContourFilledImage, MosaicImage};
use crate::texture::patches::{balance_pool, extract_patches, PatchPool};
use crate::texture::voronoi::{assign_and_fill, rasterize_voronoi};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeedCount {
    Fixed(usize),
    /// Seeds per megapixel, rounded, at least one.
    PerMegapixel(f64),
}

impl SeedCount {
    pub fn for_size(self, height: usize, width: usize) -> usize {
        match self {
            SeedCount::Fixed(n) => n.max(1),
            SeedCount::PerMegapixel(per) => {
                let mpx = (height * width) as f64 / 1e6;
                ((per * mpx).round() as usize).max(1)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TextureConfig {
    pub min_pixels: usize,
    pub seeds: SeedCount,
    /// Output layout size; `None` follows each base item's size.
    pub out_size: Option<(usize, usize)>,
    pub balance_fraction: f64,
    pub mosaics_per_class: usize,
    /// Cap on contour-filled images per class, bounding memory on large
    /// base sets.
    pub max_contours_per_class: usize,
    /// Export the balanced patch pool (PNG patches + JSON index) here.
    pub cache_pool: Option<PathBuf>,
}

impl Default for TextureConfig {
    fn default() -> Self {
        Self {
            min_pixels: super::patches::DEFAULT_MIN_SEGMENT_PIXELS,
            // About 32 seeds on a 512x512 layout, scaled by area.
            seeds: SeedCount::PerMegapixel(122.0),
            out_size: None,
            balance_fraction: 0.5,
            mosaics_per_class: 1,
            max_contours_per_class: 4,
            cache_pool: None,
        }
    }
}

/// Run the three-stage pipeline over a base dataset and emit
/// `|base.items|` derived pairs plus a manifest into `out_dir`.
///
/// Deterministic: every stochastic stage draws from a stream derived from
/// `seed`, a stage tag and the item/class index, so outputs are
/// byte-identical across reruns and worker counts.
pub fn generate_texture_dataset(
    base: &DatasetManifest,
    cfg: &TextureConfig,
    out_dir: &Path,
    seed: u64,
    provenance: &str,
) -> Result<DatasetManifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| CueError::io(out_dir, e))?;
    let k = base.k();
    let n_items = base.items.len();

    // Load everything once; the pipeline reuses images and masks across
    // stages.
    let loaded: Vec<(RasterImage, LabelMask)> = (0..n_items)
        .map(|i| base.load_item(i))
        .collect::<Result<_>>()?;

    // Stage 1: class-wise patch extraction, merged in item order, then
    // balanced. Extraction is deterministic, so parallel workers cannot
    // reorder anything observable.
    let partial: Vec<PatchPool> = loaded
        .par_iter()
        .map(|(img, mask)| extract_patches(img, mask, &base.class_table, cfg.min_pixels))
        .collect::<Result<_>>()?;
    let mut pool = PatchPool::default();
    for p in partial {
        pool.merge(p);
    }
    for class in 0..k as u8 {
        if pool.class_area(class) == 0 {
            return Err(CueError::MissingClassTextures(class));
        }
    }

    let mut histogram: BTreeMap<u8, u64> = BTreeMap::new();
    for (_, mask) in &loaded {
        for &l in mask.labels() {
            if l != IGNORE {
                *histogram.entry(l).or_insert(0) += 1;
            }
        }
    }
    let mut balance_rng = stage_rng(seed, stage::BALANCE, 0);
    balance_pool(&mut pool, &histogram, cfg.balance_fraction, &mut balance_rng)?;
    if let Some(cache_dir) = &cfg.cache_pool {
        super::cache::save_pool(&pool, cache_dir)?;
    }

    // Mosaics must be able to source any base segment bbox and any output
    // cell bbox, so they span the larger of the two.
    let max_base_h = loaded.iter().map(|(i, _)| i.height()).max().unwrap_or(0);
    let max_base_w = loaded.iter().map(|(i, _)| i.width()).max().unwrap_or(0);
    let (out_h, out_w) = cfg.out_size.unwrap_or((max_base_h, max_base_w));
    let mosaic_size = (out_h.max(max_base_h), out_w.max(max_base_w));

    // Stage 2: mosaics per class, then contour-filled shape sources.
    let mosaics: Vec<MosaicImage> = (0..k)
        .into_par_iter()
        .flat_map_iter(|class| {
            let pool = &pool;
            (0..cfg.mosaics_per_class.max(1)).map(move |j| {
                let mut rng = stage_rng(seed, stage::MOSAIC, class * 1024 + j);
                build_mosaic(pool, class as u8, mosaic_size, &mut rng)
            })
        })
        .collect::<Result<_>>()?;

    let n_contours = cfg.max_contours_per_class.max(1).min(n_items);
    let contour_pool: Vec<ContourFilledImage> = (0..k)
        .into_par_iter()
        .flat_map_iter(|class| {
            let mosaics = &mosaics;
            let loaded = &loaded;
            (0..n_contours).map(move |j| {
                let mut rng = stage_rng(seed, stage::CONTOUR, class * 1024 + j);
                contour_fill(mosaics, &loaded[j].1, class as u8, &mut rng)
            })
        })
        .collect::<Result<_>>()?;

    // Stage 3: one Voronoi task per base item. Per-item streams keep the
    // output independent of the worker count.
    let items: Vec<ManifestItem> = (0..n_items)
        .into_par_iter()
        .map(|i| {
            let size = cfg
                .out_size
                .unwrap_or((loaded[i].0.height(), loaded[i].0.width()));
            let n_seeds = cfg.seeds.for_size(size.0, size.1).min(size.0 * size.1);
            let mut vrng = stage_rng(seed, stage::VORONOI, i);
            let layout = rasterize_voronoi(size, n_seeds, &mut vrng)?;
            let mut frng = stage_rng(seed, stage::FILL, i);
            let (img, mask, _) = assign_and_fill(&layout, &contour_pool, &base.class_table, &mut frng)?;
            let image_name = format!("texture_{i:05}.png");
            let mask_name = format!("texture_{i:05}_mask.png");
            io::save_image(&img, &out_dir.join(&image_name))?;
            io::save_mask(&mask, &out_dir.join(&mask_name))?;
            Ok(ManifestItem {
                image: PathBuf::from(image_name),
                mask: PathBuf::from(mask_name),
            })
        })
        .collect::<Result<_>>()?;

    let manifest = DatasetManifest::new(
        format!("{}_texture", base.name),
        base.split,
        base.class_table.clone(),
        CueSet::new(false, true, true, true)?,
        items,
        provenance.to_string(),
        seed,
        out_dir.to_path_buf(),
    )?;
    crate::manifest::save_manifest(&manifest, &out_dir.join("manifest.json"))?;
    Ok(manifest)
}
