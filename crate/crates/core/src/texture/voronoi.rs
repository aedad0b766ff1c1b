//! Stage three of the texture pipeline: Voronoi surrogate segmentation
//! tasks. Cells are nearest-seed regions under the Euclidean metric with
//! ties resolved to the lowest seed index.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{CueError, Result};
use crate::raster::{ClassTable, ColorSpace, LabelMask, RasterImage};
use crate::texture::mosaic::ContourFilledImage;

#[derive(Debug, Clone)]
pub struct VoronoiLayout {
    pub height: usize,
    pub width: usize,
    /// Seed positions (x, y) on the pixel grid, unique.
    pub seeds: Vec<(u32, u32)>,
    /// Per-pixel index of the nearest seed (row-major).
    pub cell_map: Vec<u32>,
    /// Per-seed class id; empty until assigned.
    pub cell_class: Vec<u8>,
}

/// Nearest-seed index per pixel, row-major. Squared distances are
/// integers, so the argmin and its lowest-index tie rule are exact.
pub fn cells_for_seeds(height: usize, width: usize, seeds: &[(u32, u32)]) -> Vec<u32> {
    (0..height)
        .into_par_iter()
        .flat_map_iter(|y| {
            (0..width).map(move |x| {
                let mut best = u64::MAX;
                let mut best_i = 0u32;
                for (i, &(sx, sy)) in seeds.iter().enumerate() {
                    let dx = sx as i64 - x as i64;
                    let dy = sy as i64 - y as i64;
                    let d = (dx * dx + dy * dy) as u64;
                    // Strict comparison keeps the lowest index on ties.
                    if d < best {
                        best = d;
                        best_i = i as u32;
                    }
                }
                best_i
            })
        })
        .collect()
}

/// Draw `n_seeds` distinct grid positions uniformly and label every pixel
/// with its nearest seed.
pub fn rasterize_voronoi(
    size: (usize, usize),
    n_seeds: usize,
    rng: &mut ChaCha8Rng,
) -> Result<VoronoiLayout> {
    let (h, w) = size;
    let n = h * w;
    if n_seeds == 0 || n_seeds > n {
        return Err(CueError::TooManySeeds {
            requested: n_seeds,
            available: n,
        });
    }
    let idx = rand::seq::index::sample(rng, n, n_seeds);
    let seeds: Vec<(u32, u32)> = idx
        .into_iter()
        .map(|i| ((i % w) as u32, (i / w) as u32))
        .collect();
    let cell_map = cells_for_seeds(h, w, &seeds);

    Ok(VoronoiLayout {
        height: h,
        width: w,
        seeds,
        cell_map,
        cell_class: Vec::new(),
    })
}

/// Assign a uniformly random class to every cell and fill each cell's
/// pixels from a random position of a random contour-filled image of that
/// class. The returned mask labels each pixel with its cell's class.
pub fn assign_and_fill(
    layout: &VoronoiLayout,
    contour_pool: &[ContourFilledImage],
    table: &ClassTable,
    rng: &mut ChaCha8Rng,
) -> Result<(RasterImage, LabelMask, Vec<u8>)> {
    let k = table.k();
    // Index the pool per class and require full coverage.
    let mut per_class: Vec<Vec<&ContourFilledImage>> = vec![Vec::new(); k];
    for cf in contour_pool {
        if (cf.class_id as usize) < k {
            per_class[cf.class_id as usize].push(cf);
        }
    }
    if let Some(missing) = per_class.iter().position(Vec::is_empty) {
        return Err(CueError::MissingClassTextures(missing as u8));
    }

    let (h, w) = (layout.height, layout.width);
    let n = h * w;
    let n_cells = layout.seeds.len();

    // Per-cell class and source crop. Cell bounding boxes bound the offset
    // range so the crop stays inside the source image.
    let mut bbox = vec![(w, h, 0usize, 0usize); n_cells];
    for (i, &cell) in layout.cell_map.iter().enumerate() {
        let (x, y) = (i % w, i / w);
        let b = &mut bbox[cell as usize];
        b.0 = b.0.min(x);
        b.1 = b.1.min(y);
        b.2 = b.2.max(x);
        b.3 = b.3.max(y);
    }

    let mut cell_class = Vec::with_capacity(n_cells);
    let mut crops: Vec<(usize, usize, usize)> = Vec::with_capacity(n_cells);
    for cell in 0..n_cells {
        let class = rng.gen_range(0..k) as u8;
        cell_class.push(class);
        let sources = &per_class[class as usize];
        let si = rng.gen_range(0..sources.len());
        let src = &sources[si].image;
        let (min_x, min_y, max_x, max_y) = bbox[cell];
        let (bw, bh) = (max_x.saturating_sub(min_x) + 1, max_y.saturating_sub(min_y) + 1);
        if src.width() < bw || src.height() < bh {
            return Err(CueError::DimensionMismatch(format!(
                "contour image {}x{} smaller than cell bbox {}x{}",
                src.width(),
                src.height(),
                bw,
                bh
            )));
        }
        let ox = rng.gen_range(0..=src.width() - bw);
        let oy = rng.gen_range(0..=src.height() - bh);
        crops.push((si, ox, oy));
    }

    let mut data = vec![0.0; 3 * n];
    let mut labels = vec![0u8; n];
    for (i, &cell) in layout.cell_map.iter().enumerate() {
        let cell = cell as usize;
        let (x, y) = (i % w, i / w);
        let class = cell_class[cell];
        let (si, ox, oy) = crops[cell];
        let src = &per_class[class as usize][si].image;
        let sn = src.width() * src.height();
        let sx = x - bbox[cell].0 + ox;
        let sy = y - bbox[cell].1 + oy;
        let flat = sy * src.width() + sx;
        for c in 0..3 {
            data[c * n + i] = src.data()[c * sn + flat];
        }
        labels[i] = class;
    }

    Ok((
        RasterImage::new(ColorSpace::Rgb, h, w, data)?,
        LabelMask::new(h, w, labels)?,
        cell_class,
    ))
}
