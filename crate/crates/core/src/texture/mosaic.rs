//! Stage two of the texture pipeline: stitch patches of one class into
//! completely filled mosaic images, then fill the shapes of an original
//! mask with a single class's mosaic so boundaries stop carrying class
//! information.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::ccl;
use crate::error::{CueError, Result};
use crate::raster::{ColorSpace, LabelMask, RasterImage};
use crate::texture::patches::PatchPool;

/// Fully opaque raster stitched from overlapping patches of one class.
#[derive(Debug, Clone)]
pub struct MosaicImage {
    pub class_id: u8,
    pub image: RasterImage,
    /// Pixels actually written during stitching; equals the raster size on
    /// a completed mosaic.
    pub filled_pixels: usize,
}

impl MosaicImage {
    pub fn unfilled_pixels(&self) -> usize {
        self.image.height() * self.image.width() - self.filled_pixels
    }
}

/// Paste randomly chosen, randomly positioned patches (opaque pixels
/// overwrite) until no pixel is left unfilled. Each iteration aligns a
/// random opaque patch pixel onto the first unfilled canvas pixel, so every
/// pass makes progress and the loop terminates.
pub fn build_mosaic(
    pool: &PatchPool,
    class_id: u8,
    out_size: (usize, usize),
    rng: &mut ChaCha8Rng,
) -> Result<MosaicImage> {
    let patches = pool
        .per_class
        .get(&class_id)
        .filter(|ps| !ps.is_empty())
        .ok_or(CueError::NoPatchesForClass(class_id))?;
    let (h, w) = out_size;
    let n = h * w;
    let mut data = vec![0.0; 3 * n];
    let mut filled = vec![false; n];
    let mut cursor = 0usize; // first unfilled index so far

    // Opaque pixel lists are reused across iterations.
    let opaque: Vec<Vec<(usize, usize)>> = patches.iter().map(|p| p.opaque_pixels()).collect();

    while cursor < n {
        if filled[cursor] {
            cursor += 1;
            continue;
        }
        let (tx, ty) = (cursor % w, cursor / w);
        let pi = rng.gen_range(0..patches.len());
        let patch = &patches[pi];
        // Candidate placements put some opaque patch pixel onto the first
        // unfilled canvas pixel, guaranteeing progress. Among those,
        // placements keeping the patch fully on canvas are preferred, so a
        // canvas-sized patch reproduces itself exactly.
        let offsets: Vec<(isize, isize)> = opaque[pi]
            .iter()
            .map(|&(ax, ay)| (tx as isize - ax as isize, ty as isize - ay as isize))
            .collect();
        let on_canvas: Vec<(isize, isize)> = offsets
            .iter()
            .copied()
            .filter(|&(ox, oy)| {
                ox >= 0
                    && oy >= 0
                    && ox + patch.width as isize <= w as isize
                    && oy + patch.height as isize <= h as isize
            })
            .collect();
        let pool = if on_canvas.is_empty() { &offsets } else { &on_canvas };
        let (off_x, off_y) = pool[rng.gen_range(0..pool.len())];
        for &(px, py) in &opaque[pi] {
            let (x, y) = (px as isize + off_x, py as isize + off_y);
            if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                continue;
            }
            let i = y as usize * w + x as usize;
            let color = patch.rgb_at(px, py);
            for c in 0..3 {
                data[c * n + i] = color[c];
            }
            filled[i] = true;
        }
        debug_assert!(filled[cursor]);
    }

    let filled_pixels = filled.iter().filter(|&&f| f).count();
    Ok(MosaicImage {
        class_id,
        image: RasterImage::new(ColorSpace::Rgb, h, w, data)?,
        filled_pixels,
    })
}

/// The shapes of an original mask, each filled with mosaic content of a
/// single class.
#[derive(Debug, Clone)]
pub struct ContourFilledImage {
    pub class_id: u8,
    pub image: RasterImage,
}

/// Fill every segment shape of `base_mask` (regardless of its original
/// class, IGNORE regions included so the raster is fully covered) from a
/// random crop of a `class_id` mosaic.
pub fn contour_fill(
    mosaics: &[MosaicImage],
    base_mask: &LabelMask,
    class_id: u8,
    rng: &mut ChaCha8Rng,
) -> Result<ContourFilledImage> {
    let sources: Vec<&MosaicImage> = mosaics.iter().filter(|m| m.class_id == class_id).collect();
    if sources.is_empty() {
        return Err(CueError::NoPatchesForClass(class_id));
    }
    let (h, w) = (base_mask.height(), base_mask.width());
    let n = h * w;

    // Segments over all labels; IGNORE is treated as a label of its own so
    // the segment shapes partition the whole image.
    let labels = ccl::label_components(w, h, |i| Some(base_mask.labels()[i]));
    let n_segments = labels.iter().flatten().copied().max().map_or(0, |m| m + 1);

    // Bounding box per segment.
    let mut bbox: Vec<(usize, usize, usize, usize)> = vec![(w, h, 0, 0); n_segments as usize];
    for (i, &l) in labels.iter().enumerate() {
        let l = l.unwrap() as usize;
        let (x, y) = (i % w, i / w);
        let b = &mut bbox[l];
        b.0 = b.0.min(x);
        b.1 = b.1.min(y);
        b.2 = b.2.max(x);
        b.3 = b.3.max(y);
    }

    // Choose a source crop per segment: a random mosaic and a random offset
    // such that the segment's bounding box stays inside it.
    let mut choice: Vec<(usize, usize, usize)> = Vec::with_capacity(n_segments as usize);
    for &(min_x, min_y, max_x, max_y) in &bbox {
        let (bw, bh) = (max_x - min_x + 1, max_y - min_y + 1);
        let si = rng.gen_range(0..sources.len());
        let src = &sources[si].image;
        if src.width() < bw || src.height() < bh {
            return Err(CueError::DimensionMismatch(format!(
                "mosaic {}x{} smaller than segment bbox {}x{}",
                src.width(),
                src.height(),
                bw,
                bh
            )));
        }
        let ox = rng.gen_range(0..=src.width() - bw);
        let oy = rng.gen_range(0..=src.height() - bh);
        choice.push((si, ox, oy));
    }

    let mut data = vec![0.0; 3 * n];
    for (i, &l) in labels.iter().enumerate() {
        let seg = l.unwrap() as usize;
        let (x, y) = (i % w, i / w);
        let (si, ox, oy) = choice[seg];
        let src = &sources[si].image;
        let sn = src.width() * src.height();
        let sx = x - bbox[seg].0 + ox;
        let sy = y - bbox[seg].1 + oy;
        let si_flat = sy * src.width() + sx;
        for c in 0..3 {
            data[c * n + i] = src.data()[c * sn + si_flat];
        }
    }

    Ok(ContourFilledImage {
        class_id,
        image: RasterImage::new(ColorSpace::Rgb, h, w, data)?,
    })
}
