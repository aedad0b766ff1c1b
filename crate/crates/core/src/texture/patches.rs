//! Stage one of the texture pipeline: cut class-wise texture patches out of
//! labeled images, augment them, and balance the per-class pool.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::ccl;
use crate::error::{CueError, Result};
use crate::raster::{ClassTable, ColorSpace, LabelMask, RasterImage, IGNORE};

/// Segments below this pixel count are discarded during extraction.
pub const DEFAULT_MIN_SEGMENT_PIXELS: usize = 36;

/// Masked RGB crop of one segment: the bounding box of an 8-connected
/// same-class component, non-segment pixels transparent.
#[derive(Debug, Clone)]
pub struct TexturePatch {
    pub class_id: u8,
    pub width: usize,
    pub height: usize,
    /// Planar RGB, `rgb[c * w * h + y * w + x]`; transparent entries are 0.
    rgb: Vec<f64>,
    opaque: Vec<bool>,
}

impl TexturePatch {
    pub fn area(&self) -> usize {
        self.opaque.iter().filter(|&&o| o).count()
    }

    #[inline]
    pub fn is_opaque(&self, x: usize, y: usize) -> bool {
        self.opaque[y * self.width + x]
    }

    #[inline]
    pub fn rgb_at(&self, x: usize, y: usize) -> [f64; 3] {
        let n = self.width * self.height;
        let i = y * self.width + x;
        [self.rgb[i], self.rgb[n + i], self.rgb[2 * n + i]]
    }

    /// Coordinates of all opaque pixels in row-major order.
    pub fn opaque_pixels(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.area());
        for y in 0..self.height {
            for x in 0..self.width {
                if self.is_opaque(x, y) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    /// Assemble a patch from absolute (x, y, rgb) opaque pixels; the
    /// bounding box is tightened automatically.
    pub(crate) fn from_pixels(
        class_id: u8,
        pixels: &[(usize, usize, [f64; 3])],
    ) -> TexturePatch {
        let min_x = pixels.iter().map(|p| p.0).min().unwrap();
        let max_x = pixels.iter().map(|p| p.0).max().unwrap();
        let min_y = pixels.iter().map(|p| p.1).min().unwrap();
        let max_y = pixels.iter().map(|p| p.1).max().unwrap();
        let (w, h) = (max_x - min_x + 1, max_y - min_y + 1);
        let n = w * h;
        let mut rgb = vec![0.0; 3 * n];
        let mut opaque = vec![false; n];
        for &(x, y, color) in pixels {
            let i = (y - min_y) * w + (x - min_x);
            opaque[i] = true;
            for c in 0..3 {
                rgb[c * n + i] = color[c];
            }
        }
        TexturePatch {
            class_id,
            width: w,
            height: h,
            rgb,
            opaque,
        }
    }
}

/// Per-class patch lists plus a record of how many augmented copies each
/// class received during balancing.
#[derive(Debug, Clone, Default)]
pub struct PatchPool {
    pub per_class: BTreeMap<u8, Vec<TexturePatch>>,
    pub augmented: BTreeMap<u8, usize>,
}

impl PatchPool {
    pub fn class_area(&self, class: u8) -> usize {
        self.per_class
            .get(&class)
            .map(|ps| ps.iter().map(TexturePatch::area).sum())
            .unwrap_or(0)
    }

    pub fn total_patches(&self) -> usize {
        self.per_class.values().map(Vec::len).sum()
    }

    /// Merge another pool into this one, preserving per-class order.
    pub fn merge(&mut self, other: PatchPool) {
        for (class, patches) in other.per_class {
            self.per_class.entry(class).or_default().extend(patches);
        }
        for (class, n) in other.augmented {
            *self.augmented.entry(class).or_default() += n;
        }
    }
}

/// Cut one patch per 8-connected same-class segment with at least
/// `min_pixels` pixels. IGNORE pixels form no patches. An empty pool is
/// allowed.
pub fn extract_patches(
    img: &RasterImage,
    mask: &LabelMask,
    table: &ClassTable,
    min_pixels: usize,
) -> Result<PatchPool> {
    img.expect_space(ColorSpace::Rgb)?;
    if !mask.matches_image(img) {
        return Err(CueError::DimensionMismatch(
            "image and mask sizes differ".into(),
        ));
    }
    let (w, h) = (mask.width(), mask.height());
    let labels = ccl::label_components(w, h, |i| {
        let l = mask.labels()[i];
        if l == IGNORE || !table.contains(l) {
            None
        } else {
            Some(l)
        }
    });

    let mut components: BTreeMap<u32, Vec<(usize, usize, [f64; 3])>> = BTreeMap::new();
    for (i, &comp) in labels.iter().enumerate() {
        let Some(comp) = comp else { continue };
        let (x, y) = (i % w, i / w);
        components.entry(comp).or_default().push((
            x,
            y,
            [img.get(x, y, 0), img.get(x, y, 1), img.get(x, y, 2)],
        ));
    }

    let mut pool = PatchPool::default();
    for pixels in components.values() {
        if pixels.len() < min_pixels {
            continue;
        }
        let (x, y) = (pixels[0].0, pixels[0].1);
        let class_id = mask.get(x, y);
        pool.per_class
            .entry(class_id)
            .or_default()
            .push(TexturePatch::from_pixels(class_id, pixels));
    }
    Ok(pool)
}

/// One draw of augmentation parameters: horizontal flip, center crop to
/// 60-100% extent, and a shift/scale/rotation kept mild enough not to alter
/// the texture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub flip: bool,
    pub crop: f64,
    pub shift_x: f64,
    pub shift_y: f64,
    pub scale: f64,
    /// Radians.
    pub angle: f64,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        flip: false,
        crop: 1.0,
        shift_x: 0.0,
        shift_y: 0.0,
        scale: 1.0,
        angle: 0.0,
    };

    pub fn sample(rng: &mut ChaCha8Rng) -> AugmentParams {
        AugmentParams {
            flip: rng.gen_bool(0.5),
            crop: rng.gen_range(0.6..=1.0),
            shift_x: rng.gen_range(-0.1..=0.1),
            shift_y: rng.gen_range(-0.1..=0.1),
            scale: rng.gen_range(0.9..=1.1),
            angle: rng.gen_range(-15.0f64..=15.0).to_radians(),
        }
    }

    fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

/// Apply a fixed parameter draw. Nearest-neighbor resampling; the output
/// canvas is sized to the transformed bounding box and re-tightened to the
/// opaque extent.
pub fn apply_augment(p: &TexturePatch, params: &AugmentParams) -> Result<TexturePatch> {
    if params.is_identity() {
        return Ok(p.clone());
    }

    // Center crop first.
    let cw = ((p.width as f64 * params.crop).round() as usize).max(1);
    let ch = ((p.height as f64 * params.crop).round() as usize).max(1);
    let x0 = (p.width - cw) / 2;
    let y0 = (p.height - ch) / 2;

    // Shift is a translation of content on a fixed canvas, so for an
    // isolated patch it only matters through clipping; scale and rotation
    // resample around the crop center.
    let (cx, cy) = ((cw as f64 - 1.0) / 2.0, (ch as f64 - 1.0) / 2.0);
    let (sin, cos) = params.angle.sin_cos();
    let scale = params.scale;

    // Forward-transform canvas size: rotated and scaled crop extents. Kept
    // tight so parameter-free draws resample pixels onto themselves.
    let ow = (((cw as f64 * cos.abs() + ch as f64 * sin.abs()) * scale).ceil() as usize).max(1);
    let oh = (((cw as f64 * sin.abs() + ch as f64 * cos.abs()) * scale).ceil() as usize).max(1);
    let (ocx, ocy) = ((ow as f64 - 1.0) / 2.0, (oh as f64 - 1.0) / 2.0);
    let shift_x = params.shift_x * cw as f64;
    let shift_y = params.shift_y * ch as f64;

    let mut pixels = Vec::new();
    for oy in 0..oh {
        for ox in 0..ow {
            // Inverse map: undo shift, rotation and scale around the center.
            let dx = ox as f64 - ocx - shift_x;
            let dy = oy as f64 - ocy - shift_y;
            let sx = (dx * cos + dy * sin) / scale + cx;
            let sy = (-dx * sin + dy * cos) / scale + cy;
            let (sx, sy) = (sx.round(), sy.round());
            if sx < 0.0 || sy < 0.0 || sx >= cw as f64 || sy >= ch as f64 {
                continue;
            }
            let (mut sx, sy) = (sx as usize + x0, sy as usize + y0);
            if params.flip {
                sx = p.width - 1 - sx;
            }
            if p.is_opaque(sx, sy) {
                pixels.push((ox, oy, p.rgb_at(sx, sy)));
            }
        }
    }
    if pixels.is_empty() {
        return Err(CueError::DegeneratePatch);
    }
    Ok(TexturePatch::from_pixels(p.class_id, &pixels))
}

/// Randomly parameterized augmentation. Draws are retried (then degraded to
/// a bare flip) until the result keeps at least `min(36, original area)`
/// opaque pixels.
pub fn augment_patch(p: &TexturePatch, rng: &mut ChaCha8Rng) -> Result<TexturePatch> {
    let original = p.area();
    if original == 0 {
        return Err(CueError::DegeneratePatch);
    }
    let floor = DEFAULT_MIN_SEGMENT_PIXELS.min(original);
    for _ in 0..8 {
        let params = AugmentParams::sample(rng);
        if let Ok(out) = apply_augment(p, &params) {
            if out.area() >= floor {
                return Ok(out);
            }
        }
    }
    // Flip preserves the area exactly.
    apply_augment(
        p,
        &AugmentParams {
            flip: true,
            ..AugmentParams::IDENTITY
        },
    )
}

/// Top up underrepresented classes with augmented copies until every class
/// reaches `balance_fraction` of the largest class's total patch area.
pub fn balance_pool(
    pool: &mut PatchPool,
    pixel_histogram: &BTreeMap<u8, u64>,
    balance_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    for class in pool.per_class.keys() {
        if !pixel_histogram.contains_key(class) {
            return Err(CueError::InvalidParameter(format!(
                "pixel histogram does not cover class {class}"
            )));
        }
    }
    let classes: Vec<u8> = pool.per_class.keys().copied().collect();
    let max_area = classes
        .iter()
        .map(|&c| pool.class_area(c))
        .max()
        .unwrap_or(0);
    let target = (balance_fraction * max_area as f64).ceil() as usize;

    // Touch the shortest classes first (by mask pixel count, then id).
    let mut order = classes.clone();
    order.sort_by_key(|c| (pixel_histogram.get(c).copied().unwrap_or(0), *c));

    for class in order {
        let mut area = pool.class_area(class);
        let n_source = pool.per_class[&class].len();
        if n_source == 0 {
            continue;
        }
        let mut added = 0;
        while area < target {
            let pick = rng.gen_range(0..n_source);
            let augmented = augment_patch(&pool.per_class[&class][pick], rng)?;
            area += augmented.area();
            pool.per_class.get_mut(&class).unwrap().push(augmented);
            added += 1;
        }
        if added > 0 {
            *pool.augmented.entry(class).or_default() += added;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn checker_image(w: usize, h: usize) -> RasterImage {
        let n = w * h;
        let mut data = vec![0.0; 3 * n];
        for y in 0..h {
            for x in 0..w {
                let v = if (x + y) % 2 == 0 { 0.2 } else { 0.8 };
                data[y * w + x] = v;
                data[n + y * w + x] = 1.0 - v;
                data[2 * n + y * w + x] = 0.5;
            }
        }
        RasterImage::new(ColorSpace::Rgb, h, w, data).unwrap()
    }

    fn square_patch(side: usize) -> TexturePatch {
        let pixels: Vec<_> = (0..side * side)
            .map(|i| (i % side, i / side, [0.1 * ((i % 7) as f64), 0.5, 0.9]))
            .collect();
        TexturePatch::from_pixels(1, &pixels)
    }

    #[test]
    fn exact_threshold_square_is_kept() {
        let img = checker_image(10, 10);
        let mut mask = LabelMask::filled(10, 10, IGNORE);
        for y in 2..8 {
            for x in 2..8 {
                mask.set(x, y, 3);
            }
        }
        let table = ClassTable::synthetic(5);
        let pool = extract_patches(&img, &mask, &table, 36).unwrap();
        let patches = &pool.per_class[&3];
        assert_eq!(patches.len(), 1);
        assert_eq!(patches[0].area(), 36);
        assert_eq!((patches[0].width, patches[0].height), (6, 6));
    }

    #[test]
    fn small_blobs_are_discarded() {
        let img = checker_image(8, 8);
        let mut mask = LabelMask::filled(8, 8, IGNORE);
        for i in 0..5 {
            mask.set(i, 0, 2);
        }
        let table = ClassTable::synthetic(5);
        let pool = extract_patches(&img, &mask, &table, 36).unwrap();
        assert_eq!(pool.total_patches(), 0);
    }

    #[test]
    fn disjoint_components_become_separate_patches() {
        let img = checker_image(20, 10);
        let mut mask = LabelMask::filled(10, 20, IGNORE);
        // 8x5 = 40 px and 10x5 = 50 px rectangles of class 1, separated.
        for y in 0..5 {
            for x in 0..8 {
                mask.set(x, y, 1);
            }
            for x in 10..20 {
                mask.set(x, y, 1);
            }
        }
        let table = ClassTable::synthetic(2);
        let pool = extract_patches(&img, &mask, &table, 36).unwrap();
        let mut areas: Vec<usize> = pool.per_class[&1].iter().map(|p| p.area()).collect();
        areas.sort_unstable();
        assert_eq!(areas, vec![40, 50]);
    }

    #[test]
    fn ignore_pixels_form_no_patches() {
        let img = checker_image(8, 8);
        let mask = LabelMask::filled(8, 8, IGNORE);
        let table = ClassTable::synthetic(2);
        let pool = extract_patches(&img, &mask, &table, 1).unwrap();
        assert_eq!(pool.total_patches(), 0);
    }

    #[test]
    fn flip_mirrors_and_preserves_area() {
        let p = square_patch(7);
        let flipped = apply_augment(
            &p,
            &AugmentParams {
                flip: true,
                ..AugmentParams::IDENTITY
            },
        )
        .unwrap();
        assert_eq!(flipped.area(), p.area());
        for y in 0..7 {
            for x in 0..7 {
                assert_eq!(flipped.rgb_at(x, y), p.rgb_at(6 - x, y));
            }
        }
    }

    #[test]
    fn identity_params_are_a_no_op() {
        let p = square_patch(6);
        let same = apply_augment(&p, &AugmentParams::IDENTITY).unwrap();
        assert_eq!(same.rgb, p.rgb);
        assert_eq!(same.opaque, p.opaque);
    }

    #[test]
    fn rotation_roughly_preserves_area() {
        // Rasterizing a 10x10 square rotated by 15 degrees with the same
        // nearest-neighbor interpolation keeps the count near 100.
        let p = square_patch(10);
        let rotated = apply_augment(
            &p,
            &AugmentParams {
                angle: 15.0f64.to_radians(),
                ..AugmentParams::IDENTITY
            },
        )
        .unwrap();
        let area = rotated.area();
        assert!((90..=110).contains(&area), "area {area}");
    }

    #[test]
    fn augment_respects_minimum_area() {
        let p = square_patch(8); // area 64
        let mut rng = rng_from_seed(4);
        for _ in 0..50 {
            let out = augment_patch(&p, &mut rng).unwrap();
            assert!(out.area() >= 36, "area {}", out.area());
            assert_eq!(out.class_id, p.class_id);
        }
    }

    #[test]
    fn balancing_tops_up_small_classes() {
        let mut pool = PatchPool::default();
        // Class 0: one large patch (~1000 px); class 1: one small (~100 px).
        let big: Vec<_> = (0..1000)
            .map(|i| (i % 40, i / 40, [0.3, 0.3, 0.3]))
            .collect();
        let small: Vec<_> = (0..100).map(|i| (i % 10, i / 10, [0.7, 0.7, 0.7])).collect();
        pool.per_class
            .insert(0, vec![TexturePatch::from_pixels(0, &big)]);
        pool.per_class
            .insert(1, vec![TexturePatch::from_pixels(1, &small)]);
        let hist: BTreeMap<u8, u64> = [(0, 1000), (1, 100)].into();

        let mut rng = rng_from_seed(9);
        balance_pool(&mut pool, &hist, 0.5, &mut rng).unwrap();
        assert!(pool.class_area(1) >= 500, "area {}", pool.class_area(1));
        assert!(pool.augmented[&1] > 0);

        // Already balanced pools are unchanged.
        let before = pool.total_patches();
        balance_pool(&mut pool, &hist, 0.5, &mut rng).unwrap();
        assert_eq!(pool.total_patches(), before);

        // Single-class pools have nothing to balance against.
        let mut single = PatchPool::default();
        single
            .per_class
            .insert(2, vec![TexturePatch::from_pixels(2, &small)]);
        let hist: BTreeMap<u8, u64> = [(2, 100)].into();
        balance_pool(&mut single, &hist, 0.5, &mut rng).unwrap();
        assert_eq!(single.total_patches(), 1);
    }
}
