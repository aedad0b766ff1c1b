//! HSV decomposition and channel projection.
//!
//! Color splits into a gray component V and a chromatic component HS. All
//! cue variants that keep only one of them are produced here, as are the
//! per-pixel feature datasets the color experts train on.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::error::{CueError, Result};
use crate::raster::{ColorSpace, CueSet, GrayMode, LabelMask, RasterImage, IGNORE};
use crate::rng;

/// Hexcone conversion of one pixel. H is stored as angle/360 in [0,1) and
/// forced to 0 for achromatic pixels.
pub fn rgb_to_hsv_pixel(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        (((g - b) / delta).rem_euclid(6.0)) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    // rem_euclid(6.0) can land on 6.0/6.0 for g slightly below b.
    let h = if h >= 1.0 { 0.0 } else { h };
    (h, s, v)
}

pub fn hsv_to_rgb_pixel(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        return (v, v, v);
    }
    let h6 = (h * 6.0).rem_euclid(6.0);
    let sector = (h6.floor() as i64).clamp(0, 5);
    let f = h6 - sector as f64;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

pub fn rgb_to_hsv(img: &RasterImage) -> Result<RasterImage> {
    img.expect_space(ColorSpace::Rgb)?;
    let n = img.height() * img.width();
    let mut data = vec![0.0; 3 * n];
    let (rp, gp, bp) = (img.plane(0), img.plane(1), img.plane(2));
    for i in 0..n {
        let (h, s, v) = rgb_to_hsv_pixel(rp[i], gp[i], bp[i]);
        data[i] = h;
        data[n + i] = s;
        data[2 * n + i] = v;
    }
    RasterImage::new(ColorSpace::Hsv, img.height(), img.width(), data)
}

pub fn hsv_to_rgb(img: &RasterImage) -> Result<RasterImage> {
    img.expect_space(ColorSpace::Hsv)?;
    let n = img.height() * img.width();
    let mut data = vec![0.0; 3 * n];
    let (hp, sp, vp) = (img.plane(0), img.plane(1), img.plane(2));
    for i in 0..n {
        let (r, g, b) = hsv_to_rgb_pixel(hp[i], sp[i], vp[i]);
        data[i] = r;
        data[n + i] = g;
        data[2 * n + i] = b;
    }
    RasterImage::new(ColorSpace::Rgb, img.height(), img.width(), data)
}

pub fn gray_pixel(r: f64, g: f64, b: f64, mode: GrayMode) -> f64 {
    match mode {
        GrayMode::Mean => (r + g + b) / 3.0,
        GrayMode::Max => r.max(g).max(b),
    }
}

pub fn to_gray(img: &RasterImage, mode: GrayMode) -> Result<RasterImage> {
    img.expect_space(ColorSpace::Rgb)?;
    let n = img.height() * img.width();
    let (rp, gp, bp) = (img.plane(0), img.plane(1), img.plane(2));
    let data = (0..n)
        .map(|i| gray_pixel(rp[i], gp[i], bp[i], mode))
        .collect();
    RasterImage::new(ColorSpace::Gray, img.height(), img.width(), data)
}

/// Constant value channel used when rendering HS-only images. Mid value
/// keeps chroma contrast while staying displayable.
pub const NEUTRAL_V: f64 = 0.5;

/// Project an image onto the color carriers in `keep`.
///
/// * V and HS: identity.
/// * V only: gray image via `to_gray`; gray inputs pass through, making the
///   projection idempotent.
/// * HS only: value channel replaced by [`NEUTRAL_V`], rendered back to RGB.
pub fn project_cues(img: &RasterImage, keep: CueSet, mode: GrayMode) -> Result<RasterImage> {
    project_cues_with(img, keep, mode, NEUTRAL_V)
}

/// [`project_cues`] with an explicit neutral value channel for HS-only
/// renderings.
pub fn project_cues_with(
    img: &RasterImage,
    keep: CueSet,
    mode: GrayMode,
    neutral_v: f64,
) -> Result<RasterImage> {
    if !keep.v && !keep.hs {
        return Err(CueError::EmptyColorCarrier);
    }
    if !(0.0..=1.0).contains(&neutral_v) {
        return Err(CueError::InvalidParameter(format!(
            "neutral value {neutral_v} outside [0, 1]"
        )));
    }
    match (keep.v, keep.hs) {
        (true, true) => {
            img.expect_space(ColorSpace::Rgb)?;
            Ok(img.clone())
        }
        (true, false) => {
            if img.space() == ColorSpace::Gray {
                return Ok(img.clone());
            }
            to_gray(img, mode)
        }
        (false, true) => {
            let mut hsv = rgb_to_hsv(img)?;
            hsv.plane_mut(2).fill(neutral_v);
            hsv_to_rgb(&hsv)
        }
        (false, false) => unreachable!(),
    }
}

/// Per-pixel training rows for a color expert: flat feature matrix plus
/// matching labels.
#[derive(Debug, Clone)]
pub struct PixelDataset {
    pub features: Vec<f64>,
    pub labels: Vec<u8>,
    pub cue_set: CueSet,
    pub feature_dim: usize,
}

impl PixelDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }
}

/// Feature vector of one pixel under a cue set: `{V} -> [gray]`,
/// `{HS} -> [h, s]`, `{V,HS} -> [r, g, b]`.
pub fn pixel_features(img: &RasterImage, x: usize, y: usize, keep: CueSet, mode: GrayMode) -> Vec<f64> {
    let r = img.get(x, y, 0);
    let (g, b) = if img.channels() == 3 {
        (img.get(x, y, 1), img.get(x, y, 2))
    } else {
        (r, r)
    };
    match (keep.v, keep.hs) {
        (true, true) => vec![r, g, b],
        (true, false) => vec![gray_pixel(r, g, b, mode)],
        (false, true) => {
            let (h, s, _) = rgb_to_hsv_pixel(r, g, b);
            vec![h, s]
        }
        (false, false) => vec![],
    }
}

/// Draw class-stratified pixel samples from every image.
///
/// The per-image quota is `samples_per_image / k_present`, remainder going
/// to the most frequent classes; classes with fewer pixels than their quota
/// contribute everything they have. IGNORE pixels are never sampled.
/// Deterministic: image `i` draws from the stream `seed ^ SAMPLING ^ i`.
pub fn build_pixel_dataset(
    items: &[(RasterImage, LabelMask)],
    keep: CueSet,
    mode: GrayMode,
    samples_per_image: usize,
    seed: u64,
) -> Result<PixelDataset> {
    if keep.s || keep.t {
        return Err(CueError::InvalidParameter(
            "pixel datasets carry color cues only (no S, no T)".into(),
        ));
    }
    let feature_dim = keep.feature_dim();
    if feature_dim == 0 {
        return Err(CueError::EmptyColorCarrier);
    }
    if samples_per_image == 0 {
        return Err(CueError::InvalidParameter(
            "samples_per_image must be at least 1".into(),
        ));
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (index, (img, mask)) in items.iter().enumerate() {
        if !mask.matches_image(img) {
            return Err(CueError::DimensionMismatch(format!(
                "item {index}: image and mask sizes differ"
            )));
        }
        let mut rng = rng::stage_rng(seed, rng::stage::SAMPLING, index);
        let picked = stratified_pixels(mask, samples_per_image, &mut rng)?;
        for (x, y) in picked {
            features.extend(pixel_features(img, x, y, keep, mode));
            labels.push(mask.get(x, y));
        }
    }
    Ok(PixelDataset {
        features,
        labels,
        cue_set: keep,
        feature_dim,
    })
}

/// Stratified pixel draw for one mask; see [`build_pixel_dataset`].
fn stratified_pixels(
    mask: &LabelMask,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize)>> {
    // Bucket pixel coordinates by class, row-major order.
    let mut buckets: Vec<(u8, Vec<(usize, usize)>)> = Vec::new();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            let l = mask.get(x, y);
            if l == IGNORE {
                continue;
            }
            match buckets.binary_search_by_key(&l, |(c, _)| *c) {
                Ok(i) => buckets[i].1.push((x, y)),
                Err(i) => buckets.insert(i, (l, vec![(x, y)])),
            }
        }
    }
    if buckets.is_empty() {
        return Err(CueError::NoLabeledPixels);
    }

    let k = buckets.len();
    let quota = samples / k;
    let remainder = samples - quota * k;
    // Most frequent classes absorb the remainder; ties break on class id.
    let mut by_freq: Vec<usize> = (0..k).collect();
    by_freq.sort_by_key(|&i| (std::cmp::Reverse(buckets[i].1.len()), buckets[i].0));

    let mut take = vec![quota; k];
    for &i in by_freq.iter().take(remainder) {
        take[i] += 1;
    }

    let mut picked = Vec::with_capacity(samples);
    for (i, (_, pixels)) in buckets.iter_mut().enumerate() {
        let n = take[i].min(pixels.len());
        // Partial Fisher-Yates: the first n entries are a uniform draw
        // without replacement.
        for j in 0..n {
            let swap = j + rng_index(rng, pixels.len() - j);
            pixels.swap(j, swap);
        }
        picked.extend_from_slice(&pixels[..n]);
    }
    Ok(picked)
}

fn rng_index(rng: &mut ChaCha8Rng, n: usize) -> usize {
    use rand::Rng;
    if n <= 1 {
        0
    } else {
        rng.gen_range(0..n)
    }
}

/// Shuffle helper shared by training code; seeded and deterministic.
pub fn shuffled_indices(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}
