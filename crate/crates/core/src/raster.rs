//! Raster containers, class tables and the cue-set taxonomy.
//!
//! Images are planar `f64` rasters with unit-interval intensities; label
//! masks are `u8` class-id grids with 255 reserved as the ignore sentinel.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

use crate::error::{CueError, Result};

/// Ignore sentinel in 8-bit mask files (Cityscapes convention).
pub const IGNORE: u8 = 255;

/// Intensities may drift out of [0,1] by at most this much before a raster
/// is rejected; the diffusion solver is allowed float-level excursions.
const INTENSITY_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ColorSpace {
    Rgb,
    Hsv,
    Gray,
    Edge,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Rgb | ColorSpace::Hsv => 3,
            ColorSpace::Gray | ColorSpace::Edge => 1,
        }
    }
}

impl fmt::Display for ColorSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ColorSpace::Rgb => "RGB",
            ColorSpace::Hsv => "HSV",
            ColorSpace::Gray => "GRAY",
            ColorSpace::Edge => "EDGE",
        };
        f.write_str(s)
    }
}

/// Planar raster: `data[c * h * w + y * w + x]`, intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    space: ColorSpace,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(space: ColorSpace, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(CueError::Schema("raster dimensions must be non-zero".into()));
        }
        let expected = space.channels() * height * width;
        if data.len() != expected {
            return Err(CueError::DimensionMismatch(format!(
                "{space} raster {width}x{height} needs {expected} values, got {}",
                data.len()
            )));
        }
        for &v in &data {
            if !(-INTENSITY_SLACK..=1.0 + INTENSITY_SLACK).contains(&v) {
                return Err(CueError::Schema(format!(
                    "intensity {v} outside the unit interval"
                )));
            }
        }
        Ok(Self {
            height,
            width,
            space,
            data,
        })
    }

    /// Uniform raster of the given intensity.
    pub fn filled(space: ColorSpace, height: usize, width: usize, value: f64) -> Self {
        Self::new(
            space,
            height,
            width,
            vec![value; space.channels() * height * width],
        )
        .expect("constant raster is valid")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.space.channels()
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[c * self.height * self.width + y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[c * self.height * self.width + y * self.width + x] = v;
    }

    /// Per-pixel vector of all channels at (x, y).
    pub fn pixel(&self, x: usize, y: usize) -> Vec<f64> {
        (0..self.channels()).map(|c| self.get(x, y, c)).collect()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Same dimensions and channel count.
    pub fn same_shape(&self, other: &RasterImage) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.channels() == other.channels()
    }

    /// Re-tag the color space without touching the data. Channel counts of
    /// both spaces must agree.
    pub fn with_space(mut self, space: ColorSpace) -> Result<Self> {
        if space.channels() != self.space.channels() {
            return Err(CueError::WrongColorSpace {
                expected: self.space.to_string(),
                found: space.to_string(),
            });
        }
        self.space = space;
        Ok(self)
    }

    pub(crate) fn expect_space(&self, space: ColorSpace) -> Result<()> {
        if self.space != space {
            return Err(CueError::WrongColorSpace {
                expected: space.to_string(),
                found: self.space.to_string(),
            });
        }
        Ok(())
    }
}

/// H×W map of class ids; `IGNORE` marks unlabeled pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(CueError::DimensionMismatch(format!(
                "mask {width}x{height} needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn filled(height: usize, width: usize, label: u8) -> Self {
        Self {
            height,
            width,
            labels: vec![label; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, label: u8) {
        self.labels[y * self.width + x] = label;
    }

    pub fn same_shape(&self, other: &LabelMask) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn matches_image(&self, img: &RasterImage) -> bool {
        self.height == img.height() && self.width == img.width()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: u8,
    pub name: String,
    pub color: [u8; 3],
}

/// Contiguous class ids 0..K-1 with display names and colors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTable {
    entries: Vec<ClassEntry>,
}

impl ClassTable {
    pub fn new(entries: Vec<ClassEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(CueError::Schema("class table must not be empty".into()));
        }
        if entries.len() > IGNORE as usize {
            return Err(CueError::Schema(format!(
                "at most {} classes supported (255 is the ignore sentinel)",
                IGNORE
            )));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.id as usize != i {
                return Err(CueError::Schema(format!(
                    "class ids must be contiguous from 0; entry {i} has id {}",
                    e.id
                )));
            }
        }
        Ok(Self { entries })
    }

    /// Synthetic table `class_0..class_{k-1}` for generated datasets.
    pub fn synthetic(k: usize) -> Self {
        let entries = (0..k)
            .map(|i| ClassEntry {
                id: i as u8,
                name: format!("class_{i}"),
                // Spread hues around the circle so generated masks render
                // distinguishably.
                color: synthetic_color(i, k),
            })
            .collect();
        Self::new(entries).expect("synthetic table is contiguous")
    }

    pub fn k(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    pub fn contains(&self, id: u8) -> bool {
        (id as usize) < self.entries.len()
    }
}

fn synthetic_color(i: usize, k: usize) -> [u8; 3] {
    let h = i as f64 / k.max(1) as f64;
    let (r, g, b) = crate::color::hsv_to_rgb_pixel(h, 0.8, 0.9);
    [
        (r * 255.0).round() as u8,
        (g * 255.0).round() as u8,
        (b * 255.0).round() as u8,
    ]
}

/// Which information a derived dataset retains: shape, texture, gray value,
/// chroma. Texture cannot exist without a brightness or chroma carrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueSet {
    pub s: bool,
    pub t: bool,
    pub v: bool,
    pub hs: bool,
}

impl CueSet {
    pub fn new(s: bool, t: bool, v: bool, hs: bool) -> Result<Self> {
        let set = Self { s, t, v, hs };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t && !(self.v || self.hs) {
            return Err(CueError::Schema(
                "texture requires a brightness or chroma carrier (V or HS)".into(),
            ));
        }
        Ok(())
    }

    pub const ALL: CueSet = CueSet {
        s: true,
        t: true,
        v: true,
        hs: true,
    };

    pub const NONE: CueSet = CueSet {
        s: false,
        t: false,
        v: false,
        hs: false,
    };

    /// Number of per-pixel features a color expert sees for this cue set:
    /// V -> 1 (gray), HS -> 2, V+HS -> 3 (rgb).
    pub fn feature_dim(&self) -> usize {
        match (self.v, self.hs) {
            (true, true) => 3,
            (false, true) => 2,
            (true, false) => 1,
            (false, false) => 0,
        }
    }
}

impl fmt::Display for CueSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.s {
            parts.push("S");
        }
        if self.t {
            parts.push("T");
        }
        if self.v {
            parts.push("V");
        }
        if self.hs {
            parts.push("HS");
        }
        if parts.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&parts.join("+"))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrayMode {
    #[default]
    Mean,
    Max,
}

/// Per-class pixel counts plus invariant violations for one mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    /// Pixels per valid class id.
    pub counts: BTreeMap<u8, u64>,
    pub ignore_count: u64,
    /// Out-of-range label values and how often they occur.
    pub violations: Vec<MaskViolation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MaskViolation {
    pub label: u8,
    pub count: u64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum::<u64>()
            + self.ignore_count
            + self.violations.iter().map(|v| v.count).sum::<u64>()
    }
}

/// Count labels per class and list out-of-range values. Violations are data,
/// not failures.
pub fn validate_mask(mask: &LabelMask, table: &ClassTable) -> ValidationReport {
    let mut counts: BTreeMap<u8, u64> = BTreeMap::new();
    let mut bad: BTreeMap<u8, u64> = BTreeMap::new();
    let mut ignore_count = 0u64;
    for &l in mask.labels() {
        if l == IGNORE {
            ignore_count += 1;
        } else if table.contains(l) {
            *counts.entry(l).or_insert(0) += 1;
        } else {
            *bad.entry(l).or_insert(0) += 1;
        }
    }
    ValidationReport {
        counts,
        ignore_count,
        violations: bad
            .into_iter()
            .map(|(label, count)| MaskViolation { label, count })
            .collect(),
    }
}
