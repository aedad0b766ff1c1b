//! Evaluation quantities: confusion-matrix IoU/mIoU, boundary vs. interior
//! pixel accuracy, and ground-truth segment recall with size-binned
//! coverage statistics.
//!
//! Conventions: IGNORE pixels are excluded from every denominator and
//! cannot act as boundary anchors; ground-truth segments use
//! 8-connectivity; argmax-style ties break to the lowest class index.

use std::collections::BTreeMap;

use crate::error::{CueError, Result};
use crate::raster::{LabelMask, IGNORE};

/// K x K counts, rows = ground truth, cols = prediction. Mergeable: counts
/// over disjoint pixel sets add elementwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn count(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.k + pred]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.k != other.k {
            return Err(CueError::ShapeMismatch(format!(
                "cannot merge confusion matrices with K={} and K={}",
                self.k, other.k
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// From explicit rows, for tests and small examples.
    pub fn from_rows(rows: &[&[u64]]) -> Self {
        let k = rows.len();
        let mut counts = Vec::with_capacity(k * k);
        for r in rows {
            assert_eq!(r.len(), k);
            counts.extend_from_slice(r);
        }
        Self { k, counts }
    }
}

/// Increment `counts[gt][pred]` for every non-IGNORE ground-truth pixel.
/// The prediction must not contain IGNORE and both masks must only hold ids
/// below K.
pub fn accumulate(cm: &mut ConfusionMatrix, pred: &LabelMask, gt: &LabelMask) -> Result<()> {
    if !pred.same_shape(gt) {
        return Err(CueError::ShapeMismatch(format!(
            "pred {}x{} vs gt {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let k = cm.k as u64;
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        if g == IGNORE {
            continue;
        }
        if (g as u64) >= k || p == IGNORE || (p as u64) >= k {
            return Err(CueError::Schema(format!(
                "label pair (gt={g}, pred={p}) outside 0..{k}"
            )));
        }
        cm.counts[g as usize * cm.k + p as usize] += 1;
    }
    Ok(())
}

/// Per-class IoU = TP / (TP + FP + FN); `None` where the denominator is 0
/// (class absent from both ground truth and prediction).
pub fn class_iou(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    let k = cm.k;
    (0..k)
        .map(|c| {
            let tp = cm.count(c, c);
            let fp: u64 = (0..k).filter(|&g| g != c).map(|g| cm.count(g, c)).sum();
            let fn_: u64 = (0..k).filter(|&p| p != c).map(|p| cm.count(c, p)).sum();
            let denom = tp + fp + fn_;
            if denom == 0 {
                None
            } else {
                Some(tp as f64 / denom as f64)
            }
        })
        .collect()
}

/// Arithmetic mean over the defined class IoUs only.
pub fn miou(cm: &ConfusionMatrix) -> Result<f64> {
    let ious = class_iou(cm);
    let defined: Vec<f64> = ious.into_iter().flatten().collect();
    if defined.is_empty() {
        return Err(CueError::AllUndefined);
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryFlag {
    Boundary,
    Interior,
    Ignore,
}

/// Per-pixel boundary/interior split of a ground-truth mask.
///
/// A pixel is boundary iff some differently labeled, non-IGNORE pixel lies
/// within `radius` in the Manhattan metric. Image borders are not
/// boundaries by themselves, and a pixel surrounded only by IGNORE is
/// interior.
#[derive(Debug, Clone)]
pub struct BoundaryMask {
    height: usize,
    width: usize,
    pub radius: usize,
    flags: Vec<BoundaryFlag>,
}

impl BoundaryMask {
    pub fn flags(&self) -> &[BoundaryFlag] {
        &self.flags
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> BoundaryFlag {
        self.flags[y * self.width + x]
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

pub fn boundary_mask(gt: &LabelMask, radius: usize) -> BoundaryMask {
    let (h, w) = (gt.height(), gt.width());
    // Diamond offsets |dx|+|dy| <= radius, excluding the center.
    let mut offsets = Vec::new();
    let r = radius as isize;
    for dy in -r..=r {
        for dx in -r..=r {
            if dx.abs() + dy.abs() <= r && (dx, dy) != (0, 0) {
                offsets.push((dx, dy));
            }
        }
    }
    let mut flags = vec![BoundaryFlag::Interior; h * w];
    for y in 0..h {
        for x in 0..w {
            let own = gt.get(x, y);
            if own == IGNORE {
                flags[y * w + x] = BoundaryFlag::Ignore;
                continue;
            }
            let is_boundary = offsets.iter().any(|&(dx, dy)| {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    return false;
                }
                let other = gt.get(nx as usize, ny as usize);
                other != IGNORE && other != own
            });
            if is_boundary {
                flags[y * w + x] = BoundaryFlag::Boundary;
            }
        }
    }
    BoundaryMask {
        height: h,
        width: w,
        radius,
        flags,
    }
}

/// Pixel accuracy split over boundary and interior pixels. A region with no
/// pixels yields `None` for its fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitAccuracy {
    pub interior: Option<f64>,
    pub boundary: Option<f64>,
    pub overall: Option<f64>,
    pub n_interior: u64,
    pub n_boundary: u64,
}

pub fn split_accuracy(pred: &LabelMask, gt: &LabelMask, bm: &BoundaryMask) -> Result<SplitAccuracy> {
    if !pred.same_shape(gt) || gt.height() != bm.height || gt.width() != bm.width {
        return Err(CueError::ShapeMismatch(
            "prediction, ground truth and boundary mask must share dimensions".into(),
        ));
    }
    let (mut n_int, mut ok_int, mut n_bnd, mut ok_bnd) = (0u64, 0u64, 0u64, 0u64);
    for (i, (&p, &g)) in pred.labels().iter().zip(gt.labels()).enumerate() {
        if g == IGNORE {
            continue;
        }
        let correct = (p == g) as u64;
        match bm.flags[i] {
            BoundaryFlag::Boundary => {
                n_bnd += 1;
                ok_bnd += correct;
            }
            BoundaryFlag::Interior => {
                n_int += 1;
                ok_int += correct;
            }
            BoundaryFlag::Ignore => {}
        }
    }
    let frac = |ok: u64, n: u64| if n == 0 { None } else { Some(ok as f64 / n as f64) };
    Ok(SplitAccuracy {
        interior: frac(ok_int, n_int),
        boundary: frac(ok_bnd, n_bnd),
        overall: frac(ok_int + ok_bnd, n_int + n_bnd),
        n_interior: n_int,
        n_boundary: n_bnd,
    })
}

/// 8-connected same-class component of the ground truth.
#[derive(Debug, Clone)]
pub struct GtSegment {
    pub class_id: u8,
    /// Row-major pixel indices into the mask.
    pub pixels: Vec<usize>,
}

impl GtSegment {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

/// All 8-connected same-class components, IGNORE excluded. Segments are
/// emitted in order of their first (row-major) pixel.
pub fn gt_segments(gt: &LabelMask) -> Vec<GtSegment> {
    let (h, w) = (gt.height(), gt.width());
    let labels = crate::ccl::label_components(w, h, |i| {
        let l = gt.labels()[i];
        if l == IGNORE {
            None
        } else {
            Some(l)
        }
    });
    let mut segments: Vec<GtSegment> = Vec::new();
    let mut seg_of_component: BTreeMap<u32, usize> = BTreeMap::new();
    for (i, &comp) in labels.iter().enumerate() {
        let Some(comp) = comp else { continue };
        let seg = *seg_of_component.entry(comp).or_insert_with(|| {
            segments.push(GtSegment {
                class_id: gt.labels()[i],
                pixels: Vec::new(),
            });
            segments.len() - 1
        });
        segments[seg].pixels.push(i);
    }
    segments
}

/// Fraction of the segment's pixels predicted with the segment's class.
pub fn segment_recall(seg: &GtSegment, pred: &LabelMask) -> f64 {
    let hit = seg
        .pixels
        .iter()
        .filter(|&&i| pred.labels()[i] == seg.class_id)
        .count();
    hit as f64 / seg.pixels.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageBin {
    /// Inclusive lower area bound of the bin.
    pub lower: usize,
    /// Exclusive upper bound; `None` for the overflow bin.
    pub upper: Option<usize>,
    pub count: usize,
    pub mean_recall: Option<f64>,
    pub median_recall: Option<f64>,
}

/// Group segment recalls into area bins. Thresholds `t1 < t2 < ... < tn`
/// define the bins `[0,t1), [t1,t2), ..., [tn, inf)`.
pub fn coverage_histogram(
    segments: &[GtSegment],
    recalls: &[f64],
    thresholds: &[usize],
) -> Result<Vec<CoverageBin>> {
    if thresholds.is_empty() {
        return Err(CueError::EmptyBins);
    }
    if !thresholds.windows(2).all(|w| w[0] < w[1]) {
        return Err(CueError::InvalidParameter(
            "coverage bins must be strictly increasing".into(),
        ));
    }
    if segments.len() != recalls.len() {
        return Err(CueError::ShapeMismatch(
            "one recall value per segment required".into(),
        ));
    }
    let n_bins = thresholds.len() + 1;
    let mut per_bin: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for (seg, &recall) in segments.iter().zip(recalls) {
        let bin = thresholds.partition_point(|&t| t <= seg.area());
        per_bin[bin].push(recall);
    }
    Ok(per_bin
        .into_iter()
        .enumerate()
        .map(|(i, mut rs)| {
            let lower = if i == 0 { 0 } else { thresholds[i - 1] };
            let upper = thresholds.get(i).copied();
            let count = rs.len();
            let mean = if count == 0 {
                None
            } else {
                Some(rs.iter().sum::<f64>() / count as f64)
            };
            let median = if count == 0 {
                None
            } else {
                rs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                Some(if count % 2 == 1 {
                    rs[count / 2]
                } else {
                    (rs[count / 2 - 1] + rs[count / 2]) / 2.0
                })
            };
            CoverageBin {
                lower,
                upper,
                count,
                mean_recall: mean,
                median_recall: median,
            }
        })
        .collect())
}
