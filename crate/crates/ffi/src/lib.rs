//! C ABI for the cueforge toolkit.
//!
//! Conventions: every object crosses the boundary as an opaque handle with
//! a matching `*_free`; every fallible call returns a [`CueStatus`] and
//! writes results through out-pointers; the last failure's message is
//! available per thread via [`cueforge_last_error_message`]. Panics never
//! unwind across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use cueforge_core::color;
use cueforge_core::eed;
use cueforge_core::error::CueError;
use cueforge_core::io;
use cueforge_core::metrics;
use cueforge_core::raster::{ColorSpace, CueSet, GrayMode, LabelMask, RasterImage};
use cueforge_core::rng::rng_from_seed;
use cueforge_core::texture;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CueStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The filesystem failed (missing file, unreadable image).
    Io = 3,
    /// Inputs or parameters violate a contract.
    Validation = 4,
    /// An internal invariant failed.
    Internal = 5,
}

/// Opaque raster image handle.
pub struct CueImage(RasterImage);

/// Opaque label mask handle.
pub struct CueMask(LabelMask);

/// Opaque confusion matrix handle.
pub struct CueConfusion(metrics::ConfusionMatrix);

/// Color space tags for [`cueforge_image_new`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CueColorSpace {
    Rgb = 0,
    Hsv = 1,
    Gray = 2,
    Edge = 3,
}

/// Gray projection modes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CueGrayMode {
    Mean = 0,
    Max = 1,
}

/// Diffusivity selector for the diffusion solver.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CueDiffusivity {
    PeronaMalik = 0,
    WeickertExp = 1,
}

/// Plain-struct mirror of the solver parameters.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CueDiffusionParams {
    pub lambda: f64,
    pub kernel_size: usize,
    pub sigma: f64,
    pub rho: f64,
    pub tau: f64,
    pub h: f64,
    pub n_steps: usize,
    pub alpha: f64,
    pub beta: f64,
    pub diffusivity: CueDiffusivity,
    pub force_tau: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let cleaned: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(cleaned).unwrap_or_default();
    });
}

fn status_of(err: &CueError) -> CueStatus {
    if err.is_io() {
        CueStatus::Io
    } else {
        CueStatus::Validation
    }
}

fn fail(err: CueError) -> CueStatus {
    let status = status_of(&err);
    set_error(&err.to_string());
    status
}

/// Run a fallible body, translating panics and errors into status codes.
fn guarded(body: impl FnOnce() -> Result<CueStatus, CueError>) -> CueStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(status)) => status,
        Ok(Err(err)) => fail(err),
        Err(_) => {
            set_error("internal panic");
            CueStatus::Internal
        }
    }
}

/// Message of the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread; never free it.
#[no_mangle]
pub extern "C" fn cueforge_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn utf8_path<'a>(ptr: *const c_char) -> Result<&'a Path, CueStatus> {
    if ptr.is_null() {
        set_error("null path");
        return Err(CueStatus::NullArgument);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(CueStatus::InvalidUtf8)
        }
    }
}

macro_rules! require {
    ($ptr:expr) => {
        if $ptr.is_null() {
            set_error(concat!("null argument: ", stringify!($ptr)));
            return CueStatus::NullArgument;
        }
    };
}

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

/// Load an 8-bit PNG (1 or 3 channels) into a new image handle.
///
/// # Safety
/// `path` must reference a NUL-terminated string and `out` a writable
/// handle slot; both must stay valid for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn cueforge_image_load(
    path: *const c_char,
    out: *mut *mut CueImage,
) -> CueStatus {
    require!(out);
    let path = match utf8_path(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    guarded(|| {
        let img = io::load_image(path)?;
        *out = Box::into_raw(Box::new(CueImage(img)));
        Ok(CueStatus::Ok)
    })
}

/// Save an image handle as PNG (RGB or GRAY/EDGE).
///
/// # Safety
/// `img` must be a live handle from this library; `path` a NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn cueforge_image_save(
    img: *const CueImage,
    path: *const c_char,
) -> CueStatus {
    require!(img);
    let path = match utf8_path(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    guarded(|| {
        io::save_image(&(*img).0, path)?;
        Ok(CueStatus::Ok)
    })
}

/// Build an image from planar data: `data[c * h * w + y * w + x]`,
/// intensities in [0, 1], channel count implied by the color space.
///
/// # Safety
/// `data` must point to `channels * height * width` readable doubles and
/// `out` to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn cueforge_image_new(
    space: CueColorSpace,
    height: usize,
    width: usize,
    data: *const f64,
    out: *mut *mut CueImage,
) -> CueStatus {
    require!(data);
    require!(out);
    let space = match space {
        CueColorSpace::Rgb => ColorSpace::Rgb,
        CueColorSpace::Hsv => ColorSpace::Hsv,
        CueColorSpace::Gray => ColorSpace::Gray,
        CueColorSpace::Edge => ColorSpace::Edge,
    };
    let n = space.channels() * height * width;
    let values = std::slice::from_raw_parts(data, n).to_vec();
    guarded(move || {
        let img = RasterImage::new(space, height, width, values)?;
        *out = Box::into_raw(Box::new(CueImage(img)));
        Ok(CueStatus::Ok)
    })
}

/// # Safety
/// `img` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cueforge_image_height(img: *const CueImage) -> usize {
    if img.is_null() {
        return 0;
    }
    (*img).0.height()
}

/// # Safety
/// `img` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cueforge_image_width(img: *const CueImage) -> usize {
    if img.is_null() {
        return 0;
    }
    (*img).0.width()
}

/// # Safety
/// `img` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cueforge_image_channels(img: *const CueImage) -> usize {
    if img.is_null() {
        return 0;
    }
    (*img).0.channels()
}

/// Copy the planar intensities into a caller buffer of
/// `channels * height * width` doubles.
///
/// # Safety
/// `img` must be a live handle and `buffer` writable for that many values.
#[no_mangle]
pub unsafe extern "C" fn cueforge_image_data(
    img: *const CueImage,
    buffer: *mut f64,
) -> CueStatus {
    require!(img);
    require!(buffer);
    let data = (*img).0.data();
    std::ptr::copy_nonoverlapping(data.as_ptr(), buffer, data.len());
    CueStatus::Ok
}

/// # Safety
/// `img` must be a handle from this library, not yet freed; null is a
/// no-op.
#[no_mangle]
pub unsafe extern "C" fn cueforge_image_free(img: *mut CueImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

// ---------------------------------------------------------------------------
// Color operations
// ---------------------------------------------------------------------------

unsafe fn image_op(
    img: *const CueImage,
    out: *mut *mut CueImage,
    op: impl FnOnce(&RasterImage) -> Result<RasterImage, CueError>,
) -> CueStatus {
    require!(img);
    require!(out);
    guarded(move || {
        let result = op(&(*img).0)?;
        *out = Box::into_raw(Box::new(CueImage(result)));
        Ok(CueStatus::Ok)
    })
}

/// Convert RGB to HSV.
///
/// # Safety
/// `img` must be a live handle; `out` a writable slot.
#[no_mangle]
pub unsafe extern "C" fn cueforge_rgb_to_hsv(
    img: *const CueImage,
    out: *mut *mut CueImage,
) -> CueStatus {
    image_op(img, out, color::rgb_to_hsv)
}

/// Convert HSV back to RGB.
///
/// # Safety
/// `img` must be a live handle; `out` a writable slot.
#[no_mangle]
pub unsafe extern "C" fn cueforge_hsv_to_rgb(
    img: *const CueImage,
    out: *mut *mut CueImage,
) -> CueStatus {
    image_op(img, out, color::hsv_to_rgb)
}

/// Collapse RGB to GRAY by averaging or maximizing channels.
///
/// # Safety
/// `img` must be a live handle; `out` a writable slot.
#[no_mangle]
pub unsafe extern "C" fn cueforge_to_gray(
    img: *const CueImage,
    mode: CueGrayMode,
    out: *mut *mut CueImage,
) -> CueStatus {
    let mode = match mode {
        CueGrayMode::Mean => GrayMode::Mean,
        CueGrayMode::Max => GrayMode::Max,
    };
    image_op(img, out, move |i| color::to_gray(i, mode))
}

/// Project an RGB image onto the kept color carriers (keep_v, keep_hs).
///
/// # Safety
/// `img` must be a live handle; `out` a writable slot.
#[no_mangle]
pub unsafe extern "C" fn cueforge_project_cues(
    img: *const CueImage,
    keep_v: bool,
    keep_hs: bool,
    mode: CueGrayMode,
    out: *mut *mut CueImage,
) -> CueStatus {
    let mode = match mode {
        CueGrayMode::Mean => GrayMode::Mean,
        CueGrayMode::Max => GrayMode::Max,
    };
    image_op(img, out, move |i| {
        let keep = CueSet::new(false, false, keep_v, keep_hs)?;
        color::project_cues(i, keep, mode)
    })
}

// ---------------------------------------------------------------------------
// Diffusion
// ---------------------------------------------------------------------------

/// Reference diffusion parameters (contrast 1/15, kernel 5, sigma sqrt 5,
/// tau 0.2, 8192 steps, alpha 0.49, beta 0, Perona-Malik).
#[no_mangle]
pub extern "C" fn cueforge_eed_default_params() -> CueDiffusionParams {
    let p = eed::DiffusionParams::default();
    CueDiffusionParams {
        lambda: p.lambda,
        kernel_size: p.kernel_size,
        sigma: p.sigma,
        rho: p.rho,
        tau: p.tau,
        h: p.h,
        n_steps: p.n_steps,
        alpha: p.alpha,
        beta: p.beta,
        diffusivity: CueDiffusivity::PeronaMalik,
        force_tau: false,
    }
}

/// Run edge-enhancing diffusion; the tensor is recomputed every
/// `tensor_refresh` steps (1 = every step).
///
/// # Safety
/// `img` and `params` must be live pointers; `out` a writable slot.
#[no_mangle]
pub unsafe extern "C" fn cueforge_run_eed(
    img: *const CueImage,
    params: *const CueDiffusionParams,
    tensor_refresh: usize,
    out: *mut *mut CueImage,
) -> CueStatus {
    require!(params);
    let p = *params;
    let params = eed::DiffusionParams {
        lambda: p.lambda,
        kernel_size: p.kernel_size,
        sigma: p.sigma,
        rho: p.rho,
        tau: p.tau,
        h: p.h,
        n_steps: p.n_steps,
        alpha: p.alpha,
        beta: p.beta,
        diffusivity: match p.diffusivity {
            CueDiffusivity::PeronaMalik => eed::Diffusivity::PeronaMalik,
            CueDiffusivity::WeickertExp => eed::Diffusivity::WeickertExp,
        },
        force_tau: p.force_tau,
    };
    image_op(img, out, move |i| eed::run_eed(i, &params, tensor_refresh))
}

// ---------------------------------------------------------------------------
// Masks and metrics
// ---------------------------------------------------------------------------

/// Load a single-channel PNG of class ids (255 = ignore).
///
/// # Safety
/// `path` must be NUL-terminated; `out` a writable slot.
#[no_mangle]
pub unsafe extern "C" fn cueforge_mask_load(
    path: *const c_char,
    out: *mut *mut CueMask,
) -> CueStatus {
    require!(out);
    let path = match utf8_path(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    guarded(|| {
        let mask = io::load_mask(path)?;
        *out = Box::into_raw(Box::new(CueMask(mask)));
        Ok(CueStatus::Ok)
    })
}

/// Build a mask from row-major labels.
///
/// # Safety
/// `labels` must point to `height * width` readable bytes; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn cueforge_mask_new(
    height: usize,
    width: usize,
    labels: *const u8,
    out: *mut *mut CueMask,
) -> CueStatus {
    require!(labels);
    require!(out);
    let values = std::slice::from_raw_parts(labels, height * width).to_vec();
    guarded(move || {
        let mask = LabelMask::new(height, width, values)?;
        *out = Box::into_raw(Box::new(CueMask(mask)));
        Ok(CueStatus::Ok)
    })
}

/// # Safety
/// `mask` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cueforge_mask_height(mask: *const CueMask) -> usize {
    if mask.is_null() {
        return 0;
    }
    (*mask).0.height()
}

/// # Safety
/// `mask` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cueforge_mask_width(mask: *const CueMask) -> usize {
    if mask.is_null() {
        return 0;
    }
    (*mask).0.width()
}

/// Copy the labels into a caller buffer of `height * width` bytes.
///
/// # Safety
/// `mask` must be live and `buffer` writable for that many bytes.
#[no_mangle]
pub unsafe extern "C" fn cueforge_mask_labels(
    mask: *const CueMask,
    buffer: *mut u8,
) -> CueStatus {
    require!(mask);
    require!(buffer);
    let labels = (*mask).0.labels();
    std::ptr::copy_nonoverlapping(labels.as_ptr(), buffer, labels.len());
    CueStatus::Ok
}

/// # Safety
/// `mask` must be a handle from this library; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn cueforge_mask_free(mask: *mut CueMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// Fresh K x K confusion matrix.
#[no_mangle]
pub extern "C" fn cueforge_confusion_new(k: usize) -> *mut CueConfusion {
    Box::into_raw(Box::new(CueConfusion(metrics::ConfusionMatrix::new(k))))
}

/// Accumulate one (prediction, ground truth) pair.
///
/// # Safety
/// All three handles must be live.
#[no_mangle]
pub unsafe extern "C" fn cueforge_confusion_accumulate(
    cm: *mut CueConfusion,
    pred: *const CueMask,
    gt: *const CueMask,
) -> CueStatus {
    require!(cm);
    require!(pred);
    require!(gt);
    guarded(move || {
        metrics::accumulate(&mut (*cm).0, &(*pred).0, &(*gt).0)?;
        Ok(CueStatus::Ok)
    })
}

/// Mean IoU over defined classes.
///
/// # Safety
/// `cm` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cueforge_confusion_miou(
    cm: *const CueConfusion,
    out: *mut f64,
) -> CueStatus {
    require!(cm);
    require!(out);
    guarded(move || {
        *out = metrics::miou(&(*cm).0)?;
        Ok(CueStatus::Ok)
    })
}

/// Per-class IoU into a caller buffer of K doubles; undefined classes are
/// written as NaN.
///
/// # Safety
/// `cm` must be live; `buffer` writable for K doubles.
#[no_mangle]
pub unsafe extern "C" fn cueforge_confusion_class_iou(
    cm: *const CueConfusion,
    buffer: *mut f64,
) -> CueStatus {
    require!(cm);
    require!(buffer);
    let ious = metrics::class_iou(&(*cm).0);
    for (i, iou) in ious.into_iter().enumerate() {
        *buffer.add(i) = iou.unwrap_or(f64::NAN);
    }
    CueStatus::Ok
}

/// # Safety
/// `cm` must be a handle from this library; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn cueforge_confusion_free(cm: *mut CueConfusion) {
    if !cm.is_null() {
        drop(Box::from_raw(cm));
    }
}

/// Boundary/interior/overall pixel accuracy with the Manhattan boundary
/// radius. Empty regions are written as NaN.
///
/// # Safety
/// `pred` and `gt` must be live; the three out pointers writable.
#[no_mangle]
pub unsafe extern "C" fn cueforge_split_accuracy(
    pred: *const CueMask,
    gt: *const CueMask,
    boundary_radius: usize,
    out_interior: *mut f64,
    out_boundary: *mut f64,
    out_overall: *mut f64,
) -> CueStatus {
    require!(pred);
    require!(gt);
    require!(out_interior);
    require!(out_boundary);
    require!(out_overall);
    guarded(move || {
        let bm = metrics::boundary_mask(&(*gt).0, boundary_radius);
        let acc = metrics::split_accuracy(&(*pred).0, &(*gt).0, &bm)?;
        *out_interior = acc.interior.unwrap_or(f64::NAN);
        *out_boundary = acc.boundary.unwrap_or(f64::NAN);
        *out_overall = acc.overall.unwrap_or(f64::NAN);
        Ok(CueStatus::Ok)
    })
}

// ---------------------------------------------------------------------------
// Voronoi
// ---------------------------------------------------------------------------

/// Rasterize a seeded Voronoi layout: `cells` receives `height * width`
/// row-major nearest-seed indices (Euclidean metric, ties to the lowest
/// index).
///
/// # Safety
/// `cells` must be writable for `height * width` u32 values.
#[no_mangle]
pub unsafe extern "C" fn cueforge_voronoi_cells(
    height: usize,
    width: usize,
    n_seeds: usize,
    seed: u64,
    cells: *mut u32,
) -> CueStatus {
    require!(cells);
    guarded(move || {
        let mut rng = rng_from_seed(seed);
        let layout = texture::rasterize_voronoi((height, width), n_seeds, &mut rng)?;
        std::ptr::copy_nonoverlapping(layout.cell_map.as_ptr(), cells, height * width);
        Ok(CueStatus::Ok)
    })
}
