#ifndef CUEFORGE_H
#define CUEFORGE_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from cueforge-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum CueStatus {
  CUE_STATUS_OK = 0,
  // A required pointer argument was null.
  CUE_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  CUE_STATUS_INVALID_UTF8 = 2,
  // The filesystem failed (missing file, unreadable image).
  CUE_STATUS_IO = 3,
  // Inputs or parameters violate a contract.
  CUE_STATUS_VALIDATION = 4,
  // An internal invariant failed.
  CUE_STATUS_INTERNAL = 5,
} CueStatus;

// Color space tags for [`cueforge_image_new`].
typedef enum CueColorSpace {
  CUE_COLOR_SPACE_RGB = 0,
  CUE_COLOR_SPACE_HSV = 1,
  CUE_COLOR_SPACE_GRAY = 2,
  CUE_COLOR_SPACE_EDGE = 3,
} CueColorSpace;

// Gray projection modes.
typedef enum CueGrayMode {
  CUE_GRAY_MODE_MEAN = 0,
  CUE_GRAY_MODE_MAX = 1,
} CueGrayMode;

// Diffusivity selector for the diffusion solver.
typedef enum CueDiffusivity {
  CUE_DIFFUSIVITY_PERONA_MALIK = 0,
  CUE_DIFFUSIVITY_WEICKERT_EXP = 1,
} CueDiffusivity;

// Opaque confusion matrix handle.
typedef struct CueConfusion CueConfusion;

// Opaque raster image handle.
typedef struct CueImage CueImage;

// Opaque label mask handle.
typedef struct CueMask CueMask;

// Plain-struct mirror of the solver parameters.
typedef struct CueDiffusionParams {
  double lambda;
  size_t kernel_size;
  double sigma;
  double rho;
  double tau;
  double h;
  size_t n_steps;
  double alpha;
  double beta;
  enum CueDiffusivity diffusivity;
  bool force_tau;
} CueDiffusionParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failure on this thread. The pointer stays
// valid until the next failing call on the same thread; never free it.
const char *cueforge_last_error_message(void);

// Load an 8-bit PNG (1 or 3 channels) into a new image handle.
//
// # Safety
// `path` must reference a NUL-terminated string and `out` a writable
// handle slot; both must stay valid for the duration of the call.
enum CueStatus cueforge_image_load(const char *path, struct CueImage **out);

// Save an image handle as PNG (RGB or GRAY/EDGE).
//
// # Safety
// `img` must be a live handle from this library; `path` a NUL-terminated
// string.
enum CueStatus cueforge_image_save(const struct CueImage *img, const char *path);

// Build an image from planar data: `data[c * h * w + y * w + x]`,
// intensities in [0, 1], channel count implied by the color space.
//
// # Safety
// `data` must point to `channels * height * width` readable doubles and
// `out` to a writable handle slot.
enum CueStatus cueforge_image_new(enum CueColorSpace space,
                                  size_t height,
                                  size_t width,
                                  const double *data,
                                  struct CueImage **out);

// # Safety
// `img` must be a live handle.
size_t cueforge_image_height(const struct CueImage *img);

// # Safety
// `img` must be a live handle.
size_t cueforge_image_width(const struct CueImage *img);

// # Safety
// `img` must be a live handle.
size_t cueforge_image_channels(const struct CueImage *img);

// Copy the planar intensities into a caller buffer of
// `channels * height * width` doubles.
//
// # Safety
// `img` must be a live handle and `buffer` writable for that many values.
enum CueStatus cueforge_image_data(const struct CueImage *img, double *buffer);

// # Safety
// `img` must be a handle from this library, not yet freed; null is a
// no-op.
void cueforge_image_free(struct CueImage *img);

// Convert RGB to HSV.
//
// # Safety
// `img` must be a live handle; `out` a writable slot.
enum CueStatus cueforge_rgb_to_hsv(const struct CueImage *img, struct CueImage **out);

// Convert HSV back to RGB.
//
// # Safety
// `img` must be a live handle; `out` a writable slot.
enum CueStatus cueforge_hsv_to_rgb(const struct CueImage *img, struct CueImage **out);

// Collapse RGB to GRAY by averaging or maximizing channels.
//
// # Safety
// `img` must be a live handle; `out` a writable slot.
enum CueStatus cueforge_to_gray(const struct CueImage *img,
                                enum CueGrayMode mode,
                                struct CueImage **out);

// Project an RGB image onto the kept color carriers (keep_v, keep_hs).
//
// # Safety
// `img` must be a live handle; `out` a writable slot.
enum CueStatus cueforge_project_cues(const struct CueImage *img,
                                     bool keep_v,
                                     bool keep_hs,
                                     enum CueGrayMode mode,
                                     struct CueImage **out);

// Reference diffusion parameters (contrast 1/15, kernel 5, sigma sqrt 5,
// tau 0.2, 8192 steps, alpha 0.49, beta 0, Perona-Malik).
struct CueDiffusionParams cueforge_eed_default_params(void);

// Run edge-enhancing diffusion; the tensor is recomputed every
// `tensor_refresh` steps (1 = every step).
//
// # Safety
// `img` and `params` must be live pointers; `out` a writable slot.
enum CueStatus cueforge_run_eed(const struct CueImage *img,
                                const struct CueDiffusionParams *params,
                                size_t tensor_refresh,
                                struct CueImage **out);

// Load a single-channel PNG of class ids (255 = ignore).
//
// # Safety
// `path` must be NUL-terminated; `out` a writable slot.
enum CueStatus cueforge_mask_load(const char *path, struct CueMask **out);

// Build a mask from row-major labels.
//
// # Safety
// `labels` must point to `height * width` readable bytes; `out` must be
// writable.
enum CueStatus cueforge_mask_new(size_t height,
                                 size_t width,
                                 const uint8_t *labels,
                                 struct CueMask **out);

// # Safety
// `mask` must be a live handle.
size_t cueforge_mask_height(const struct CueMask *mask);

// # Safety
// `mask` must be a live handle.
size_t cueforge_mask_width(const struct CueMask *mask);

// Copy the labels into a caller buffer of `height * width` bytes.
//
// # Safety
// `mask` must be live and `buffer` writable for that many bytes.
enum CueStatus cueforge_mask_labels(const struct CueMask *mask, uint8_t *buffer);

// # Safety
// `mask` must be a handle from this library; null is a no-op.
void cueforge_mask_free(struct CueMask *mask);

// Fresh K x K confusion matrix.
struct CueConfusion *cueforge_confusion_new(size_t k);

// Accumulate one (prediction, ground truth) pair.
//
// # Safety
// All three handles must be live.
enum CueStatus cueforge_confusion_accumulate(struct CueConfusion *cm,
                                             const struct CueMask *pred,
                                             const struct CueMask *gt);

// Mean IoU over defined classes.
//
// # Safety
// `cm` must be live; `out` writable.
enum CueStatus cueforge_confusion_miou(const struct CueConfusion *cm, double *out);

// Per-class IoU into a caller buffer of K doubles; undefined classes are
// written as NaN.
//
// # Safety
// `cm` must be live; `buffer` writable for K doubles.
enum CueStatus cueforge_confusion_class_iou(const struct CueConfusion *cm, double *buffer);

// # Safety
// `cm` must be a handle from this library; null is a no-op.
void cueforge_confusion_free(struct CueConfusion *cm);

// Boundary/interior/overall pixel accuracy with the Manhattan boundary
// radius. Empty regions are written as NaN.
//
// # Safety
// `pred` and `gt` must be live; the three out pointers writable.
enum CueStatus cueforge_split_accuracy(const struct CueMask *pred,
                                       const struct CueMask *gt,
                                       size_t boundary_radius,
                                       double *out_interior,
                                       double *out_boundary,
                                       double *out_overall);

// Rasterize a seeded Voronoi layout: `cells` receives `height * width`
// row-major nearest-seed indices (Euclidean metric, ties to the lowest
// index).
//
// # Safety
// `cells` must be writable for `height * width` u32 values.
enum CueStatus cueforge_voronoi_cells(size_t height,
                                      size_t width,
                                      size_t n_seeds,
                                      uint64_t seed,
                                      uint32_t *cells);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CUEFORGE_H */
