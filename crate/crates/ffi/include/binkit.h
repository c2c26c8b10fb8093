#ifndef BINKIT_H
#define BINKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Classical thresholding method.
typedef enum BkMethod {
  BK_METHOD_OTSU = 0,
  BK_METHOD_NIBLACK = 1,
  BK_METHOD_SAUVOLA = 2,
  BK_METHOD_WOLF = 3,
} BkMethod;

// Result code of every fallible call.
typedef enum BkStatus {
  BK_STATUS_OK = 0,
  BK_STATUS_NULL_POINTER = 1,
  BK_STATUS_INVALID_ARGUMENT = 2,
  BK_STATUS_IO = 3,
  BK_STATUS_FORMAT = 4,
  BK_STATUS_UNSUPPORTED = 5,
  BK_STATUS_DIMENSION_MISMATCH = 6,
  BK_STATUS_CHECKPOINT = 7,
  BK_STATUS_PANIC = 8,
  BK_STATUS_OTHER = 9,
} BkStatus;

// Grayscale page.
typedef struct BkImage BkImage;

// Binary mask, ink = foreground.
typedef struct BkMask BkMask;

// Trained selectional auto-encoder.
typedef struct BkModel BkModel;

// Parameters of the local methods. `r` is only read by Sauvola; Otsu
// ignores all three.
typedef struct BkClassicalParams {
  size_t window;
  double k;
  double r;
} BkClassicalParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null if none. The
// pointer stays valid until the next failing call on the same thread.
const char *bk_last_error(void);

// Library version as a static NUL-terminated string.
const char *bk_version(void);

// Builds an image from `width * height` row-major 8-bit levels.
//
// # Safety
// `levels` must point to `width * height` readable bytes and `out` must be
// writable.
enum BkStatus bk_image_from_gray8(size_t width,
                                  size_t height,
                                  const uint8_t *levels,
                                  struct BkImage **out_image);

// Decodes a PGM or PNG file held in memory.
//
// # Safety
// `data` must point to `len` readable bytes and `out_image` must be writable.
enum BkStatus bk_image_decode(const uint8_t *data, size_t len, struct BkImage **out_image);

// Loads a PGM or PNG file.
//
// # Safety
// `file` must be a NUL-terminated UTF-8 path and `out_image` must be writable.
enum BkStatus bk_image_load(const char *file, struct BkImage **out_image);

// # Safety
// `image` must be null or a pointer returned by this library.
size_t bk_image_width(const struct BkImage *image);

// # Safety
// `image` must be null or a pointer returned by this library.
size_t bk_image_height(const struct BkImage *image);

// # Safety
// `image` must be null or a pointer returned by this library and not yet freed.
void bk_image_free(struct BkImage *image);

// Default parameters for `method`.
struct BkClassicalParams bk_classical_defaults(enum BkMethod method);

// Binarizes with a classical method. A null `params` selects the defaults.
//
// # Safety
// `image` must be a live image, `params` null or readable, `out_mask` writable.
enum BkStatus bk_binarize_classical(const struct BkImage *image,
                                    enum BkMethod method,
                                    const struct BkClassicalParams *params,
                                    struct BkMask **out_mask);

// Parses a model checkpoint held in memory.
//
// # Safety
// `data` must point to `len` readable bytes and `out_model` must be writable.
enum BkStatus bk_model_from_bytes(const uint8_t *data, size_t len, struct BkModel **out_model);

// Reads a model checkpoint file.
//
// # Safety
// `file` must be a NUL-terminated UTF-8 path and `out_model` must be writable.
enum BkStatus bk_model_load(const char *file, struct BkModel **out_model);

// Side of the square window the model was trained on, 0 for null.
//
// # Safety
// `model` must be null or a pointer returned by this library.
size_t bk_model_window_side(const struct BkModel *model);

// Binarizes a page with a model, labelling ink where the activation is at
// least `tau`.
//
// # Safety
// `model` and `image` must be live and `out_mask` writable.
enum BkStatus bk_model_binarize(const struct BkModel *model,
                                const struct BkImage *image,
                                float tau,
                                struct BkMask **out_mask);

// # Safety
// `model` must be null or a pointer returned by this library and not yet freed.
void bk_model_free(struct BkModel *model);

// Builds a mask from row-major 8-bit levels; levels below 128 are ink.
//
// # Safety
// `levels` must point to `width * height` readable bytes and `out_mask`
// must be writable.
enum BkStatus bk_mask_from_levels(size_t width,
                                  size_t height,
                                  const uint8_t *levels,
                                  struct BkMask **out_mask);

// Loads a ground-truth mask; levels below 128 are ink.
//
// # Safety
// `file` must be a NUL-terminated UTF-8 path and `out_mask` must be writable.
enum BkStatus bk_mask_load(const char *file, struct BkMask **out_mask);

// # Safety
// `mask` must be null or a pointer returned by this library.
size_t bk_mask_width(const struct BkMask *mask);

// # Safety
// `mask` must be null or a pointer returned by this library.
size_t bk_mask_height(const struct BkMask *mask);

// Number of ink pixels.
//
// # Safety
// `mask` must be null or a pointer returned by this library.
size_t bk_mask_count_foreground(const struct BkMask *mask);

// Copies the mask as row-major 8-bit levels, 0 for ink and 255 for
// background. `len` must equal width * height.
//
// # Safety
// `mask` must be live and `levels` must point to `len` writable bytes.
enum BkStatus bk_mask_copy_levels(const struct BkMask *mask, uint8_t *levels, size_t len);

// Writes the mask as a binary PGM file, ink black.
//
// # Safety
// `mask` must be live and `file` a NUL-terminated UTF-8 path.
enum BkStatus bk_mask_save(const struct BkMask *mask, const char *file);

// # Safety
// `mask` must be null or a pointer returned by this library and not yet freed.
void bk_mask_free(struct BkMask *mask);

// F-measure of `predicted` against `ground_truth`, both with ink as the
// positive class.
//
// # Safety
// Both masks must be live and `out_fm` writable.
enum BkStatus bk_f_measure(const struct BkMask *predicted,
                           const struct BkMask *ground_truth,
                           double *out_fm);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BINKIT_H */
