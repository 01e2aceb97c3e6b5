#ifndef HISTOPATCH_H
#define HISTOPATCH_H

/* This file is generated by cbindgen from histopatch-ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible call.
 */
typedef enum {
  HP_STATUS_OK = 0,
  HP_STATUS_NULL_ARGUMENT = 1,
  HP_STATUS_INVALID_ARGUMENT = 2,
  HP_STATUS_MALFORMED_FILE = 3,
  HP_STATUS_UNSUPPORTED_FORMAT = 4,
  HP_STATUS_VALIDATION_ERROR = 5,
  HP_STATUS_INTERNAL_ERROR = 6,
} HpStatus;

/**
 * Opaque augmentation configuration.
 */
typedef struct HpAugmentConfig HpAugmentConfig;

/**
 * Opaque byte buffer returned by encoders.
 */
typedef struct HpBuffer HpBuffer;

/**
 * Opaque 8-bit RGB image.
 */
typedef struct HpImage HpImage;

/**
 * Opaque ordered list of images (patches or dihedral variants).
 */
typedef struct HpImageList HpImageList;

/**
 * Opaque trained network handle.
 */
typedef struct HpNet HpNet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message (UTF-8, NUL-terminated) into `buf`,
 * truncating to `cap` bytes. Returns the full message length.
 *
 * # Safety
 * `buf` must point to at least `cap` writable bytes (or be null).
 */
size_t hp_last_error_message(char *buf, size_t cap);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hp_version(void);

/**
 * Decode a PPM (P6) or PNG image from memory.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes; `out` must be a valid
 * pointer slot for the new handle.
 */
HpStatus hp_image_decode(const uint8_t *bytes, size_t len, HpImage **out);

/**
 * Build an image from `width * height * 3` interleaved RGB bytes.
 *
 * # Safety
 * `rgb` must point to exactly `width * height * 3` readable bytes.
 */
HpStatus hp_image_from_pixels(uint32_t width, uint32_t height, const uint8_t *rgb, HpImage **out);

/**
 * # Safety
 * `img` must be a live handle from this library.
 */
uint32_t hp_image_width(const HpImage *img);

/**
 * # Safety
 * `img` must be a live handle from this library.
 */
uint32_t hp_image_height(const HpImage *img);

/**
 * Borrow the pixel bytes (w*h*3, row-major RGB). Valid until the image
 * handle is freed.
 *
 * # Safety
 * `img` must be a live handle from this library.
 */
const uint8_t *hp_image_pixels(const HpImage *img);

/**
 * Encode to `format` (0 = PPM P6, 1 = PNG).
 *
 * # Safety
 * `img` must be a live handle; `out` a valid slot.
 */
HpStatus hp_image_encode(const HpImage *img, uint32_t format, HpBuffer **out);

/**
 * k counter-clockwise quarter turns (k in 0..=3).
 *
 * # Safety
 * `img` must be a live handle; `out` a valid slot.
 */
HpStatus hp_image_rotate90(const HpImage *img, uint8_t k, HpImage **out);

/**
 * # Safety
 * `img` must be a live handle; `out` a valid slot.
 */
HpStatus hp_image_flip_vertical(const HpImage *img, HpImage **out);

/**
 * Catmull-Rom bicubic resize.
 *
 * # Safety
 * `img` must be a live handle; `out` a valid slot.
 */
HpStatus hp_image_resize_bicubic(const HpImage *img,
                                 uint32_t width,
                                 uint32_t height,
                                 HpImage **out);

/**
 * The 8 dihedral variants (rotations then flipped rotations) in fixed
 * order; element 0 is the input.
 *
 * # Safety
 * `img` must be a live handle; `out` a valid slot.
 */
HpStatus hp_image_expand_eight(const HpImage *img, HpImageList **out);

/**
 * Tile into cols x rows contiguous patches (row-major order, remainder
 * cropped from the right/bottom).
 *
 * # Safety
 * `img` must be a live handle; `out` a valid slot.
 */
HpStatus hp_image_extract_patches(const HpImage *img,
                                  uint32_t cols,
                                  uint32_t rows,
                                  HpImageList **out);

/**
 * # Safety
 * `img` must be a live handle from this library (or null).
 */
void hp_image_free(HpImage *img);

/**
 * # Safety
 * `list` must be a live handle from this library.
 */
size_t hp_image_list_len(const HpImageList *list);

/**
 * Borrow element `index` as a new owned handle (must be freed).
 *
 * # Safety
 * `list` must be a live handle; `out` a valid slot.
 */
HpStatus hp_image_list_get(const HpImageList *list, size_t index, HpImage **out);

/**
 * # Safety
 * `list` must be a live handle from this library (or null).
 */
void hp_image_list_free(HpImageList *list);

/**
 * # Safety
 * `buf` must be a live handle from this library.
 */
const uint8_t *hp_buffer_data(const HpBuffer *buf);

/**
 * # Safety
 * `buf` must be a live handle from this library.
 */
size_t hp_buffer_len(const HpBuffer *buf);

/**
 * # Safety
 * `buf` must be a live handle from this library (or null).
 */
void hp_buffer_free(HpBuffer *buf);

/**
 * Default augmentation config (axis scale 0.7-1.3, gain/offset 0.2,
 * blur sigma 0.3-0.6, 1% noise, 80-99% resample; all stages on).
 *
 * # Safety
 * `out` must be a valid slot.
 */
HpStatus hp_augment_config_default(HpAugmentConfig **out);

/**
 * Parse a flat key=value config (same format the CLI reads).
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` a valid slot.
 */
HpStatus hp_augment_config_parse(const char *text, HpAugmentConfig **out);

/**
 * # Safety
 * `cfg` must be a live handle from this library (or null).
 */
void hp_augment_config_free(HpAugmentConfig *cfg);

/**
 * Run the enabled stochastic stages on one image. `image_id`, `grid_index`
 * and `epoch` identify the item: identical identities always reproduce
 * identical bytes under the same master seed.
 *
 * # Safety
 * `img` and `cfg` must be live handles; `image_id` NUL-terminated; `out`
 * a valid slot.
 */
HpStatus hp_augment_image(const HpImage *img,
                          const HpAugmentConfig *cfg,
                          const char *image_id,
                          uint32_t grid_index,
                          uint64_t master_seed,
                          uint32_t epoch,
                          HpImage **out);

/**
 * Majority vote over class indices (0 Normal, 1 Benign, 2 InSitu,
 * 3 Invasive); ties break toward the lowest index.
 *
 * # Safety
 * `labels` must point to `len` readable bytes; `out_label` must be a
 * valid slot.
 */
HpStatus hp_majority_vote(const uint8_t *labels, size_t len, uint8_t *out_label);

/**
 * Load a trained checkpoint from a file path.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` a valid slot.
 */
HpStatus hp_checkpoint_load(const char *path, HpNet **out);

/**
 * Decode a checkpoint already held in memory.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes; `out` a valid slot.
 */
HpStatus hp_checkpoint_decode(const uint8_t *bytes, size_t len, HpNet **out);

/**
 * # Safety
 * `net` must be a live handle from this library.
 */
uint32_t hp_net_input_side(const HpNet *net);

/**
 * Classify one image: it is bicubic-resized to the network input side,
 * normalized and run through the forward pass. Writes 4 probabilities
 * and the argmax label (lowest index wins ties).
 *
 * # Safety
 * `net` and `img` must be live handles; `out_probs` must point to 4
 * writable doubles; `out_label` to a writable byte.
 */
HpStatus hp_net_predict_image(const HpNet *net,
                              const HpImage *img,
                              double *out_probs,
                              uint8_t *out_label);

/**
 * # Safety
 * `net` must be a live handle from this library (or null).
 */
void hp_net_free(HpNet *net);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HISTOPATCH_H */
