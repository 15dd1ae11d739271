#ifndef CISHMAP_H
#define CISHMAP_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every function in this interface.
 */
typedef enum CishmapStatus {
  CISHMAP_STATUS_OK = 0,
  CISHMAP_STATUS_NULL_POINTER = 1,
  CISHMAP_STATUS_INVALID_ARGUMENT = 2,
  CISHMAP_STATUS_IO = 3,
  CISHMAP_STATUS_BAD_FORMAT = 4,
  CISHMAP_STATUS_NUMERIC_FAULT = 5,
  CISHMAP_STATUS_NO_TISSUE = 6,
  CISHMAP_STATUS_BUFFER_SIZE = 7,
  CISHMAP_STATUS_INTERNAL = 8,
} CishmapStatus;

/**
 * A binary tissue mask at slide resolution.
 */
typedef struct CishmapMask CishmapMask;

/**
 * A trained or freshly built autoencoder.
 */
typedef struct CishmapModel CishmapModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL after a success.
 * The pointer stays valid until the next call into this library on the same thread.
 */
const char *cishmap_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cishmap_version(void);

/**
 * Builds an untrained model for square tiles of `side` pixels (300 gives
 * the full-size layout).
 *
 * # Safety
 * `out` must be a valid pointer to writable handle storage.
 */
enum CishmapStatus cishmap_model_build(uint32_t side, uint64_t seed, struct CishmapModel **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid handle storage.
 */
enum CishmapStatus cishmap_model_load(const char *path, struct CishmapModel **out);

/**
 * # Safety
 * `model` must come from this library and `path` be NUL-terminated.
 */
enum CishmapStatus cishmap_model_save(const struct CishmapModel *model, const char *path);

/**
 * Tile side the model expects, or 0 for a NULL handle.
 *
 * # Safety
 * `model` must be NULL or come from this library.
 */
uint32_t cishmap_model_input_side(const struct CishmapModel *model);

/**
 * Length of a latent code, or 0 for a NULL handle.
 *
 * # Safety
 * `model` must be NULL or come from this library.
 */
uint32_t cishmap_model_code_size(const struct CishmapModel *model);

/**
 * Encodes one row-major `side × side` tile with values in [0, 1].
 *
 * # Safety
 * `pixels` must hold `n_pixels` floats and `code` room for `code_len` floats.
 */
enum CishmapStatus cishmap_model_encode(const struct CishmapModel *model,
                                        const float *pixels,
                                        size_t n_pixels,
                                        float *code,
                                        size_t code_len);

/**
 * Decodes a latent code into a row-major `side × side` tile.
 *
 * # Safety
 * `code` must hold `code_len` floats and `pixels` room for `n_pixels` floats.
 */
enum CishmapStatus cishmap_model_decode(const struct CishmapModel *model,
                                        const float *code,
                                        size_t code_len,
                                        float *pixels,
                                        size_t n_pixels);

/**
 * # Safety
 * `model` must be NULL or a handle from this library not already freed.
 */
void cishmap_model_free(struct CishmapModel *model);

/**
 * Fuzzy c-means on `n` points of dimension `d` (row-major).
 *
 * Writes `n × c` memberships and `c × d` centroids, both row-major. Any of
 * `iterations` and `fpc` may be NULL.
 *
 * # Safety
 * Every non-NULL pointer must reference a buffer of the stated size.
 */
enum CishmapStatus cishmap_fcm_fit(const double *points,
                                   size_t n,
                                   size_t d,
                                   uint32_t c,
                                   double m,
                                   double tol,
                                   uint32_t max_iter,
                                   uint64_t seed,
                                   double *memberships,
                                   size_t memberships_len,
                                   double *centroids,
                                   size_t centroids_len,
                                   uint32_t *iterations,
                                   double *fpc);

/**
 * Builds a tissue mask from an 8-bit gray or RGB PNG.
 *
 * # Safety
 * `path` must be NUL-terminated and `out` valid handle storage.
 */
enum CishmapStatus cishmap_mask_from_png(const char *path,
                                         double scale_um_per_px,
                                         uint32_t downscale,
                                         double blur_sigma,
                                         uint32_t erosion_radius,
                                         bool invert,
                                         struct CishmapMask **out);

/**
 * # Safety
 * `mask` must be NULL or come from this library.
 */
uint32_t cishmap_mask_width(const struct CishmapMask *mask);

/**
 * # Safety
 * `mask` must be NULL or come from this library.
 */
uint32_t cishmap_mask_height(const struct CishmapMask *mask);

/**
 * Copies the mask as row-major bytes, 1 for tissue and 0 for background.
 *
 * # Safety
 * `out` must have room for `len` bytes.
 */
enum CishmapStatus cishmap_mask_copy(const struct CishmapMask *mask, uint8_t *out, size_t len);

/**
 * # Safety
 * `mask` must be NULL or a handle from this library not already freed.
 */
void cishmap_mask_free(struct CishmapMask *mask);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CISHMAP_H */
