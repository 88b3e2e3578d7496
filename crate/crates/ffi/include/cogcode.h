#ifndef COGCODE_H
#define COGCODE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  HCC_STATUS_OK = 0,
  HCC_STATUS_NULL_POINTER = 1,
  HCC_STATUS_INVALID_ARGUMENT = 2,
  HCC_STATUS_BUFFER_TOO_SMALL = 3,
  HCC_STATUS_SHAPE = 4,
  HCC_STATUS_NON_FINITE = 5,
  /**
   * Malformed, truncated or unsupported file contents.
   */
  HCC_STATUS_FORMAT = 6,
  HCC_STATUS_CHECKSUM = 7,
  HCC_STATUS_IO = 8,
  HCC_STATUS_PANIC = 9,
} HccStatus;

/**
 * A coded feature matrix. Free with [`hcc_bitstream_free`].
 */
typedef struct HccBitstream HccBitstream;

/**
 * A loaded model. Free with [`hcc_model_free`].
 */
typedef struct HccModel HccModel;

/**
 * Per-dimension Δ-modulation steps. Free with [`hcc_step_table_free`].
 */
typedef struct HccStepTable HccStepTable;

typedef struct {
  size_t window_len;
  size_t context_dim;
  size_t short_frames;
  /**
   * Zero for the single-stage baseline.
   */
  size_t long_frames;
  /**
   * Samples per short frame.
   */
  size_t short_hop;
  size_t long_hop;
} HccModelInfo;

/**
 * Message of the last failed call on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *hcc_last_error(void);

/**
 * Loads an `HCCK` model or training checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
HccStatus hcc_model_load(const char *path, HccModel **out);

/**
 * # Safety
 * `model` must come from [`hcc_model_load`] and not be used afterwards.
 */
void hcc_model_free(HccModel *model);

/**
 * # Safety
 * `model` must be a live handle and `info` writable.
 */
HccStatus hcc_model_info(const HccModel *model, HccModelInfo *info);

/**
 * Runs one window of `window_len` samples through the model and writes
 * `c_s` (`short_frames x context_dim`) and, for the two-stage model, `c_l`
 * (`long_frames x context_dim`). `c_l` may be null to skip it.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
HccStatus hcc_model_contexts(const HccModel *model,
                             const float *samples,
                             size_t n_samples,
                             float *c_s,
                             size_t c_s_cap,
                             size_t *c_s_len,
                             float *c_l,
                             size_t c_l_cap,
                             size_t *c_l_len);

/**
 * Calibrates steps (median absolute frame difference per dimension) and
 * initial-value ranges on one feature matrix.
 *
 * # Safety
 * `features` must hold `n_frames * n_dims` values and `out` be writable.
 */
HccStatus hcc_step_table_calibrate(const float *features,
                                   size_t n_frames,
                                   size_t n_dims,
                                   HccStepTable **out);

/**
 * # Safety
 * `table` must come from [`hcc_step_table_calibrate`] and not be used afterwards.
 */
void hcc_step_table_free(HccStepTable *table);

/**
 * Δ-modulates a feature matrix, one bit per frame transition and dimension.
 *
 * # Safety
 * `features` must hold `n_frames * n_dims` values; `table` must be live.
 */
HccStatus hcc_dm_encode(const HccStepTable *table,
                        const float *features,
                        size_t n_frames,
                        size_t n_dims,
                        HccBitstream **out);

/**
 * Writes the decoder's reconstruction, `n_frames x n_dims` values.
 *
 * # Safety
 * `out` must hold `cap` values; `bs` must be live.
 */
HccStatus hcc_dm_decode(const HccBitstream *bs, float *out, size_t cap, size_t *len);

/**
 * # Safety
 * `n_frames` and `n_dims` must be writable or null.
 */
HccStatus hcc_bitstream_shape(const HccBitstream *bs, size_t *n_frames, size_t *n_dims);

/**
 * Serializes to the `HCCQ` byte layout.
 *
 * # Safety
 * `out` must hold `cap` bytes; `bs` must be live.
 */
HccStatus hcc_bitstream_to_bytes(const HccBitstream *bs, uint8_t *out, size_t cap, size_t *len);

/**
 * Parses `HCCQ` bytes, checking the length fields and checksum.
 *
 * # Safety
 * `bytes` must hold `len` bytes and `out` be writable.
 */
HccStatus hcc_bitstream_from_bytes(const uint8_t *bytes, size_t len, HccBitstream **out);

/**
 * # Safety
 * `bs` must come from this library and not be used afterwards.
 */
void hcc_bitstream_free(HccBitstream *bs);

/**
 * Payload bits per second for `n_dims` dimensions at one frame per
 * `frame_period_s` seconds; with `n_frames > 0` the stream header is
 * amortized over that many frames.
 *
 * # Safety
 * `out` must be writable.
 */
HccStatus hcc_bitrate(size_t n_dims, double frame_period_s, size_t n_frames, double *out);

#endif  /* COGCODE_H */
