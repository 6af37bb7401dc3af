#ifndef SPARSESEG_H
#define SPARSESEG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SpsStatus {
  SPS_STATUS_OK = 0,
  SPS_STATUS_NULL_POINTER = 1,
  // Malformed input data.
  SPS_STATUS_INVALID_INPUT = 2,
  // A contract of the engine was violated.
  SPS_STATUS_CONTRACT = 3,
  SPS_STATUS_DIMENSION = 4,
  SPS_STATUS_OUT_OF_BOUNDS = 5,
  SPS_STATUS_BUFFER_TOO_SMALL = 6,
  SPS_STATUS_IO = 7,
  SPS_STATUS_PANIC = 8,
} SpsStatus;

// Opaque run-length encoded binary mask.
typedef struct SpsMaskHandle SpsMaskHandle;

// Opaque SPS tensor.
typedef struct SpsTensorHandle SpsTensorHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *sps_last_error(void);

// Library version as a static NUL-terminated string.
const char *sps_version(void);

// Builds a tensor from a channel-major `features x height x width` array,
// keeping the `n_active` cells given as `(y, x)` pairs active.
enum SpsStatus sps_tensor_from_dense(size_t features,
                                     size_t height,
                                     size_t width,
                                     const float *data,
                                     const uint32_t *active_yx,
                                     size_t n_active,
                                     struct SpsTensorHandle **out);

// Parses the binary tensor dump.
enum SpsStatus sps_tensor_read_binary(const uint8_t *bytes,
                                      size_t len,
                                      struct SpsTensorHandle **out);

// Writes the binary tensor dump into `buf`.
enum SpsStatus sps_tensor_write_binary(const struct SpsTensorHandle *t,
                                       uint8_t *buf,
                                       size_t cap,
                                       size_t *len_out);

// Feature size, grid height and width, active and passive row counts.
enum SpsStatus sps_tensor_shape(const struct SpsTensorHandle *t, size_t *dims_out);

// Scatters the tensor back to a channel-major dense array.
enum SpsStatus sps_tensor_to_dense(const struct SpsTensorHandle *t,
                                   float *buf,
                                   size_t cap,
                                   size_t *len_out);

// The row-major index map.
enum SpsStatus sps_tensor_index_map(const struct SpsTensorHandle *t,
                                    uint32_t *buf,
                                    size_t cap,
                                    size_t *len_out);

void sps_tensor_free(struct SpsTensorHandle *t);

// Encodes a row-major bitmap (nonzero bytes are foreground).
enum SpsStatus sps_mask_from_bitmap(size_t width,
                                    size_t height,
                                    const uint8_t *pixels,
                                    struct SpsMaskHandle **out);

// Wraps column-major run lengths starting with a background run.
enum SpsStatus sps_mask_from_counts(size_t width,
                                    size_t height,
                                    const uint32_t *counts,
                                    size_t n_counts,
                                    struct SpsMaskHandle **out);

// The normalized run lengths.
enum SpsStatus sps_mask_counts(const struct SpsMaskHandle *m,
                               uint32_t *buf,
                               size_t cap,
                               size_t *len_out);

enum SpsStatus sps_mask_area(const struct SpsMaskHandle *m, uint64_t *out);

enum SpsStatus sps_mask_iou(const struct SpsMaskHandle *a,
                            const struct SpsMaskHandle *b,
                            double *out);

// Boundary IoU with band width `d_frac` of the image diagonal.
enum SpsStatus sps_mask_boundary_iou(const struct SpsMaskHandle *a,
                                     const struct SpsMaskHandle *b,
                                     double d_frac,
                                     double *out);

void sps_mask_free(struct SpsMaskHandle *m);

// IoU of two `[x0, y0, x1, y1]` boxes.
enum SpsStatus sps_box_iou(const double *a, const double *b, double *out);

// Greedy NMS over `n` boxes (`4 * n` coordinates). Kept indices are
// written in score order.
enum SpsStatus sps_nms(const double *boxes,
                       const double *scores,
                       size_t n,
                       double iou_thresh,
                       size_t *keep,
                       size_t cap,
                       size_t *kept_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPARSESEG_H */
