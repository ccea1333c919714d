#ifndef PFAN_H
#define PFAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a call.
typedef enum PfanStatus {
  PFAN_STATUS_OK = 0,
  // Bad argument, including a null pointer.
  PFAN_STATUS_USAGE = 1,
  // Malformed data.
  PFAN_STATUS_DATA = 2,
  // Missing or failing external tooling.
  PFAN_STATUS_ENVIRONMENT = 3,
  PFAN_STATUS_IO = 4,
  // A panic inside the library.
  PFAN_STATUS_INTERNAL = 5,
} PfanStatus;

// Serialized layered container.
typedef struct PfanBitstream PfanBitstream;

// Feature tensor, `height x width x channels`, channel-major `f32`.
typedef struct PfanTensor PfanTensor;

// One plate for [`pfan_cra`]. `text` is a NUL-terminated UTF-8 string.
typedef struct PfanPlate {
  uint32_t x;
  uint32_t y;
  uint32_t w;
  uint32_t h;
  const char *text;
  // Ignored for predictions.
  bool readable;
} PfanPlate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next call into the library on this thread.
const char *pfan_last_error(void);

// Builds a tensor from `height * width * channels` channel-major values.
//
// # Safety
// `data` must point to that many floats; `out_tensor` must be writable.
enum PfanStatus pfan_tensor_new(size_t height,
                                size_t width,
                                size_t channels,
                                const float *data,
                                struct PfanTensor **out_tensor);

// Parses a tensor in the native array format.
//
// # Safety
// `bytes` must point to `len` readable bytes; `out_tensor` must be writable.
enum PfanStatus pfan_tensor_from_bytes(const uint8_t *bytes,
                                       size_t len,
                                       struct PfanTensor **out_tensor);

// Writes the tensor shape.
//
// # Safety
// `tensor` must be a live handle; the out pointers must be writable.
enum PfanStatus pfan_tensor_shape(const struct PfanTensor *tensor,
                                  size_t *height,
                                  size_t *width,
                                  size_t *channels);

// Borrowed pointer to the channel-major values, or null for a null handle.
// Valid while the handle lives.
//
// # Safety
// `tensor` must be null or a live handle.
const float *pfan_tensor_data(const struct PfanTensor *tensor);

// # Safety
// `tensor` must be null or a handle not yet freed.
void pfan_tensor_free(struct PfanTensor *tensor);

// Edit distance between two UTF-8 strings, counted in characters.
//
// # Safety
// `a` and `b` must be NUL-terminated; `distance` must be writable.
enum PfanStatus pfan_levenshtein(const char *a, const char *b, size_t *distance);

// Character recognition accuracy of `predicted` against `ground`, both on
// one image. The value is a percentage and may be negative.
//
// # Safety
// The arrays must hold the given number of plates with valid strings;
// `cra` must be writable.
enum PfanStatus pfan_cra(const struct PfanPlate *ground,
                         size_t ground_len,
                         const struct PfanPlate *predicted,
                         size_t predicted_len,
                         double *cra);

// Per-channel objective: reconstruction loss minus `beta` times the
// information about the public tasks.
double pfan_lagrangian(double delta_mse, double mi_seg, double mi_disp, double beta);

// Splits `channels` channels by their Lagrangian values: the `base_size`
// lowest go to the base set. `base` receives `base_size` indices and
// `enhancement` the rest, each in ascending order.
//
// # Safety
// `lagrangians` must hold `channels` values; `base` and `enhancement` must
// have room for `base_size` and `channels - base_size` entries.
enum PfanStatus pfan_partition(const double *lagrangians,
                               size_t channels,
                               size_t base_size,
                               size_t *base,
                               size_t *enhancement);

// Encodes `tensor` with the internal codec: channels in `base` at
// `base_qp`, channels in `enhancement` at `enhancement_qp`. The two lists
// must cover every channel exactly once.
//
// # Safety
// `tensor` must be a live handle, the index arrays must hold the given
// counts, and `out_stream` must be writable.
enum PfanStatus pfan_encode(const struct PfanTensor *tensor,
                            const size_t *base,
                            size_t base_len,
                            const size_t *enhancement,
                            size_t enhancement_len,
                            uint8_t base_qp,
                            uint8_t enhancement_qp,
                            struct PfanBitstream **out_stream);

// Wraps serialized container bytes after checking that they parse.
//
// # Safety
// `bytes` must point to `len` readable bytes; `out_stream` must be writable.
enum PfanStatus pfan_bitstream_from_bytes(const uint8_t *bytes,
                                          size_t len,
                                          struct PfanBitstream **out_stream);

// Borrowed view of the container bytes, valid while the handle lives.
//
// # Safety
// `stream` must be a live handle; `bytes` and `len` must be writable.
enum PfanStatus pfan_bitstream_bytes(const struct PfanBitstream *stream,
                                     const uint8_t **bytes,
                                     size_t *len);

// Decodes a container produced by the internal codec.
//
// # Safety
// `stream` must be a live handle; `out_tensor` must be writable.
enum PfanStatus pfan_decode(const struct PfanBitstream *stream, struct PfanTensor **out_tensor);

// # Safety
// `stream` must be null or a handle not yet freed.
void pfan_bitstream_free(struct PfanBitstream *stream);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PFAN_H */
