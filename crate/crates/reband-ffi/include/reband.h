#ifndef REBAND_H
#define REBAND_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every FFI entry point.
 */
typedef enum RebandStatus {
  Ok = 0,
  /**
   * A required pointer argument was null.
   */
  NullArgument = 1,
  /**
   * Invalid configuration or argument values.
   */
  InvalidConfig = 2,
  /**
   * Unreadable or malformed data (file, checkpoint, waveform).
   */
  Data = 3,
  /**
   * Numeric failure (non-finite values).
   */
  Numeric = 4,
  /**
   * Internal panic caught at the boundary.
   */
  Panic = 5,
} RebandStatus;

/**
 * Opaque handle to a loaded model checkpoint.
 */
typedef struct RebandModel RebandModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Load a checkpoint file into a model handle.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum RebandStatus reband_model_load(const char *path, struct RebandModel **out);

/**
 * Destroy a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must be a pointer previously returned by [`reband_model_load`].
 */
void reband_model_free(struct RebandModel *model);

/**
 * Number of trainable real-valued parameters in the loaded model.
 *
 * # Safety
 * `model` and `out` must be valid pointers.
 */
enum RebandStatus reband_model_param_count(struct RebandModel *model, uintptr_t *out);

/**
 * Reconstruct a waveform in place of the caller's output buffer, which must
 * hold `len` samples; the output length equals the input length.
 *
 * # Safety
 * `input` and `output` must point to `len` readable/writable f32 values.
 */
enum RebandStatus reband_reconstruct(struct RebandModel *model,
                                     const float *input,
                                     uintptr_t len,
                                     float *output);

/**
 * Log-spectral distance between two 8 kHz waveforms of equal length.
 *
 * # Safety
 * `reference` and `estimate` must point to `len` f32 values; `out` must be
 * a valid pointer.
 */
enum RebandStatus reband_lsd(const float *reference,
                             const float *estimate,
                             uintptr_t len,
                             double *out);

/**
 * Scale-invariant SDR in dB between two 8 kHz waveforms of equal length.
 *
 * # Safety
 * As for [`reband_lsd`].
 */
enum RebandStatus reband_si_sdr(const float *reference,
                                const float *estimate,
                                uintptr_t len,
                                double *out);

/**
 * STOI between two 8 kHz waveforms of equal length (>= 384 ms of active
 * signal).
 *
 * # Safety
 * As for [`reband_lsd`].
 */
enum RebandStatus reband_stoi(const float *reference,
                              const float *estimate,
                              uintptr_t len,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REBAND_H */
