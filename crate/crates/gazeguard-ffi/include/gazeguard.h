#ifndef GAZEGUARD_H
#define GAZEGUARD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum GgStatus {
  GgStatus_Ok = 0,
  /**
   * invalid argument or configuration
   */
  GgStatus_InvalidArgument = 1,
  /**
   * unreadable, corrupt, or mismatched input data
   */
  GgStatus_DataError = 2,
  /**
   * numerical failure
   */
  GgStatus_NumericError = 3,
  /**
   * null pointer passed where a value is required
   */
  GgStatus_NullPointer = 4,
  /**
   * unexpected internal failure
   */
  GgStatus_Internal = 5,
} GgStatus;

/**
 * Opaque debounce state machine: the stable state flips only after k
 * consecutive identical labels.
 */
typedef struct GgDebounce GgDebounce;

/**
 * Opaque abnormal-state classifier.
 */
typedef struct GgDetector GgDetector;

/**
 * Opaque gaze regression model.
 */
typedef struct GgGazeModel GgGazeModel;

/**
 * Opaque constant-velocity Kalman channel.
 */
typedef struct GgKalman GgKalman;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. Valid until
 * the next failing call on the same thread.
 */
const char *gg_last_error_message(void);

/**
 * Static library version string.
 */
const char *gg_version(void);

/**
 * Creates a channel initialized at `first_obs` with noise parameters q, r.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum GgStatus gg_kalman_new(double first_obs, double q, double r, struct GgKalman **out);

/**
 * Predict/update step; writes the filtered value to `out`.
 *
 * # Safety
 * `handle` must come from `gg_kalman_new`; `out` must be valid.
 */
enum GgStatus gg_kalman_step(struct GgKalman *handle, double obs, double *out);

/**
 * # Safety
 * `handle` must come from `gg_kalman_new` and not be freed twice.
 */
void gg_kalman_free(struct GgKalman *handle);

/**
 * Offline smoothing: writes `len` smoothed values to `out`.
 *
 * # Safety
 * `obs` and `out` must point to `len` readable/writable doubles.
 */
enum GgStatus gg_rts_smooth(const double *obs, uintptr_t len, double q, double r, double *out);

/**
 * Loads a gaze checkpoint (expects the `.meta.json` sidecar next to it).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid.
 */
enum GgStatus gg_gaze_model_load(const char *path, struct GgGazeModel **out);

/**
 * Predicts gaze (radians) for one 60x36 row-major image with pixel values
 * in [0, 1] plus the head pose.
 *
 * # Safety
 * `pixels` must point to 2160 doubles; `yaw`/`pitch` must be valid.
 */
enum GgStatus gg_gaze_model_predict(struct GgGazeModel *handle,
                                    const double *pixels,
                                    double head_yaw,
                                    double head_pitch,
                                    double *yaw,
                                    double *pitch);

/**
 * # Safety
 * `handle` must come from `gg_gaze_model_load` and not be freed twice.
 */
void gg_gaze_model_free(struct GgGazeModel *handle);

/**
 * Loads a detector checkpoint (expects the `.meta.json` sidecar next to it).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid.
 */
enum GgStatus gg_detector_load(const char *path, struct GgDetector **out);

/**
 * Classifies one 7-value record `[left_yaw, left_pitch, right_yaw,
 * right_pitch, head_yaw, head_pitch, dist]` (radians / meters). Writes the
 * label (0 abnormal, 1 normal) and the softmax confidence of that label.
 *
 * # Safety
 * `features` must point to 7 doubles; `label`/`confidence` must be valid.
 */
enum GgStatus gg_detector_infer(struct GgDetector *handle,
                                const double *features,
                                uint8_t *label,
                                double *confidence);

/**
 * # Safety
 * `handle` must come from `gg_detector_load` and not be freed twice.
 */
void gg_detector_free(struct GgDetector *handle);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum GgStatus gg_debounce_new(uint32_t k, struct GgDebounce **out);

/**
 * Feeds one per-record label; writes the debounced stable state.
 *
 * # Safety
 * `handle` must come from `gg_debounce_new`; `stable` must be valid.
 */
enum GgStatus gg_debounce_push(struct GgDebounce *handle, uint8_t label, uint8_t *stable);

/**
 * # Safety
 * `handle` must come from `gg_debounce_new` and not be freed twice.
 */
void gg_debounce_free(struct GgDebounce *handle);

/**
 * Angle between two gaze rays, degrees.
 */
double gg_angular_error_deg(double pred_yaw,
                            double pred_pitch,
                            double truth_yaw,
                            double truth_pitch);

/**
 * Renders a synthetic 60x36 eye image into `pixels` (2160 doubles,
 * row-major, values in [0, 1]); deterministic in (gaze, head, seed).
 *
 * # Safety
 * `pixels` must point to 2160 writable doubles.
 */
enum GgStatus gg_render_eye_image(double gaze_yaw,
                                  double gaze_pitch,
                                  double head_yaw,
                                  double head_pitch,
                                  uint64_t seed,
                                  double *pixels);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GAZEGUARD_H */
