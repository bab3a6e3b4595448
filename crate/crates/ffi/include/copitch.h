#ifndef COPITCH_H
#define COPITCH_H

#include <stddef.h>
#include <stdint.h>

typedef enum CopitchStatus {
  COPITCH_STATUS_OK = 0,
  COPITCH_STATUS_INVALID_ARGUMENT = 1,
  COPITCH_STATUS_IO = 2,
  COPITCH_STATUS_NUMERICAL = 3,
  COPITCH_STATUS_NULL_POINTER = 4,
  COPITCH_STATUS_BUFFER_TOO_SMALL = 5,
  COPITCH_STATUS_PANIC = 6,
} CopitchStatus;

/**
 * Estimator configuration bound to a sample rate.
 */
typedef struct CopitchEstimator CopitchEstimator;

/**
 * Two trajectories on the analysis frame grid.
 */
typedef struct CopitchResult CopitchResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread; empty if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *copitch_last_error(void);

/**
 * Creates an estimator with default settings.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum CopitchStatus copitch_estimator_new(uint32_t sample_rate, struct CopitchEstimator **out);

/**
 * Sets one configuration key (same keys as the CLI configuration file).
 *
 * # Safety
 * `est` must come from `copitch_estimator_new`; `key` and `value` must be
 * NUL-terminated strings.
 */
enum CopitchStatus copitch_estimator_set(struct CopitchEstimator *est,
                                         const char *key,
                                         const char *value);

/**
 * # Safety
 * `est` must be null or come from `copitch_estimator_new` and not be used afterwards.
 */
void copitch_estimator_free(struct CopitchEstimator *est);

/**
 * Runs the estimator over `len` samples.
 *
 * # Safety
 * `est` must be a live estimator, `samples` must point to `len` readable
 * doubles and `out` to writable storage for one handle.
 */
enum CopitchStatus copitch_estimate(const struct CopitchEstimator *est,
                                    const double *samples,
                                    size_t len,
                                    struct CopitchResult **out);

/**
 * Number of frames in a result; 0 for a null handle.
 *
 * # Safety
 * `res` must be null or a live result.
 */
size_t copitch_result_frames(const struct CopitchResult *res);

/**
 * Copies frame-centre times and the two tracks (Hz, 0 = unvoiced; track 1
 * is the higher) into caller buffers of `capacity` elements each. Any of
 * the output pointers may be null to skip that series.
 *
 * # Safety
 * `res` must be a live result; each non-null output must hold `capacity` doubles.
 */
enum CopitchStatus copitch_result_copy(const struct CopitchResult *res,
                                       double *times,
                                       double *track1,
                                       double *track2,
                                       size_t capacity);

/**
 * # Safety
 * `res` must be null or a live result not used afterwards.
 */
void copitch_result_free(struct CopitchResult *res);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COPITCH_H */
