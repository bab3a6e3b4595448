#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include "copitch.h"

int main(void) {
    const size_t n = 16000;
    double *x = malloc(n * sizeof *x);
    for (size_t i = 0; i < n; i++) {
        double t = (double)i / 16000.0, v = 0.0;
        for (int l = 1; l <= 5; l++) {
            v += (cos(2.0 * M_PI * 200.0 * l * t) + cos(2.0 * M_PI * 280.0 * l * t)) / l;
        }
        x[i] = v;
    }
    CopitchEstimator *est = NULL;
    CopitchResult *res = NULL;
    if (copitch_estimator_new(16000, &est) != COPITCH_STATUS_OK) return 1;
    if (copitch_estimate(est, x, n, &res) != COPITCH_STATUS_OK) return 2;
    size_t frames = copitch_result_frames(res);
    double *hi = malloc(frames * sizeof *hi), *lo = malloc(frames * sizeof *lo);
    if (copitch_result_copy(res, NULL, hi, lo, frames) != COPITCH_STATUS_OK) return 3;
    printf("%zu %.1f %.1f\n", frames, hi[frames / 2], lo[frames / 2]);
    if (copitch_estimate(est, x, 0, &res) != COPITCH_STATUS_INVALID_ARGUMENT) return 4;
    copitch_result_free(res);
    copitch_estimator_free(est);
    free(x);
    free(hi);
    free(lo);
    return 0;
}
