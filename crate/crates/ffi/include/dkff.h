#ifndef DKFF_H
#define DKFF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum DkffStatus {
  DKFF_STATUS_OK = 0,
  DKFF_STATUS_NULL_POINTER = 1,
  DKFF_STATUS_INVALID_ARGUMENT = 2,
  // A covariance lost positive definiteness or a system was singular.
  DKFF_STATUS_NUMERICAL = 3,
  // Malformed scenario or map document.
  DKFF_STATUS_CONFIG = 4,
  DKFF_STATUS_PANIC = 5,
} DkffStatus;

// Sensor a measurement belongs to; each has its own local filter.
typedef enum DkffSensor {
  DKFF_SENSOR_GPS = 0,
  DKFF_SENSOR_ODOMETRY = 1,
  DKFF_SENSOR_POINT3D = 2,
  DKFF_SENSOR_CAMERA_POINT = 3,
  DKFF_SENSOR_CAMERA_LINE = 4,
} DkffSensor;

// Opaque filter bank with one local filter per sensor and a linear process
// model `dx/dt = F x` with white noise intensity `Qc`.
typedef struct DkffBank DkffBank;

// One linearized measurement: innovation `z - h(x)` of length `rows`,
// Jacobian `rows x n` and noise covariance `rows x rows`.
typedef struct DkffMeasurement {
  enum DkffSensor sensor;
  uint32_t rows;
  const double *innovation;
  const double *jacobian;
  const double *noise;
} DkffMeasurement;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or an empty string.
// The pointer stays valid until the next call into the library on this thread.
const char *dkff_last_error(void);

// Creates a bank for an `n`-dimensional state.
//
// # Safety
// `mean` must hold `n` values; `covariance`, `f` and `qc` must hold `n*n`
// values each; `out` must be writable.
enum DkffStatus dkff_bank_create(uint32_t n,
                                 const double *mean,
                                 const double *covariance,
                                 const double *f,
                                 const double *qc,
                                 struct DkffBank **out);

// Releases a bank. Null is ignored.
//
// # Safety
// `bank` must come from [`dkff_bank_create`] and not be used afterwards.
void dkff_bank_free(struct DkffBank *bank);

// State dimension of a bank, 0 for null.
//
// # Safety
// `bank` must be null or a live handle.
uint32_t dkff_bank_dim(const struct DkffBank *bank);

// Propagates every filter by `dt` seconds.
//
// # Safety
// `bank` must be a live handle.
enum DkffStatus dkff_bank_predict(struct DkffBank *bank, double dt);

// Runs the local updates for `count` measurements and fuses the result.
// On failure the bank keeps its previous state.
//
// # Safety
// `bank` must be a live handle and `measurements` must point to `count`
// entries whose arrays match their `rows` and the bank dimension.
enum DkffStatus dkff_bank_update(struct DkffBank *bank,
                                 const struct DkffMeasurement *measurements,
                                 size_t count);

// Copies the fused mean (`n` values) and covariance (`n*n`, row-major).
// Either output may be null to skip it.
//
// # Safety
// `bank` must be a live handle; non-null outputs must have room for the values.
enum DkffStatus dkff_bank_state(const struct DkffBank *bank, double *mean, double *covariance);

// Wraps an angle to (-pi, pi].
double dkff_wrap_angle(double a);

// Hesse normal form of the image line `a x + b y + c = 0`, with `rho >= 0`.
//
// # Safety
// `gamma` and `rho` must be writable.
enum DkffStatus dkff_line_to_hesse(double a, double b, double c, double *gamma, double *rho);

// Simulates, filters and scores a scenario against the given map. `out`
// receives the per-tick records and summary as a JSON document.
//
// # Safety
// Both inputs must be nul-terminated strings; `out` must be writable.
enum DkffStatus dkff_run_scenario(const char *scenario_json, const char *map_json, char **out);

// Releases a string returned by the library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void dkff_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DKFF_H */
