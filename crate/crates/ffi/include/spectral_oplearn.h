#ifndef SPECTRAL_OPLEARN_H
#define SPECTRAL_OPLEARN_H

#include <stddef.h>

typedef enum OplearnStatus {
  OPLEARN_STATUS_OK = 0,
  OPLEARN_STATUS_NULL_POINTER = 1,
  OPLEARN_STATUS_INVALID_CONFIG = 2,
  OPLEARN_STATUS_INVALID_ARGUMENT = 3,
  OPLEARN_STATUS_NUMERICAL = 4,
  OPLEARN_STATUS_BUFFER_TOO_SMALL = 5,
  OPLEARN_STATUS_OUT_OF_RANGE = 6,
  OPLEARN_STATUS_PANIC = 7,
} OplearnStatus;

// Validated config together with its realized ground truth.
typedef struct OplearnConfig OplearnConfig;

typedef struct OplearnOperator OplearnOperator;

typedef struct OplearnSchedule OplearnSchedule;

typedef struct OplearnRates {
  double eta1;
  double eta2;
  double u;
  double input_rate;
  double output_rate;
} OplearnRates;

// One staircase level; rows are 1-based, `row_end` exclusive.
typedef struct OplearnLevel {
  double x;
  double y;
  double lambda;
  size_t row_start;
  size_t row_end;
} OplearnLevel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next call into this library from the same thread.
const char *oplearn_last_error(void);

// Parses and validates a JSON config and builds its ground truth.
//
// # Safety
// `json` must be a nul-terminated string; `out` must be valid for writes.
enum OplearnStatus oplearn_config_from_json(const char *json, struct OplearnConfig **out);

// Writes the built-in template config as JSON into `buf` (nul-terminated).
// `needed` receives the required size including the terminator.
//
// # Safety
// `buf` must be valid for `len` bytes (or null with `len == 0`); `needed` may be null.
enum OplearnStatus oplearn_template_json(char *buf, size_t len, size_t *needed);

// # Safety
// `cfg` must be null or a handle from [`oplearn_config_from_json`] not yet freed.
void oplearn_config_free(struct OplearnConfig *cfg);

// # Safety
// `cfg` must be a live config handle; `out` must be valid for writes.
enum OplearnStatus oplearn_config_rates(const struct OplearnConfig *cfg, struct OplearnRates *out);

// Builds the multilevel staircase for `n` samples.
//
// # Safety
// `cfg` must be a live config handle; `out` must be valid for writes.
enum OplearnStatus oplearn_schedule_new(const struct OplearnConfig *cfg,
                                        size_t n,
                                        struct OplearnSchedule **out);

// Number of levels, or 0 for a null handle.
//
// # Safety
// `s` must be null or a live schedule handle.
size_t oplearn_schedule_len(const struct OplearnSchedule *s);

// # Safety
// `s` must be a live schedule handle; `out` must be valid for writes.
enum OplearnStatus oplearn_schedule_level(const struct OplearnSchedule *s,
                                          size_t index,
                                          struct OplearnLevel *out);

// # Safety
// `s` must be null or a schedule handle not yet freed.
void oplearn_schedule_free(struct OplearnSchedule *s);

// Copy of the config's ground-truth operator.
//
// # Safety
// `cfg` must be a live config handle; `out` must be valid for writes.
enum OplearnStatus oplearn_ground_truth(const struct OplearnConfig *cfg,
                                        struct OplearnOperator **out);

// # Safety
// `op` must be a live operator handle; `d_out` and `d_in` must be valid for writes.
enum OplearnStatus oplearn_operator_dims(const struct OplearnOperator *op,
                                         size_t *d_out,
                                         size_t *d_in);

// Copies the `d_out × d_in` coefficients row-major into `buf`.
//
// # Safety
// `op` must be a live operator handle; `buf` must be valid for `len` doubles.
enum OplearnStatus oplearn_operator_copy(const struct OplearnOperator *op, double *buf, size_t len);

// The `(b, g)`-norm of an operator.
//
// # Safety
// `op` must be a live operator handle; `out` must be valid for writes.
enum OplearnStatus oplearn_operator_bg_norm(const struct OplearnOperator *op,
                                            double b,
                                            double g,
                                            double *out);

// # Safety
// `op` must be null or an operator handle not yet freed.
void oplearn_operator_free(struct OplearnOperator *op);

// Squared `(β', γ')` error of one trial. `estimator` is one of
// `"single"`, `"variance"`, `"bias"`, `"multilevel"`.
//
// # Safety
// `cfg` must be a live config handle, `estimator` a nul-terminated string and
// `error_sq` valid for writes.
enum OplearnStatus oplearn_run_trial(const struct OplearnConfig *cfg,
                                     size_t n,
                                     size_t trial,
                                     const char *estimator,
                                     double *error_sq);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPECTRAL_OPLEARN_H */
