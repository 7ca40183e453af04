#ifndef PEAKCAST_H
#define PEAKCAST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum PkfcStatus {
  PKFC_STATUS_OK = 0,
  PKFC_STATUS_NULL_POINTER = 1,
  PKFC_STATUS_INVALID_ARGUMENT = 2,
  PKFC_STATUS_IO = 3,
  PKFC_STATUS_BAD_FORMAT = 4,
  PKFC_STATUS_DOMAIN = 5,
  PKFC_STATUS_PANIC = 6,
} PkfcStatus;

/**
 * Opaque forecaster handle.
 */
typedef struct PkfcModel PkfcModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failed call on this thread; empty after a
 * success. Valid until the next call on the same thread.
 */
const char *pkfc_last_error(void);

/**
 * Load a model file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum PkfcStatus pkfc_model_load(const char *path, struct PkfcModel **out);

/**
 * Decode a model from an in-memory file image.
 *
 * # Safety
 * `data` must point to `len` readable bytes and `out` must be writable.
 */
enum PkfcStatus pkfc_model_from_bytes(const uint8_t *data, size_t len, struct PkfcModel **out);

/**
 * Release a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from a load call and must not be used afterwards.
 */
void pkfc_model_free(struct PkfcModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum PkfcStatus pkfc_model_parameter_count(const struct PkfcModel *model, uint64_t *out);

/**
 * Encode one hourly observation into the 39-value feature layout using the
 * model's normalization and meteorological seasons.
 *
 * # Safety
 * `model` must be a live handle and `out` must hold 39 doubles.
 */
enum PkfcStatus pkfc_encode_hour(const struct PkfcModel *model,
                                 int32_t year,
                                 uint32_t month,
                                 uint32_t day,
                                 uint32_t hour,
                                 double demand_kw,
                                 double temp_f,
                                 double humidity_pct,
                                 bool is_holiday,
                                 double *out);

/**
 * Forecast 24 hourly demands (kW) from 48 × 39 encoded features, row-major
 * by hour.
 *
 * # Safety
 * `features` must hold `len` doubles and `out` must hold 24 doubles.
 */
enum PkfcStatus pkfc_model_predict_day(const struct PkfcModel *model,
                                       const double *features,
                                       size_t len,
                                       double *out);

/**
 * Label a 24-hour profile: writes 'T', 'B' or 'N' per hour.
 *
 * # Safety
 * `demand` must hold 24 doubles and `labels_out` 24 bytes.
 */
enum PkfcStatus pkfc_label_day(const double *demand, size_t k, uint8_t *labels_out);

/**
 * Annual savings: `(capacity / k) × accuracy × rate × 12`.
 *
 * # Safety
 * `out` must be writable.
 */
enum PkfcStatus pkfc_closed_form_savings(double capacity_kwh,
                                         size_t k,
                                         double accuracy,
                                         double demand_charge_per_kw,
                                         double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum PkfcStatus pkfc_payback_years(double battery_cost, double annual_savings, double *out);

/**
 * Library version, NUL-terminated and static.
 */
const char *pkfc_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PEAKCAST_H */
