#ifndef MELTPINN_H
#define MELTPINN_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum MpStatus {
  MP_OK = 0,
  MP_INVALID_ARGUMENT = 1,
  MP_IO_ERROR = 2,
  MP_FORMAT_ERROR = 3,
  MP_NUMERIC_ERROR = 4,
  MP_PANIC = 5,
} MpStatus;

/**
 * Opaque network handle.
 */
typedef struct MpNetwork MpNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a NUL-terminated static string.
 */
const char *mp_version(void);

/**
 * Copy the last error message for this thread into `buf` (truncated to
 * `len` bytes including the terminator). Returns the full message
 * length, excluding the terminator.
 */
uintptr_t mp_last_error_message(char *buf, uintptr_t len);

/**
 * Glorot-initialized network from a layer-size list.
 *
 * # Safety
 * `sizes` must point to `n_sizes` readable entries; `out` must be a
 * valid write target.
 */
enum MpStatus mp_network_init(const uint32_t *sizes,
                              uintptr_t n_sizes,
                              uint64_t seed,
                              struct MpNetwork **out);

/**
 * Load a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid write target.
 */
enum MpStatus mp_network_load(const char *path, struct MpNetwork **out);

/**
 * Save a checkpoint file (lossless round-trip).
 *
 * # Safety
 * `net` must be a live handle from this library; `path` NUL-terminated.
 */
enum MpStatus mp_network_save(const struct MpNetwork *net, const char *path);

/**
 * Release a handle. Passing NULL is a no-op.
 *
 * # Safety
 * `net` must come from this library and not be freed twice.
 */
void mp_network_free(struct MpNetwork *net);

/**
 * Input dimension; 0 for a null handle.
 *
 * # Safety
 * `net` must be live or NULL.
 */
uintptr_t mp_network_num_inputs(const struct MpNetwork *net);

/**
 * Output dimension; 0 for a null handle.
 *
 * # Safety
 * `net` must be live or NULL.
 */
uintptr_t mp_network_num_outputs(const struct MpNetwork *net);

/**
 * Raw forward pass (hidden swish layers, affine output).
 *
 * # Safety
 * `input` holds `n_in` values, `out` has room for `n_out`.
 */
enum MpStatus mp_network_forward(const struct MpNetwork *net,
                                 const double *input,
                                 uintptr_t n_in,
                                 double *out,
                                 uintptr_t n_out);

/**
 * Forward pass with exact input derivatives. `values` receives n_out
 * entries; `grad` and `hess_diag` receive n_out * n_in entries in
 * row-major (output, input) order.
 *
 * # Safety
 * Buffers must be sized as documented.
 */
enum MpStatus mp_network_forward_with_derivs(const struct MpNetwork *net,
                                             const double *input,
                                             uintptr_t n_in,
                                             double *values,
                                             double *grad,
                                             double *hess_diag);

/**
 * Solid-liquid interface position of the solidification benchmark (m).
 *
 * # Safety
 * `out` must be a valid write target.
 */
enum MpStatus mp_stefan_interface_position(double t, double *out);

/**
 * Closed-form benchmark temperature (K) at position x (m), time t (s).
 *
 * # Safety
 * `out` must be a valid write target.
 */
enum MpStatus mp_stefan_temperature(double x, double t, double *out);

/**
 * Liquid fraction of the mushy-zone ramp.
 *
 * # Safety
 * `out` must be a valid write target.
 */
enum MpStatus mp_liquid_fraction(double temp, double t_solidus, double t_liquidus, double *out);

/**
 * Moving Gaussian laser flux (W/m^2).
 *
 * # Safety
 * `out` must be a valid write target.
 */
enum MpStatus mp_laser_flux(double x,
                            double y,
                            double t,
                            double power,
                            double absorptivity,
                            double beam_radius,
                            double scan_speed,
                            double *out);

/**
 * Cooling rate (K/s) from the solidus-to-1273.15 K distance.
 *
 * # Safety
 * `out` must be a valid write target.
 */
enum MpStatus mp_cooling_rate(double d_s, double d_1273, double v_s, double t_solidus, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MELTPINN_H */
