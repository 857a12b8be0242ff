/* C ABI for the stamp quantization-simulation library. */

#ifndef STAMP_H
#define STAMP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible API call.
 */
typedef enum StampStatus {
  STAMP_STATUS_OK = 0,
  STAMP_STATUS_NULL_POINTER = 1,
  STAMP_STATUS_INVALID_ARGUMENT = 2,
  STAMP_STATUS_DIMENSION_MISMATCH = 3,
  STAMP_STATUS_NUMERICAL_FAILURE = 4,
  STAMP_STATUS_ALLOCATION_FAILURE = 5,
  STAMP_STATUS_IO_FAILURE = 6,
  STAMP_STATUS_PANIC = 7,
} StampStatus;

/**
 * Opaque dense activation matrix (sequence x feature, f64, row-major).
 */
typedef struct StampMatrix StampMatrix;

/**
 * Opaque invertible sequence transform.
 */
typedef struct StampTransform StampTransform;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code.
 */
const char *stamp_status_message(enum StampStatus status);

/**
 * Create a matrix from `rows * cols` row-major values.
 *
 * # Safety
 * `data` must point to `rows * cols` readable doubles and `out` to a
 * writable pointer slot.
 */
enum StampStatus stamp_matrix_create(size_t rows,
                                     size_t cols,
                                     const double *data,
                                     struct StampMatrix **out);

/**
 * Draw a stationary AR(1) activation matrix (unit variance, correlation
 * `rho` along the sequence axis) from the deterministic counter PRNG.
 *
 * # Safety
 * `out` must point to a writable pointer slot.
 */
enum StampStatus stamp_matrix_generate_ar1(uint64_t seed,
                                           size_t seq_len,
                                           size_t feat_dim,
                                           double rho,
                                           struct StampMatrix **out);

/**
 * Release a matrix handle. NULL is a no-op.
 *
 * # Safety
 * `m` must be a handle from this library, not yet freed.
 */
void stamp_matrix_free(struct StampMatrix *m);

/**
 * Number of rows (sequence length); 0 for NULL.
 *
 * # Safety
 * `m` must be a live handle or NULL.
 */
size_t stamp_matrix_rows(const struct StampMatrix *m);

/**
 * Number of columns (feature size); 0 for NULL.
 *
 * # Safety
 * `m` must be a live handle or NULL.
 */
size_t stamp_matrix_cols(const struct StampMatrix *m);

/**
 * Copy the row-major contents into `out`, which holds `len` doubles;
 * `len` must equal rows * cols.
 *
 * # Safety
 * `m` must be a live handle; `out` must point to `len` writable doubles.
 */
enum StampStatus stamp_matrix_copy_data(const struct StampMatrix *m, double *out, size_t len);

/**
 * Identity sequence transform.
 *
 * # Safety
 * `out` must point to a writable pointer slot.
 */
enum StampStatus stamp_transform_identity(size_t len, struct StampTransform **out);

/**
 * Orthonormal DCT-II sequence transform.
 *
 * # Safety
 * `out` must point to a writable pointer slot.
 */
enum StampStatus stamp_transform_dct(size_t len, struct StampTransform **out);

/**
 * Orthonormal Walsh-Hadamard transform; `len` must be a power of two.
 *
 * # Safety
 * `out` must point to a writable pointer slot.
 */
enum StampStatus stamp_transform_wht(size_t len, struct StampTransform **out);

/**
 * Multilevel 1D Haar wavelet; `len` must be divisible by 2^levels.
 *
 * # Safety
 * `out` must point to a writable pointer slot.
 */
enum StampStatus stamp_transform_dwt1d(size_t len, size_t levels, struct StampTransform **out);

/**
 * Separable 2D Haar wavelet over a height x width token grid.
 *
 * # Safety
 * `out` must point to a writable pointer slot.
 */
enum StampStatus stamp_transform_dwt2d(size_t height,
                                       size_t width,
                                       size_t levels,
                                       struct StampTransform **out);

/**
 * KLT calibrated on a symmetric PSD autocorrelation matrix.
 *
 * # Safety
 * `autocorr` must be a live matrix handle; `out` a writable pointer slot.
 */
enum StampStatus stamp_transform_klt_from_autocorr(const struct StampMatrix *autocorr,
                                                   struct StampTransform **out);

/**
 * Release a transform handle. NULL is a no-op.
 *
 * # Safety
 * `t` must be a handle from this library, not yet freed.
 */
void stamp_transform_free(struct StampTransform *t);

/**
 * Forward transform: out = L * x.
 *
 * # Safety
 * `t` and `x` must be live handles; `out` a writable pointer slot.
 */
enum StampStatus stamp_transform_apply(const struct StampTransform *t,
                                       const struct StampMatrix *x,
                                       struct StampMatrix **out);

/**
 * Inverse transform: out = L^T * y.
 *
 * # Safety
 * `t` and `y` must be live handles; `out` a writable pointer slot.
 */
enum StampStatus stamp_transform_invert(const struct StampTransform *t,
                                        const struct StampMatrix *y,
                                        struct StampMatrix **out);

/**
 * Asymmetric min-max fake quantization with per-token bit widths.
 * `bits` holds one width (1..=16) per row; `block_size` 0 means per-token
 * granularity, otherwise per-block of that many features.
 *
 * # Safety
 * `x` must be a live handle, `bits` readable for `bits_len` bytes, and
 * `out` a writable pointer slot.
 */
enum StampStatus stamp_fake_quant(const struct StampMatrix *x,
                                  const uint8_t *bits,
                                  size_t bits_len,
                                  size_t block_size,
                                  struct StampMatrix **out);

/**
 * Squared Frobenius norm of the fake-quantization residual.
 *
 * # Safety
 * Pointer arguments as in [`stamp_fake_quant`]; `out` one writable double.
 */
enum StampStatus stamp_quant_error(const struct StampMatrix *x,
                                   const uint8_t *bits,
                                   size_t bits_len,
                                   size_t block_size,
                                   double *out);

/**
 * SQNR in dB; +infinity when the residual is exactly zero.
 *
 * # Safety
 * `reference` and `test` must be live handles; `out` one writable double.
 */
enum StampStatus stamp_sqnr_db(const struct StampMatrix *reference,
                               const struct StampMatrix *test,
                               double *out);

/**
 * Token energies diag(L S L^T) of an autocorrelation matrix under a
 * transform. `out` must hold `seq_len` doubles.
 *
 * # Safety
 * `autocorr` and `t` must be live handles; `out` writable for `out_len`.
 */
enum StampStatus stamp_transformed_energies(const struct StampMatrix *autocorr,
                                            const struct StampTransform *t,
                                            double *out,
                                            size_t out_len);

/**
 * Per-token widths of the two-level scheme plus its exact average width.
 * `out_bits` must hold `seq_len` bytes.
 *
 * # Safety
 * `out_bits` must be writable for `seq_len` bytes and `out_average` for
 * one double; either may be NULL to skip that output.
 */
enum StampStatus stamp_two_level_bits(size_t seq_len,
                                      size_t n_high_precision,
                                      uint8_t high_bits,
                                      uint8_t low_bits,
                                      uint8_t *out_bits,
                                      double *out_average);

/**
 * Continuous optimal bit allocation for the given token energies and total
 * budget; writes one double per token.
 *
 * # Safety
 * `energies` must be readable and `out_bits` writable for `len` doubles.
 */
enum StampStatus stamp_optimal_bits(const double *energies,
                                    size_t len,
                                    double budget,
                                    double *out_bits);

/**
 * Energy-weighted quantization error bound (d/2) sum_i e_i/(2^b_i - 1)^2.
 *
 * # Safety
 * `energies` and `bits` must be readable for `len` doubles; `out` one
 * writable double.
 */
enum StampStatus stamp_energy_error_bound(const double *energies,
                                          const double *bits,
                                          size_t len,
                                          size_t feat_dim,
                                          double *out);

/**
 * Deterministic counter-PRNG draw, exposed so bindings can reproduce the
 * library's synthetic streams.
 */
uint64_t stamp_rng_raw(uint64_t seed, uint64_t counter);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STAMP_H */
