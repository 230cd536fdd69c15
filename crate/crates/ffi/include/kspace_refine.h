#ifndef KSPACE_REFINE_H
#define KSPACE_REFINE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum KrStatus {
  KR_STATUS_OK = 0,
  // Null pointer, bad size or out-of-range value.
  KR_STATUS_INVALID_ARGUMENT = 1,
  // Operand shapes disagree.
  KR_STATUS_DIMENSION = 2,
  // Mask or Λ request cannot be satisfied.
  KR_STATUS_INFEASIBLE = 3,
  // Λ is not a subset of Ω.
  KR_STATUS_MASK_VIOLATION = 4,
  // Non-finite values or failed numeric check.
  KR_STATUS_NUMERIC = 5,
  // Malformed tensor or checkpoint file.
  KR_STATUS_FORMAT = 6,
  KR_STATUS_IO = 7,
  KR_STATUS_INTERNAL = 8,
  // A Rust panic was caught at the boundary.
  KR_STATUS_PANIC = 9,
} KrStatus;

// Complex image (spatial domain).
typedef struct KrImage KrImage;

// Complex k-space grid.
typedef struct KrKSpace KrKSpace;

// Boolean sampling mask.
typedef struct KrMask KrMask;

// Unrolled ISTA parameters: one `(rho, theta)` pair per phase.
typedef struct KrParams KrParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// Valid until the next call on the same thread.
const char *kr_last_error(void);

// # Safety
// `data` must point to `2 * height * width` doubles.
enum KrStatus kr_image_new(size_t height, size_t width, const double *data, struct KrImage **out);

// # Safety
// `img` must be a live handle; `height`/`width` may be null.
enum KrStatus kr_image_shape(const struct KrImage *img, size_t *height, size_t *width);

// Copies interleaved values into `out` (`len` must equal `2 * height * width`).
//
// # Safety
// `out` must point to `len` writable doubles.
enum KrStatus kr_image_data(const struct KrImage *img, double *out, size_t len);

// # Safety
// `img` must be null or a handle not yet freed.
void kr_image_free(struct KrImage *img);

// # Safety
// `data` must point to `2 * height * width` doubles.
enum KrStatus kr_kspace_new(size_t height, size_t width, const double *data, struct KrKSpace **out);

// # Safety
// `k` must be a live handle; `height`/`width` may be null.
enum KrStatus kr_kspace_shape(const struct KrKSpace *k, size_t *height, size_t *width);

// # Safety
// `out` must point to `len` writable doubles.
enum KrStatus kr_kspace_data(const struct KrKSpace *k, double *out, size_t len);

// # Safety
// `k` must be null or a handle not yet freed.
void kr_kspace_free(struct KrKSpace *k);

// # Safety
// `kept` must point to `height * width` bytes.
enum KrStatus kr_mask_new(size_t height, size_t width, const uint8_t *kept, struct KrMask **out);

// Number of kept points.
//
// # Safety
// `mask` must be a live handle and `count` writable.
enum KrStatus kr_mask_kept_count(const struct KrMask *mask, size_t *count);

// # Safety
// `out` must point to `len` writable bytes; `len` must equal `height * width`.
enum KrStatus kr_mask_data(const struct KrMask *mask, uint8_t *out, size_t len);

// # Safety
// `mask` must be null or a handle not yet freed.
void kr_mask_free(struct KrMask *mask);

// Cartesian line mask. `kind`: 0 random lines, 1 equispaced lines.
//
// # Safety
// `out` must be writable.
enum KrStatus kr_mask_lines(size_t height,
                            size_t width,
                            size_t acceleration,
                            size_t acs_lines,
                            uint32_t kind,
                            uint64_t seed,
                            struct KrMask **out);

// Self-supervision input mask Λ ⊆ Ω.
//
// # Safety
// `omega` must be a live handle and `out` writable.
enum KrStatus kr_mask_lambda(const struct KrMask *omega,
                             double target_ratio,
                             size_t low_freq_band,
                             uint64_t seed,
                             struct KrMask **out);

// Modified Shepp-Logan phantom when `ellipses == 0`, otherwise `ellipses`
// random ellipses drawn from `seed`. Peak magnitude 1.
//
// # Safety
// `out` must be writable.
enum KrStatus kr_phantom(size_t height,
                         size_t width,
                         size_t ellipses,
                         uint64_t seed,
                         struct KrImage **out);

// Undersampled noisy acquisition `Ω ∘ (F img + n)`.
//
// # Safety
// Handles must be live and `out` writable.
enum KrStatus kr_simulate(const struct KrImage *img,
                          const struct KrMask *omega,
                          double noise_sigma,
                          uint64_t noise_seed,
                          struct KrKSpace **out);

// Centered orthonormal 2-D FFT.
//
// # Safety
// `img` must be live and `out` writable.
enum KrStatus kr_fft2c(const struct KrImage *img, struct KrKSpace **out);

// Inverse of [`kr_fft2c`].
//
// # Safety
// `k` must be live and `out` writable.
enum KrStatus kr_ifft2c(const struct KrKSpace *k, struct KrImage **out);

// # Safety
// Handles must be live and `out` writable.
enum KrStatus kr_zero_filled(const struct KrKSpace *y,
                             const struct KrMask *omega,
                             struct KrImage **out);

// Classical ISTA. `haar_levels == 0` selects the identity transform.
//
// # Safety
// Handles must be live and `out` writable.
enum KrStatus kr_ista(const struct KrKSpace *y,
                      const struct KrMask *omega,
                      double reg_weight,
                      size_t num_iters,
                      uint32_t haar_levels,
                      double step_size,
                      struct KrImage **out);

// Unrolled ISTA forward pass with the given parameters.
//
// # Safety
// Handles must be live and `out` writable.
enum KrStatus kr_unrolled(const struct KrKSpace *y,
                          const struct KrMask *omega,
                          const struct KrParams *params,
                          uint32_t haar_levels,
                          struct KrImage **out);

// `num_phases` phases sharing the same `(rho, theta)`.
//
// # Safety
// `out` must be writable.
enum KrStatus kr_params_uniform(size_t num_phases, double rho, double theta, struct KrParams **out);

// # Safety
// `rho` and `theta` must each point to `num_phases` doubles.
enum KrStatus kr_params_new(size_t num_phases,
                            const double *rho,
                            const double *theta,
                            struct KrParams **out);

// # Safety
// `params` must be live and `count` writable.
enum KrStatus kr_params_len(const struct KrParams *params, size_t *count);

// # Safety
// `params` must be live; `rho` and `theta` writable.
enum KrStatus kr_params_get(const struct KrParams *params,
                            size_t phase,
                            double *rho,
                            double *theta);

// Reads a `KRFP` checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum KrStatus kr_params_load(const char *path, struct KrParams **out);

// # Safety
// `params` must be live and `path` a NUL-terminated string.
enum KrStatus kr_params_save(const struct KrParams *params, const char *path);

// # Safety
// `params` must be null or a handle not yet freed.
void kr_params_free(struct KrParams *params);

// PSNR in dB of `test` against `reference` magnitudes (capped at 200).
//
// # Safety
// Handles must be live and `out` writable.
enum KrStatus kr_psnr(const struct KrImage *reference, const struct KrImage *test, double *out);

// Gaussian-window SSIM on magnitudes.
//
// # Safety
// Handles must be live and `out` writable.
enum KrStatus kr_ssim(const struct KrImage *reference, const struct KrImage *test, double *out);

// # Safety
// `img` must be live and `path` a NUL-terminated string.
enum KrStatus kr_image_write(const struct KrImage *img, const char *path);

// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum KrStatus kr_image_read(const char *path, struct KrImage **out);

// # Safety
// `k` must be live and `path` a NUL-terminated string.
enum KrStatus kr_kspace_write(const struct KrKSpace *k, const char *path);

// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum KrStatus kr_kspace_read(const char *path, struct KrKSpace **out);

// # Safety
// `mask` must be live and `path` a NUL-terminated string.
enum KrStatus kr_mask_write(const struct KrMask *mask, const char *path);

// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum KrStatus kr_mask_read(const char *path, struct KrMask **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KSPACE_REFINE_H */
