#ifndef BECLAB_H
#define BECLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Starting state of the minimizer.
typedef enum BeclabInit {
  BECLAB_INIT_UNIFORM = 0,
  BECLAB_INIT_RANDOM = 1,
  BECLAB_INIT_TRIAL_TRIANGULAR = 2,
  BECLAB_INIT_TRIAL_SQUARE = 3,
  BECLAB_INIT_TRIAL_HEXAGONAL = 4,
  BECLAB_INIT_GIANT_VORTEX = 5,
} BeclabInit;

// Lattice arrangement, mirroring the Rust enum.
typedef enum BeclabLattice {
  BECLAB_LATTICE_TRIANGULAR = 0,
  BECLAB_LATTICE_SQUARE = 1,
  BECLAB_LATTICE_HEXAGONAL = 2,
} BeclabLattice;

// Result of every fallible call.
typedef enum BeclabStatus {
  BECLAB_STATUS_OK = 0,
  BECLAB_STATUS_INVALID_PARAMETER = 1,
  BECLAB_STATUS_PRECONDITION = 2,
  BECLAB_STATUS_NOT_NORMALIZED = 3,
  BECLAB_STATUS_GRID_MISMATCH = 4,
  // The minimizer stopped early; the report handle is still filled in.
  BECLAB_STATUS_NON_CONVERGENCE = 5,
  BECLAB_STATUS_STEP_UNDERFLOW = 6,
  BECLAB_STATUS_NO_CROSSING = 7,
  BECLAB_STATUS_FORMAT = 8,
  BECLAB_STATUS_IO = 9,
  BECLAB_STATUS_NULL_POINTER = 10,
  BECLAB_STATUS_PANIC = 11,
} BeclabStatus;

// Opaque discrete field on the unit disc.
typedef struct BeclabField BeclabField;

// Opaque parameter set.
typedef struct BeclabParams BeclabParams;

// Opaque minimizer result.
typedef struct BeclabReport BeclabReport;

typedef struct BeclabEnergy {
  double kinetic;
  double centrifugal;
  double interaction;
  double total;
} BeclabEnergy;

// Options for [`beclab_minimize`]. Zero fields take the library defaults.
typedef struct BeclabMinimizeOptions {
  size_t n;
  size_t max_iters;
  double tol_residual;
  enum BeclabInit init;
  uint64_t seed;
} BeclabMinimizeOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *beclab_version(void);

// Copies the last error message of this thread into `buf` (truncated and
// NUL-terminated). Returns the full message length, 0 if there is none.
//
// # Safety
// `buf` must be valid for `len` bytes or null with `len == 0`.
size_t beclab_last_error(char *buf, size_t len);

// Parameters for `(ε, Ω)`; `Ω = 0` gives the non-rotating problem.
//
// # Safety
// `out` must be a valid pointer.
enum BeclabStatus beclab_params_new(double epsilon, double rotation, struct BeclabParams **out);

// # Safety
// `p` must come from [`beclab_params_new`] (or be null) and not be used again.
void beclab_params_free(struct BeclabParams *p);

// `ω = εΩ`, `δ` and `γ` of a parameter set.
//
// # Safety
// All pointers must be valid.
enum BeclabStatus beclab_params_derived(const struct BeclabParams *p,
                                        double *omega,
                                        double *delta,
                                        double *gamma);

// Unscaled Thomas-Fermi energy `E^TF`.
//
// # Safety
// Both pointers must be valid.
enum BeclabStatus beclab_tf_energy(const struct BeclabParams *p, double *out);

// Vortex-lattice trial state on an `n × n` grid (`n = 0` picks a grid that
// resolves the cores).
//
// # Safety
// `p` and `out` must be valid.
enum BeclabStatus beclab_trial_new(const struct BeclabParams *p,
                                   enum BeclabLattice kind,
                                   size_t n,
                                   struct BeclabField **out);

// Reads a GPF1 snapshot.
//
// # Safety
// `path` must be a NUL-terminated string and `out` valid.
enum BeclabStatus beclab_field_load(const char *path, struct BeclabField **out);

// Writes a GPF1 snapshot.
//
// # Safety
// `f` must be a live field handle and `path` a NUL-terminated string.
enum BeclabStatus beclab_field_save(const struct BeclabField *f, const char *path);

// # Safety
// `f` must come from this library (or be null) and not be used again.
void beclab_field_free(struct BeclabField *f);

// Number of stored nodes and grid points per side.
//
// # Safety
// All pointers must be valid.
enum BeclabStatus beclab_field_shape(const struct BeclabField *f, size_t *nodes, size_t *n);

// Copies node coordinates and values as interleaved `(x, y, re, im)`.
// `out` must hold `4 · nodes` doubles.
//
// # Safety
// `f` must be valid and `out` writable for `len` doubles.
enum BeclabStatus beclab_field_copy(const struct BeclabField *f, double *out, size_t len);

// Discrete GP energy of a normalized field.
//
// # Safety
// All pointers must be valid.
enum BeclabStatus beclab_field_energy(const struct BeclabField *f,
                                      const struct BeclabParams *p,
                                      struct BeclabEnergy *out);

// Total degree and number of vortices found in `f`.
//
// # Safety
// All pointers must be valid.
enum BeclabStatus beclab_field_vortices(const struct BeclabField *f,
                                        double rotation,
                                        double threshold,
                                        int64_t *total_degree,
                                        size_t *count);

// Minimizes the GP energy. On `BECLAB_STATUS_NON_CONVERGENCE` and
// `BECLAB_STATUS_STEP_UNDERFLOW` `out` still receives the last state.
//
// # Safety
// `p`, `opts` and `out` must be valid.
enum BeclabStatus beclab_minimize(const struct BeclabParams *p,
                                  const struct BeclabMinimizeOptions *opts,
                                  struct BeclabReport **out);

// # Safety
// `r` must come from [`beclab_minimize`] (or be null) and not be used again.
void beclab_report_free(struct BeclabReport *r);

// Energy, chemical potential, residual and iteration count of a run.
//
// # Safety
// All pointers must be valid.
enum BeclabStatus beclab_report_summary(const struct BeclabReport *r,
                                        struct BeclabEnergy *energy,
                                        double *mu,
                                        double *residual,
                                        size_t *iters,
                                        bool *converged);

// Copy of the final field as a new handle.
//
// # Safety
// Both pointers must be valid.
enum BeclabStatus beclab_report_field(const struct BeclabReport *r, struct BeclabField **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BECLAB_H */
