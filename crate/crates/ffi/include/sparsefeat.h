#ifndef SPARSEFEAT_H
#define SPARSEFEAT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success.
typedef enum SfStatus {
  SF_OK = 0,
  // A required pointer argument was null.
  SF_ERR_NULL = 1,
  // Bad argument value or shape, or a violated precondition.
  SF_ERR_CONTRACT = 2,
  // File could not be opened, read or written.
  SF_ERR_IO = 3,
  // File contents were malformed.
  SF_ERR_FORMAT = 4,
  // A fixed-step proximal-gradient run diverged.
  SF_ERR_DIVERGENCE = 5,
  // An output buffer was too small; nothing was written.
  SF_ERR_BUFFER_TOO_SMALL = 6,
  // Internal panic caught at the boundary.
  SF_ERR_PANIC = 7,
} SfStatus;

typedef enum SfScaleMode {
  // `1/(2m)‖y − Xβ‖²`
  SF_SCALE_MEAN = 0,
  // `1/2‖y − Xβ‖²`
  SF_SCALE_SUM = 1,
} SfScaleMode;

typedef enum SfStepPolicy {
  SF_STEP_LIPSCHITZ = 0,
  // Uses `step`.
  SF_STEP_FIXED = 1,
  // Starts at `step`, shrinks by `backtrack_beta`.
  SF_STEP_BACKTRACKING = 2,
} SfStepPolicy;

// Opaque row-major matrix.
typedef struct SfMatrix SfMatrix;

// Opaque solver result.
typedef struct SfSolution SfSolution;

// Solver settings; start from [`sf_solver_config_default`].
typedef struct SfSolverConfig {
  double tol;
  size_t max_iter;
  enum SfScaleMode scale_mode;
  enum SfStepPolicy step_policy;
  double step;
  double backtrack_beta;
  // Nonzero: subtract `mean(y)` and report it as the intercept.
  int32_t center_targets;
} SfSolverConfig;

typedef struct SfEvaluation {
  size_t tp;
  size_t fp;
  size_t fn_;
  size_t tn;
  double accuracy;
  double precision;
  double recall;
  double f1;
} SfEvaluation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// Valid until the next call into this library on the same thread.
const char *sf_last_error(void);

// Library version as a static NUL-terminated string.
const char *sf_version(void);

// Copies `rows * cols` row-major values into a new matrix.
//
// # Safety
// `data` must point to `rows * cols` doubles; `out` must be writable.
enum SfStatus sf_matrix_new(size_t rows, size_t cols, const double *data, struct SfMatrix **out);

// Loads an SPFM or (by `.csv`/`.txt` extension) headerless CSV matrix.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum SfStatus sf_matrix_load(const char *path, struct SfMatrix **out);

// Saves as SPFM with `double` payload.
//
// # Safety
// `m` must be a live handle; `path` a NUL-terminated string.
enum SfStatus sf_matrix_save(const struct SfMatrix *m, const char *path);

// # Safety
// `m` must be null or a handle from this library, freed at most once.
void sf_matrix_free(struct SfMatrix *m);

// # Safety
// `m` must be null or a live handle. Returns 0 for null.
size_t sf_matrix_rows(const struct SfMatrix *m);

// # Safety
// `m` must be null or a live handle. Returns 0 for null.
size_t sf_matrix_cols(const struct SfMatrix *m);

// Copies the row-major values into `out`, which holds `cap` doubles.
//
// # Safety
// `m` must be a live handle; `out` must hold `cap` doubles.
enum SfStatus sf_matrix_copy(const struct SfMatrix *m, double *out, size_t cap);

struct SfSolverConfig sf_solver_config_default(void);

// Lasso by coordinate descent. `cfg` may be null for defaults.
//
// # Safety
// `x` must be a live handle, `y` must hold `y_len` doubles, `cfg` must be
// null or valid, `out` writable.
enum SfStatus sf_lasso_cd(const struct SfMatrix *x,
                          const double *y,
                          size_t y_len,
                          double lambda,
                          const struct SfSolverConfig *cfg,
                          struct SfSolution **out);

// Elastic Net by coordinate descent.
//
// # Safety
// As for [`sf_lasso_cd`].
enum SfStatus sf_elastic_net_cd(const struct SfMatrix *x,
                                const double *y,
                                size_t y_len,
                                double alpha,
                                double l1_ratio,
                                const struct SfSolverConfig *cfg,
                                struct SfSolution **out);

// Lasso by ISTA.
//
// # Safety
// As for [`sf_lasso_cd`].
enum SfStatus sf_ista(const struct SfMatrix *x,
                      const double *y,
                      size_t y_len,
                      double lambda,
                      const struct SfSolverConfig *cfg,
                      struct SfSolution **out);

// Lasso by FISTA.
//
// # Safety
// As for [`sf_lasso_cd`].
enum SfStatus sf_fista(const struct SfMatrix *x,
                       const double *y,
                       size_t y_len,
                       double lambda,
                       const struct SfSolverConfig *cfg,
                       struct SfSolution **out);

// # Safety
// `s` must be null or a handle from this library, freed at most once.
void sf_solution_free(struct SfSolution *s);

// Number of coefficients; 0 for null.
//
// # Safety
// `s` must be null or a live handle.
size_t sf_solution_len(const struct SfSolution *s);

// # Safety
// `s` must be a live handle; `out` must hold `cap` doubles.
enum SfStatus sf_solution_coef(const struct SfSolution *s, double *out, size_t cap);

// Intercept (0 unless targets were centered); NaN for null.
//
// # Safety
// `s` must be null or a live handle.
double sf_solution_intercept(const struct SfSolution *s);

// # Safety
// `s` must be null or a live handle.
size_t sf_solution_iterations(const struct SfSolution *s);

// 1 if the solver met its tolerance, 0 otherwise (or for null).
//
// # Safety
// `s` must be null or a live handle.
int32_t sf_solution_converged(const struct SfSolution *s);

// Objective after the last iteration; NaN for null.
//
// # Safety
// `s` must be null or a live handle.
double sf_solution_objective(const struct SfSolution *s);

// # Safety
// `s` must be null or a live handle.
size_t sf_solution_history_len(const struct SfSolution *s);

// Objective per iteration, starting with the value at zero.
//
// # Safety
// `s` must be a live handle; `out` must hold `cap` doubles.
enum SfStatus sf_solution_history(const struct SfSolution *s, double *out, size_t cap);

// Writes the ascending indices with `|coef| > zero_tol` into `out` and
// their count into `count`. If `cap` is too small only `count` is set and
// `SfErrBufferTooSmall` is returned.
//
// # Safety
// `s` must be a live handle; `out` must hold `cap` elements; `count`
// must be writable.
enum SfStatus sf_solution_support(const struct SfSolution *s,
                                  double zero_tol,
                                  size_t *out,
                                  size_t cap,
                                  size_t *count);

// Majority-vote KNN. Writes one label per query row into `out`.
//
// # Safety
// `train` and `query` must be live handles; `labels` must hold
// `sf_matrix_rows(train)` elements and `out` `cap` elements.
enum SfStatus sf_knn_predict(const struct SfMatrix *train,
                             const size_t *labels,
                             size_t k,
                             const struct SfMatrix *query,
                             size_t *out,
                             size_t cap);

// Binary metrics with positive class 1.
//
// # Safety
// `truth` and `pred` must hold `n` elements; `out` must be writable.
enum SfStatus sf_evaluate(const size_t *truth,
                          const size_t *pred,
                          size_t n,
                          struct SfEvaluation *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPARSEFEAT_H */
