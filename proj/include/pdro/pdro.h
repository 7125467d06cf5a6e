/* Parametric distributionally robust optimization: C interface.
 *
 * All functions return PDRO_OK on success or a nonzero status code; the
 * message for the most recent failure on the calling thread is available
 * through pdro_last_error(). Array arguments are row-major doubles.
 */
#ifndef PDRO_H
#define PDRO_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PDRO_API __declspec(dllexport)
#else
#define PDRO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

enum {
    PDRO_OK = 0,
    PDRO_ERR_INVALID = 1, /* bad arguments or configuration */
    PDRO_ERR_PARSE = 2,   /* malformed file contents */
    PDRO_ERR_IO = 3,      /* missing or unwritable file */
    PDRO_ERR_RUNTIME = 4  /* numerical or internal failure */
};

PDRO_API const char* pdro_version(void);

/* Thread-local message for the last failing call on this thread. */
PDRO_API const char* pdro_last_error(void);

/* ------------------------------------------------------------------ */
/* Distributions                                                       */
/* ------------------------------------------------------------------ */

typedef struct pdro_dist pdro_dist;

PDRO_API void pdro_dist_free(pdro_dist* dist);

/* Gaussian with sample mean and sample covariance (divisor m). */
PDRO_API int pdro_fit_gaussian(const double* atoms, size_t m, size_t d, pdro_dist** out);

/* Gaussian with sample mean and a caller-supplied d x d covariance. */
PDRO_API int pdro_fit_gaussian_mean(const double* atoms, size_t m, size_t d, const double* cov,
                                    pdro_dist** out);

/* Scaled-Beta product on [-r, r]^d by the first-moment equation. */
PDRO_API int pdro_fit_beta(const double* atoms, size_t m, size_t d, double r, pdro_dist** out);

/* Label-supervised Gaussian mixture (labels in [0, num_groups)). */
PDRO_API int pdro_fit_gmm(const double* atoms, size_t m, size_t d, const int32_t* labels,
                          pdro_dist** out);

/* Conditional linear-Gaussian law xi | y = N(B y, Sigma) by least squares. */
PDRO_API int pdro_fit_ols(const double* covariates, size_t n, size_t dy, const double* responses,
                          size_t dxi, pdro_dist** out);

/* Dimension of xi under the law. */
PDRO_API int pdro_dist_dim(const pdro_dist* dist, size_t* out_dim);

/* Human-readable parameter dump ("key = value" lines). Returns the number of
 * bytes that would be written (excluding the terminator), truncating to cap. */
PDRO_API int pdro_dist_describe(const pdro_dist* dist, char* buf, size_t cap, size_t* out_len);

/* m i.i.d. draws, deterministic in (dist, m, seed). `context` (length
 * context_len) is required for conditional laws and must be NULL otherwise.
 * out_atoms must hold m * dim doubles. */
PDRO_API int pdro_sample(const pdro_dist* dist, size_t m, uint64_t seed, const double* context,
                         size_t context_len, double* out_atoms);

/* ------------------------------------------------------------------ */
/* Inner worst-case solvers                                            */
/* ------------------------------------------------------------------ */

/* base == NULL means uniform weights. out_weights (length m) and
 * out_closed_form may be NULL. */
PDRO_API int pdro_chi2_worst_case(const double* values, size_t m, const double* base, double eps,
                                  double* out_value, double* out_weights, int* out_closed_form);

PDRO_API int pdro_kl_worst_case(const double* values, size_t m, const double* base, double eps,
                                double* out_value, double* out_weights, int* out_closed_form);

PDRO_API int pdro_w1_worst_case(double mean_value, double lip, double eps, double* out_value);

/* ------------------------------------------------------------------ */
/* One-shot outer solve                                                */
/* ------------------------------------------------------------------ */

enum { PDRO_COST_DOWNSIDE = 0, PDRO_COST_QUADRATIC = 1 };
enum { PDRO_SET_SIMPLEX_FLOOR = 0, PDRO_SET_L2_BALL = 1 };
enum { PDRO_AMB_NONE = 0, PDRO_AMB_CHI2 = 1, PDRO_AMB_KL = 2, PDRO_AMB_W1 = 3 };

typedef struct {
    int cost_kind;        /* PDRO_COST_* */
    double mu;            /* downside risk target */
    double gamma;         /* downside risk exponent >= 1 */
    const double* anchor; /* quadratic cost anchor (length d), may be NULL for downside */
    int set_kind;         /* PDRO_SET_* */
    double tau;           /* simplex floor */
    double radius;        /* l2 ball radius */
    int amb_kind;         /* PDRO_AMB_* */
    double eps;           /* ambiguity radius */
    int max_iter;         /* <= 0 for the default */
    double step_c;        /* <= 0 for the default diameter/sqrt(max_iter) */
    double tol;           /* <= 0 for the default */
    uint64_t seed;
    int averaging;        /* nonzero returns the tail-averaged iterate */
} pdro_solve_spec;

/* Solves min over the set of the (worst-case) cost over the m x d atoms;
 * writes the decision (length d) and the attained objective. out_status is 0
 * when the stall test converged, 1 on iteration cap (may be NULL). */
PDRO_API int pdro_solve(const double* atoms, size_t m, size_t d, const pdro_solve_spec* spec,
                        double* out_x, double* out_objective, int* out_status);

/* ------------------------------------------------------------------ */
/* Experiment pipeline                                                 */
/* ------------------------------------------------------------------ */

/* Runs the benchmark described by the config file and writes the results
 * CSV (to results_path if non-NULL, else to the config's `out`). */
PDRO_API int pdro_run_experiment(const char* config_path, const char* results_path);

/* Theorem-style coverage probe; writes the fraction of seeds whose realized
 * excess risk met the bound. */
PDRO_API int pdro_check_bounds(const char* config_path, double* out_coverage);

/* Recomputes the aggregate block of an existing results CSV. The rendered
 * text is returned through a malloc'd buffer; free it with pdro_free. */
PDRO_API int pdro_report(const char* results_csv, char** out_text);

/* Loads a returns CSV (header row, leading date column). Values are divided
 * by 100 when percent_units is nonzero. The row-major matrix is returned
 * through a malloc'd buffer; free it with pdro_free. */
PDRO_API int pdro_load_returns_csv(const char* path, int percent_units, double** out_data,
                                   size_t* out_rows, size_t* out_cols);

PDRO_API void pdro_free(void* p);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* PDRO_H */
