/*
 * u5apc — subnational under-five mortality estimation with spatio-temporal
 * age-period-cohort smoothing.
 *
 * C interface to the shared library. All functions return a status code
 * (U5APC_OK on success); on failure u5apc_last_error() describes the problem
 * for the calling thread. Handles are opaque and must be released with the
 * matching *_close function.
 */

#ifndef U5APC_H
#define U5APC_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#ifndef U5APC_API
#define U5APC_API __attribute__((visibility("default")))
#endif

enum {
    U5APC_OK = 0,
    U5APC_ERR_INVALID = 1,  /* bad arguments or configuration */
    U5APC_ERR_IO = 2,       /* missing/malformed files */
    U5APC_ERR_NUMERIC = 3,  /* non-convergence or numerical failure */
    U5APC_ERR_INTERNAL = 4
};

U5APC_API const char* u5apc_version(void);

/* Message for the last failure on this thread; empty string when none. */
U5APC_API const char* u5apc_last_error(void);

/* ------------------------------------------------------------------ */
/* Run options shared by all commands; unused fields are ignored.      */

typedef struct u5apc_options {
    const char* survey_csv;      /* input birth-history CSV */
    const char* adjacency;       /* region adjacency file */
    const char* proportions;     /* stratum/national proportions CSV */
    const char* model_config;    /* key=value model configuration */
    const char* sim_config;      /* key=value simulation configuration */
    const char* run_dir;         /* completed run to report on */
    const char* out_dir;         /* artifact directory (required) */
    const char* variant;         /* "AP" | "AC" | "APC"; comma list for cv */
    const char* hyper;           /* "eb" | "ccd" */
    const char* cohort_collapse; /* "dominant" | "weighted" */
    int32_t draws;
    int32_t horizon;
    int32_t first_period;
    int32_t last_period;
    int32_t holdout_period;
    int32_t clusters_per_stratum;
    int32_t households_per_cluster;
    int32_t threads;
    int32_t optimizer_budget;
    int32_t cv_optimizer_budget;
    uint64_t seed;
} u5apc_options;

/* Fills every field with its default. */
U5APC_API void u5apc_options_init(u5apc_options* opts);

/* Pipeline commands; each writes its CSV artifacts plus manifest.json
 * under out_dir and removes partial output on failure. */
U5APC_API int u5apc_run_simulate(const u5apc_options* opts);
U5APC_API int u5apc_run_expand(const u5apc_options* opts);
U5APC_API int u5apc_run_fit(const u5apc_options* opts);
U5APC_API int u5apc_run_predict(const u5apc_options* opts);
U5APC_API int u5apc_run_direct(const u5apc_options* opts);
U5APC_API int u5apc_run_cv(const u5apc_options* opts);
U5APC_API int u5apc_run_report(const u5apc_options* opts);

/* ------------------------------------------------------------------ */
/* Survey handle                                                       */

typedef struct u5apc_survey u5apc_survey;

U5APC_API int u5apc_survey_open(const char* csv_path, u5apc_survey** out);
U5APC_API int u5apc_survey_counts(const u5apc_survey* survey, int64_t* records,
                                  int64_t* rejections);
U5APC_API int u5apc_survey_write_rejections(const u5apc_survey* survey, const char* csv_path);
U5APC_API void u5apc_survey_close(u5apc_survey* survey);

/* ------------------------------------------------------------------ */
/* Fit handle                                                          */

typedef struct u5apc_fit u5apc_fit;

U5APC_API int u5apc_fit_run(const u5apc_survey* survey, const u5apc_options* opts,
                            u5apc_fit** out);
U5APC_API int u5apc_fit_hyper_count(const u5apc_fit* fit, int32_t* count);
/* Name of hyperparameter `index` (internal optimizer scale). */
U5APC_API int u5apc_fit_hyper_name(const u5apc_fit* fit, int32_t index, char* buf,
                                   int32_t bufsize);
U5APC_API int u5apc_fit_hyper_value(const u5apc_fit* fit, int32_t index, double* internal_scale,
                                    double* natural_scale);
/* max |Ax - e| across every posterior draw. */
U5APC_API int u5apc_fit_constraint_violation(const u5apc_fit* fit, double* value);
U5APC_API int u5apc_fit_write_estimates(const u5apc_fit* fit, const char* csv_path);
U5APC_API void u5apc_fit_close(u5apc_fit* fit);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* U5APC_H */
