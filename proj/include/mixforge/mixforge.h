#ifndef MIXFORGE_H
#define MIXFORGE_H

/* C interface to the mixforge library. Functions return MF_OK or an error status; the
 * message for the most recent failure on the calling thread is available from
 * mf_last_error(). Strings returned through char** outputs are owned by the caller and
 * released with mf_string_free(). */

#include <stddef.h>
#include <stdint.h>

#if defined(MIXFORGE_BUILDING)
#define MF_API __attribute__((visibility("default")))
#else
#define MF_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mf_status {
    MF_OK = 0,
    MF_ERR_PARSE = 1,       /* malformed input file or string */
    MF_ERR_VALIDATION = 2,  /* well-formed input violating an invariant */
    MF_ERR_CONFIG = 3,      /* bad hyperparameters, grid or option */
    MF_ERR_DOMAIN = 4,      /* mathematically undefined request */
    MF_ERR_IO = 5,
    MF_ERR_ARGUMENT = 6,    /* null pointer or out-of-range argument */
    MF_ERR_INTERNAL = 7
} mf_status;

typedef struct mf_dataset mf_dataset;
typedef struct mf_forest mf_forest;
typedef struct mf_model mf_model;

typedef struct mf_hyperparameters {
    int n_trees;
    int max_features;
    int min_samples_split;
} mf_hyperparameters;

MF_API const char* mf_version(void);
MF_API const char* mf_last_error(void);
MF_API const char* mf_status_name(mf_status status);
MF_API void mf_string_free(char* s);

/* Worker thread cap for this process; 0 restores MIXFORGE_THREADS or the hardware count. */
MF_API void mf_set_threads(size_t threads);

/* model: "linear", "single_rf", "two_layer" or "imputation". */
MF_API mf_status mf_default_hyperparameters(const char* model, mf_hyperparameters* out);

/* ---- datasets ---- */

MF_API mf_status mf_dataset_load(const char* path, mf_dataset** out);
MF_API mf_status mf_dataset_parse(const char* csv, mf_dataset** out);
MF_API void mf_dataset_free(mf_dataset* dataset);
MF_API size_t mf_dataset_size(const mf_dataset* dataset);
MF_API mf_status mf_dataset_to_csv(const mf_dataset* dataset, char** csv);

/* ---- pipeline steps; each returns its reports as strings ---- */

/* method: "pearson" or "spearman". svg may be NULL. */
MF_API mf_status mf_correlate(const mf_dataset* dataset, const char* method, char** csv, char** svg);

/* model and target may be NULL for all of them; hp NULL uses the defaults of each model.
 * folds_csv (nullable) receives every fold as model,target,mix,truth,prediction,sigma. */
MF_API mf_status mf_crossval(const mf_dataset* dataset, const char* model, const char* target,
                             const mf_hyperparameters* hp, uint64_t seed, char** table_json, char** table_csv,
                             char** folds_csv);

/* grid_json NULL uses the default grid; target NULL sums R² over all five targets. */
MF_API mf_status mf_tune(const mf_dataset* dataset, const char* model, const char* grid_json, const char* target,
                         uint64_t seed, char** result_json);

/* criteria_json: {"name", "bounds": [{"target", "op", "value"}]}. generator_json (nullable)
 * overrides generator fields. mode: "gaussian" (NULL) or "empirical". svg may be NULL. */
MF_API mf_status mf_design(const mf_dataset* dataset, const char* criteria_json, const char* generator_json,
                           const mf_hyperparameters* hp, const char* mode, uint64_t seed, char** scan_csv,
                           char** selected_json, char** svg);

/* Two-layer predictions of all five targets for every mix in `inputs`. */
MF_API mf_status mf_predict(const mf_dataset* training, const mf_dataset* inputs, const mf_hyperparameters* hp,
                            uint64_t seed, char** csv);

/* series_csv has header t_days,x_mm,sigma_mm. */
MF_API mf_status mf_carbfit(const char* series_csv, char** fit_json);

/* cement_type: "IIA 32.5 R" / "IIA" or "I 52.5 N" / "I". coefficients_json may be NULL. */
MF_API mf_status mf_props(double cement_pct, double gravel_pct, double sand_pct, double water_pct,
                          const char* cement_type, const char* coefficients_json, char** json);

MF_API mf_status mf_carbonation_depth(double k, double x0, double t, double* depth);

/* upper != 0 scores value < threshold, otherwise value > threshold. */
MF_API mf_status mf_probability_of_bound(double mean, double sigma, int upper, double threshold,
                                         double* probability);

/* ---- forests ---- */

/* features is row-major rows x cols. */
MF_API mf_status mf_forest_fit(const double* features, size_t rows, size_t cols, const double* targets,
                               const mf_hyperparameters* hp, uint64_t seed, mf_forest** out);
MF_API void mf_forest_free(mf_forest* forest);
MF_API mf_status mf_forest_predict(const mf_forest* forest, const double* x, size_t cols, double* mean,
                                   double* sigma);
/* *available is set to 0 when every tree drew the row. */
MF_API mf_status mf_forest_oob_predict(const mf_forest* forest, size_t row, double* mean, double* sigma,
                                       int* available);
MF_API mf_status mf_forest_importances(const mf_forest* forest, double* values, size_t cols, int* defined);
MF_API mf_status mf_forest_to_json(const mf_forest* forest, char** json);
MF_API mf_status mf_forest_from_json(const char* json, mf_forest** out);

/* ---- two-layer models ---- */

MF_API mf_status mf_model_fit(const mf_dataset* dataset, const char* target, const mf_hyperparameters* hp,
                              uint64_t seed, mf_model** out);
MF_API void mf_model_free(mf_model* model);
/* base holds the 9 base features in canonical order. */
MF_API mf_status mf_model_predict(const mf_model* model, const double* base, size_t cols, double* mean,
                                  double* sigma);
MF_API mf_status mf_model_to_json(const mf_model* model, char** json);
MF_API mf_status mf_model_from_json(const char* json, mf_model** out);

#ifdef __cplusplus
}
#endif

#endif
