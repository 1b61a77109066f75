/*
 * udm: data-driven ARMAX surrogate models of inverter-based resources.
 *
 * C interface to the shared library. All objects are opaque handles created
 * and destroyed through this API. Every fallible call returns a udm_status;
 * on failure the message for the calling thread is available from
 * udm_last_error() until the next failing call on that thread.
 *
 * Configuration records (channel roles, orders, fit and monitor settings,
 * scenarios) and reports are exchanged as UTF-8 JSON text. Strings returned
 * through `char**` out-parameters are owned by the caller and must be
 * released with udm_string_free().
 *
 * Numeric blocks are row-major: element (row r, channel c) of an n x k block
 * lives at offset r * k + c.
 */
#ifndef UDM_UDM_H
#define UDM_UDM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(UDM_BUILDING)
#    define UDM_API __declspec(dllexport)
#  else
#    define UDM_API __declspec(dllimport)
#  endif
#else
#  define UDM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum udm_status {
    UDM_OK = 0,
    UDM_ERR_INVALID_ARGUMENT = 1,
    UDM_ERR_MISSING_COLUMN = 2,
    UDM_ERR_NON_UNIFORM_SAMPLING = 3,
    UDM_ERR_NON_FINITE_VALUE = 4,
    UDM_ERR_EMPTY_FILE = 5,
    UDM_ERR_EMPTY_DATASET = 6,
    UDM_ERR_CHANNEL_COUNT_MISMATCH = 7,
    UDM_ERR_CHANNEL_MISMATCH = 8,
    UDM_ERR_INSUFFICIENT_DATA = 9,
    UDM_ERR_LAG_SHORTFALL = 10,
    UDM_ERR_SINGULAR_NORMAL_EQUATIONS = 11,
    UDM_ERR_NON_FINITE_UPDATE = 12,
    UDM_ERR_DIMENSION_MISMATCH = 13,
    UDM_ERR_UNSTABLE_TRUTH = 14,
    UDM_ERR_VOLTAGE_COLLAPSE = 15,
    UDM_ERR_INSUFFICIENT_HISTORY = 16,
    UDM_ERR_FIT_FAILED = 17,
    UDM_ERR_OUT_OF_ORDER_SAMPLE = 18,
    UDM_ERR_LENGTH_MISMATCH = 19,
    UDM_ERR_EMPTY_SUITE = 20,
    UDM_ERR_IO = 21,
    UDM_ERR_CONFIG = 22,
    UDM_ERR_INTERNAL = 99
} udm_status;

typedef struct udm_dataset udm_dataset;
typedef struct udm_model udm_model;
typedef struct udm_monitor udm_monitor;
typedef struct udm_stream udm_stream;

/* ---- library ------------------------------------------------------------ */

UDM_API const char* udm_version(void);
/* Stable identifier such as "MissingColumn"; never NULL. */
UDM_API const char* udm_status_name(udm_status status);
/* Message of the most recent failure on this thread ("" if none). */
UDM_API const char* udm_last_error(void);
UDM_API void udm_string_free(char* s);

/* ---- datasets ----------------------------------------------------------- */

/* roles_json: {"time": "t", "inputs": ["P", "Q"], "outputs": ["V", "f"]} */
UDM_API udm_status udm_dataset_read_csv(const char* path, const char* roles_json, udm_dataset** out);
UDM_API udm_status udm_dataset_create(double sample_period, double t0, size_t rows, size_t n_inputs,
                                      const double* inputs, const char* const* input_names, size_t n_outputs,
                                      const double* outputs, const char* const* output_names, udm_dataset** out);
/* comment may be NULL; it is written as a leading '#' line. */
UDM_API udm_status udm_dataset_write_csv(const udm_dataset* data, const char* path, const char* comment);
UDM_API size_t udm_dataset_rows(const udm_dataset* data);
UDM_API size_t udm_dataset_n_inputs(const udm_dataset* data);
UDM_API size_t udm_dataset_n_outputs(const udm_dataset* data);
UDM_API double udm_dataset_sample_period(const udm_dataset* data);
/* {"rows", "sample_period", "t0", "inputs": [...], "outputs": [...]} */
UDM_API udm_status udm_dataset_info(const udm_dataset* data, char** info_json);
/* Copies rows * n_inputs (resp. n_outputs) values; `capacity` is in doubles. */
UDM_API udm_status udm_dataset_copy_inputs(const udm_dataset* data, double* buffer, size_t capacity);
UDM_API udm_status udm_dataset_copy_outputs(const udm_dataset* data, double* buffer, size_t capacity);
UDM_API void udm_dataset_free(udm_dataset* data);

/* ---- simulation --------------------------------------------------------- */

/* Runs one scenario record (plant kind, plant parameters, events, noise, seed). */
UDM_API udm_status udm_simulate(const char* scenario_json, udm_dataset** out);
/* Expands a base scenario into `count` randomized scenarios; returns a JSON array. */
UDM_API udm_status udm_generate_suite(const char* base_scenario_json, size_t count, uint64_t seed,
                                      char** suite_json);

/* ---- models ------------------------------------------------------------- */

/*
 * orders_json: {"na", "nb", "nc", "nk"}.
 * fit_json (may be NULL for defaults): fit settings plus an optional
 * "method": "els" (batch extended least squares, default) or "rls".
 * report_json (may be NULL) receives the per-output fit report; its
 * top-level "converged" flag is false when the iteration cap was reached.
 */
UDM_API udm_status udm_fit(const udm_dataset* data, const char* orders_json, const char* fit_json, udm_model** out,
                           char** report_json);
/* Index of the candidate whose output channels have the highest spectral entropy. */
UDM_API udm_status udm_select_richest(const udm_dataset* const* candidates, size_t count, size_t* index);

UDM_API udm_status udm_model_load(const char* path, udm_model** out);
UDM_API udm_status udm_model_save(const udm_model* model, const char* path);
UDM_API udm_status udm_model_from_json(const char* json, udm_model** out);
UDM_API udm_status udm_model_to_json(const udm_model* model, char** json);
/* Records the seed and configuration hash that produced the model. */
UDM_API udm_status udm_model_set_provenance(udm_model* model, uint64_t seed, const char* config_hash);
UDM_API size_t udm_model_n_inputs(const udm_model* model);
UDM_API size_t udm_model_n_outputs(const udm_model* model);
UDM_API void udm_model_free(udm_model* model);

/*
 * mode: "measured", "freerun" or "measured-until:<k>".
 * The predicted dataset starts at row `first_row` of `data`, keeps its inputs
 * and holds the predicted outputs in original units.
 */
UDM_API udm_status udm_predict(const udm_model* model, const udm_dataset* data, const char* mode,
                               udm_dataset** predicted, size_t* first_row);

/*
 * Predicts `data` under `mode` and summarizes the errors. When
 * predictions_csv is non-NULL a CSV with columns t, y_<ch>, yhat_<ch> is
 * written there (comment as in udm_dataset_write_csv).
 */
UDM_API udm_status udm_validate(const udm_model* model, const udm_dataset* data, const char* mode,
                                const char* scenario, const char* predictions_csv, const char* comment,
                                char** summary_json);

/* ---- metrics ------------------------------------------------------------ */

UDM_API udm_status udm_rmse(const double* measured, const double* predicted, size_t n, double* out);
/*
 * summaries_json: JSON array of per-scenario summaries from udm_validate.
 * Either output may be NULL.
 */
UDM_API udm_status udm_summarize_suite(const char* summaries_json, char** report_json, char** boxplot_csv);

/* ---- measurement streams ------------------------------------------------ */

/* Empty output cells mark missing measurements; malformed rows are skipped
 * until more than `error_budget` have been seen. */
UDM_API udm_status udm_stream_read_csv(const char* path, const char* roles_json, size_t error_budget,
                                       udm_stream** out);
UDM_API size_t udm_stream_rows(const udm_stream* stream);
/* outputs_present is set to 0 when the row carries no measurement. */
UDM_API udm_status udm_stream_row(const udm_stream* stream, size_t row, size_t* index, double* inputs,
                                  size_t n_inputs, double* outputs, size_t n_outputs, int* outputs_present);
/* JSON array of {"line", "message"} for rejected rows. */
UDM_API udm_status udm_stream_skipped(const udm_stream* stream, char** json);
UDM_API void udm_stream_free(udm_stream* stream);

/* ---- continual validation ----------------------------------------------- */

/* config_json may be NULL for defaults. The model is copied. */
UDM_API udm_status udm_monitor_create(const udm_model* model, const char* config_json, udm_monitor** out);
/*
 * Feeds one sample. outputs == NULL (or n_outputs == 0) marks a missing
 * measurement. prediction (may be NULL) receives n_model_outputs values when
 * *has_prediction is set; recal_requested is set when the trigger rule fired.
 */
UDM_API udm_status udm_monitor_step(udm_monitor* monitor, size_t index, const double* inputs, size_t n_inputs,
                                    const double* outputs, size_t n_outputs, double* prediction,
                                    int* has_prediction, int* recal_requested);
/* Refits on the buffered history. A failed refit is reported in the outcome
 * ({"success": false, "error": ...}) and still returns UDM_OK. */
UDM_API udm_status udm_monitor_recalibrate(udm_monitor* monitor, char** outcome_json);
UDM_API size_t udm_monitor_event_count(const udm_monitor* monitor);
/* Events with sequence number >= first, one JSON object per line. */
UDM_API udm_status udm_monitor_events(const udm_monitor* monitor, size_t first, char** jsonl);
UDM_API size_t udm_monitor_active_version(const udm_monitor* monitor);
/* Copy of model version `version` (1-based). */
UDM_API udm_status udm_monitor_model(const udm_monitor* monitor, size_t version, udm_model** out);
/* {"active_version", "triggers", "timeline", "rolling_rmse", "in_cooldown"} */
UDM_API udm_status udm_monitor_summary(const udm_monitor* monitor, char** json);
UDM_API void udm_monitor_free(udm_monitor* monitor);

#ifdef __cplusplus
}
#endif

#endif /* UDM_UDM_H */
