/* C interface to the transferable deep clustering library.
 *
 * All objects are opaque handles released with their *_free function.
 * Every call returns a tdcm_status; on failure tdcm_last_error() describes
 * the problem for the calling thread. Strings returned through char** are
 * owned by the caller and released with tdcm_string_free. */
#ifndef TDCM_H
#define TDCM_H

#include <stddef.h>
#include <stdint.h>

#if defined(TDCM_BUILDING_LIBRARY)
#define TDCM_API __attribute__((visibility("default")))
#else
#define TDCM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tdcm_status {
  TDCM_OK = 0,
  TDCM_ERR_SHAPE = 1,
  TDCM_ERR_PARAMETER = 2,
  TDCM_ERR_CONFIG = 3,
  TDCM_ERR_DOMAIN = 4,
  TDCM_ERR_STATE = 5,
  TDCM_ERR_EVALUATION = 6,
  TDCM_ERR_PARSE = 7,
  TDCM_ERR_PERSISTENCE = 8,
  TDCM_ERR_NUMERICAL = 9,
  TDCM_ERR_IO = 10,
  TDCM_ERR_NULL_ARGUMENT = 11,
  TDCM_ERR_INTERNAL = 99
} tdcm_status;

typedef struct tdcm_config tdcm_config;
typedef struct tdcm_dataset tdcm_dataset;
typedef struct tdcm_model tdcm_model;
typedef struct tdcm_record tdcm_record;

typedef struct tdcm_metrics {
  double nmi;
  double ari;
  double acc;
} tdcm_metrics;

TDCM_API const char* tdcm_version(void);
TDCM_API const char* tdcm_last_error(void);
TDCM_API const char* tdcm_status_name(tdcm_status status);
TDCM_API void tdcm_string_free(char* s);

/* Configuration: flat key/value document with defaults for every key. */
TDCM_API tdcm_status tdcm_config_new(tdcm_config** out);
TDCM_API tdcm_status tdcm_config_load(const char* path, tdcm_config** out);
TDCM_API tdcm_status tdcm_config_parse(const char* text, tdcm_config** out);
TDCM_API tdcm_status tdcm_config_clone(const tdcm_config* cfg, tdcm_config** out);
TDCM_API tdcm_status tdcm_config_set(tdcm_config* cfg, const char* key, const char* value);
TDCM_API tdcm_status tdcm_config_get(const tdcm_config* cfg, const char* key, char** value);
TDCM_API tdcm_status tdcm_config_validate(const tdcm_config* cfg);
TDCM_API tdcm_status tdcm_config_dump(const tdcm_config* cfg, char** text);
TDCM_API size_t tdcm_config_key_count(void);
TDCM_API tdcm_status tdcm_config_key_info(size_t index, const char** name, const char** default_value,
                                          const char** description);
TDCM_API void tdcm_config_free(tdcm_config* cfg);

/* Datasets: row-major feature matrix with optional integer labels. */
TDCM_API tdcm_status tdcm_dataset_from_array(const double* data, size_t rows, size_t cols, const int* labels,
                                             tdcm_dataset** out);
TDCM_API tdcm_status tdcm_dataset_load(const char* path, int has_labels, tdcm_dataset** out);
TDCM_API tdcm_status tdcm_dataset_save(const tdcm_dataset* ds, const char* path);
TDCM_API tdcm_status tdcm_dataset_shape(const tdcm_dataset* ds, size_t* rows, size_t* cols, int* has_labels);
TDCM_API tdcm_status tdcm_dataset_copy_labels(const tdcm_dataset* ds, int* labels, size_t capacity);
TDCM_API void tdcm_dataset_free(tdcm_dataset* ds);

/* Writes pair_NNN_{source,target}.csv plus one JSON sidecar per CSV
 * (pair_NNN_{source,target}.json) for `num_pairs` pairs into `out_dir`,
 * which must exist. */
TDCM_API tdcm_status tdcm_generate_files(const tdcm_config* cfg, const char* out_dir);
TDCM_API tdcm_status tdcm_generate_pair(const tdcm_config* cfg, size_t pair_index, tdcm_dataset** source,
                                        tdcm_dataset** target);

/* Training, persistence and inference. */
TDCM_API tdcm_status tdcm_train(const tdcm_config* cfg, const tdcm_dataset* source, tdcm_model** out);
TDCM_API tdcm_status tdcm_model_save(const tdcm_model* model, const char* path);
TDCM_API tdcm_status tdcm_model_load(const char* path, tdcm_model** out);
TDCM_API tdcm_status tdcm_model_config(const tdcm_model* model, tdcm_config** out);
TDCM_API tdcm_status tdcm_model_predict(const tdcm_model* model, const tdcm_dataset* ds, int* labels,
                                        size_t capacity);
TDCM_API tdcm_status tdcm_model_trace(const tdcm_model* model, const tdcm_dataset* ds, char** json);
TDCM_API void tdcm_model_free(tdcm_model* model);

/* Run records: source/target metrics of one transfer experiment. The wall
 * time includes training when the model came from tdcm_train in this process. */
TDCM_API tdcm_status tdcm_evaluate(const tdcm_model* model, const tdcm_dataset* source,
                                   const tdcm_dataset* target, tdcm_record** out);
TDCM_API tdcm_status tdcm_run_baseline(const tdcm_config* cfg, const tdcm_dataset* source,
                                       const tdcm_dataset* target, tdcm_record** out);
TDCM_API tdcm_status tdcm_record_metrics(const tdcm_record* rec, tdcm_metrics* source, tdcm_metrics* target,
                                         tdcm_metrics* diff);
TDCM_API tdcm_status tdcm_record_to_json(const tdcm_record* rec, char** json);
TDCM_API tdcm_status tdcm_record_from_json(const char* json, tdcm_record** out);
TDCM_API void tdcm_record_free(tdcm_record* rec);

/* Sweeps generate their own pairs from the configuration. `values` is a
 * comma-separated list; the result is a CSV table. */
TDCM_API tdcm_status tdcm_sweep(const tdcm_config* base, const char* axis, const char* values, char** csv);

/* Table of per-model means over the given records. */
TDCM_API tdcm_status tdcm_report(const tdcm_record* const* records, size_t count, char** table);

TDCM_API tdcm_status tdcm_metrics_compute(const int* predicted, const int* truth, size_t n, tdcm_metrics* out);

#ifdef __cplusplus
}
#endif

#endif
