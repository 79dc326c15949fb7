#ifndef DTSDA_H
#define DTSDA_H

/* C interface to the toolkit. Every function returning int returns a
 * dtsda_status; on failure dtsda_last_error() describes the problem (the
 * message is per thread and valid until the next call on that thread). */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DTSDA_API __declspec(dllexport)
#else
#define DTSDA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dtsda_status {
  DTSDA_OK = 0,
  DTSDA_ERR_INTERNAL = 1,
  DTSDA_ERR_CONFIG = 2,
  DTSDA_ERR_DATA = 3,
  DTSDA_ERR_NUMERIC = 4
} dtsda_status;

typedef enum dtsda_method { DTSDA_METHOD_DTSDA = 0, DTSDA_METHOD_DANN = 1, DTSDA_METHOD_SOURCE_ONLY = 2 } dtsda_method;

typedef struct dtsda_model dtsda_model;

typedef struct dtsda_model_info {
  int method;
  size_t classes;
  size_t states;
  size_t channels;
  size_t window_len;
  uint64_t seed;
} dtsda_model_info;

/* Called once per finished (task, method) during dtsda_run_experiment. */
typedef void (*dtsda_progress_fn)(const char* task, const char* method, double accuracy, void* user);

DTSDA_API const char* dtsda_version(void);
DTSDA_API const char* dtsda_last_error(void);

/* Writes recordings.csv, activities.csv and states.csv into out_dir.
 * spec_path (key,value CSV) may be NULL for the default generator settings;
 * seed_override < 0 keeps the spec's seed. */
DTSDA_API int dtsda_synthesize(const char* spec_path, int64_t seed_override, const char* out_dir);

/* Trains on data_dir for source -> target. config_path (key=value, may be
 * NULL) takes the training keys plus seed, window_seconds, overlap and
 * sampling_rate. log_csv_path (may be NULL) receives the per-epoch log. */
DTSDA_API int dtsda_train(const char* data_dir, const char* source_user, const char* target_user,
                          const char* config_path, int method, const char* log_csv_path, dtsda_model** out);

DTSDA_API int dtsda_model_save(dtsda_model* model, const char* path);
DTSDA_API int dtsda_model_load(const char* path, dtsda_model** out);
DTSDA_API void dtsda_model_free(dtsda_model* model);
DTSDA_API int dtsda_model_info_get(const dtsda_model* model, dtsda_model_info* out);

/* windows: count raw (unnormalised) windows of channels × window_len
 * doubles, channel-major. Writes count class indices. */
DTSDA_API int dtsda_model_predict(dtsda_model* model, const double* windows, size_t count, int* out_labels);

/* Scores the model on every recording of target_user in data_dir. When
 * out_dir is non-NULL, writes results.csv, summary.csv and confusion files
 * there. accuracy may be NULL. */
DTSDA_API int dtsda_evaluate(dtsda_model* model, const char* data_dir, const char* target_user, const char* out_dir,
                             double* accuracy);

/* Runs every ordered user pair for every configured method and writes the
 * reports into out_dir. progress may be NULL. */
DTSDA_API int dtsda_run_experiment(const char* config_path, const char* out_dir, dtsda_progress_fn progress,
                                   void* user);

/* Pseudo temporal state labelling of a feature CSV (segment, order,
 * feature_*); writes it back with a state column. */
DTSDA_API int dtsda_label(const char* in_csv, const char* out_csv, size_t states, double gamma, uint64_t seed);

#ifdef __cplusplus
}
#endif

#endif
