#ifndef SIAMLAB_SIAMLAB_H
#define SIAMLAB_SIAMLAB_H

#include <stddef.h>
#include <stdint.h>

#if defined(SIAMLAB_BUILDING)
#define SIAMLAB_API __attribute__((visibility("default")))
#else
#define SIAMLAB_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum siamlab_status {
  SIAMLAB_OK = 0,
  SIAMLAB_ERR_UNKNOWN_PRESET = 1,
  SIAMLAB_ERR_INVALID_OVERRIDE = 2,
  SIAMLAB_ERR_INVALID_PARAMETER = 3,
  SIAMLAB_ERR_MISSING_COLUMN = 4,
  SIAMLAB_ERR_IO = 5,
  SIAMLAB_ERR_MALFORMED_FILE = 6,
  SIAMLAB_ERR_DIVERGED = 7,
  SIAMLAB_ERR_INVALID_ARGUMENT = 8,
  SIAMLAB_ERR_NUMERIC = 9,  /* zero-norm rows, shape and dimension errors, non-finite values */
  SIAMLAB_ERR_INTERNAL = 10
} siamlab_status;

/* Opaque handles. */
typedef struct siamlab_run siamlab_run;
typedef struct siamlab_report siamlab_report;

SIAMLAB_API const char* siamlab_version(void);
SIAMLAB_API const char* siamlab_status_name(siamlab_status status);
/* Message of the last failed call on this thread; "" if none. */
SIAMLAB_API const char* siamlab_last_error(void);

/* Preset registry. Strings stay valid for the life of the process. */
SIAMLAB_API size_t siamlab_preset_count(void);
SIAMLAB_API siamlab_status siamlab_preset_info(size_t index, const char** name, const char** reference,
                                               const char** description, const char** expectation);

/* Runs a preset and writes its artifacts and manifest.json into out_dir
 * (NULL or "": $SIAMLAB_OUT/<preset>-seed<N>, falling back to runs/).
 * config_path (may be NULL) is a key = value file applied before the
 * overrides, each of which is a "key=value" string. */
SIAMLAB_API siamlab_status siamlab_run_preset(const char* preset, uint64_t seed, const char* out_dir,
                                              const char* config_path, const char* const* overrides,
                                              size_t override_count, siamlab_run** out);
SIAMLAB_API int siamlab_run_expectation_held(const siamlab_run* run);
SIAMLAB_API int siamlab_run_collapsed(const siamlab_run* run);
SIAMLAB_API const char* siamlab_run_out_dir(const siamlab_run* run);
SIAMLAB_API const char* siamlab_run_summary(const siamlab_run* run);
SIAMLAB_API const char* siamlab_run_expectation(const siamlab_run* run);
SIAMLAB_API void siamlab_run_free(siamlab_run* run);

/* Sweeps parameter ("tau", "eta", "sigma", "m_ma") over values and seeds and
 * writes the long-format CSV (value,seed,metric,step,reading) to csv_path. */
SIAMLAB_API siamlab_status siamlab_sweep(const char* preset, const char* parameter, const double* values,
                                         size_t value_count, const uint64_t* seeds, size_t seed_count,
                                         const char* const* overrides, size_t override_count, const char* csv_path);

/* Plots the named CSV columns against the first column. svg_path may be NULL
 * to write next to the CSV. written_path, if not NULL, receives the path;
 * it stays valid until the next call on this thread. */
SIAMLAB_API siamlab_status siamlab_render_svg(const char* csv_path, const char* const* metrics, size_t metric_count,
                                              const char* svg_path, const char** written_path);

/* suite: "all" or a module name. Check failures are report content. */
SIAMLAB_API siamlab_status siamlab_verify(const char* suite, siamlab_report** out);
SIAMLAB_API int siamlab_report_passed(const siamlab_report* report);
SIAMLAB_API size_t siamlab_report_failures(const siamlab_report* report);
SIAMLAB_API const char* siamlab_report_json(const siamlab_report* report);
SIAMLAB_API void siamlab_report_free(siamlab_report* report);

#ifdef __cplusplus
}
#endif

#endif
