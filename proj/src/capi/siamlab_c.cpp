#include "siamlab/siamlab.h"

#include <fstream>
#include <new>
#include <string>
#include <vector>

#include "core/errors.hpp"
#include "lab/config.hpp"
#include "lab/presets.hpp"
#include "lab/runner.hpp"
#include "lab/verify.hpp"

struct siamlab_run {
  siamlab::RunOutcome outcome;
};

struct siamlab_report {
  siamlab::VerifyReport report;
  std::string json;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_written_path;

siamlab_status to_status(siamlab::ErrorCode code) {
  using siamlab::ErrorCode;
  switch (code) {
    case ErrorCode::UnknownPreset: return SIAMLAB_ERR_UNKNOWN_PRESET;
    case ErrorCode::InvalidOverride: return SIAMLAB_ERR_INVALID_OVERRIDE;
    case ErrorCode::InvalidParameter: return SIAMLAB_ERR_INVALID_PARAMETER;
    case ErrorCode::MissingColumn: return SIAMLAB_ERR_MISSING_COLUMN;
    case ErrorCode::Io: return SIAMLAB_ERR_IO;
    case ErrorCode::MalformedFile:
    case ErrorCode::TruncatedRecord: return SIAMLAB_ERR_MALFORMED_FILE;
    case ErrorCode::DivergedTraining: return SIAMLAB_ERR_DIVERGED;
    case ErrorCode::InvalidArgument:
    case ErrorCode::BadSpec:
    case ErrorCode::BadDims:
    case ErrorCode::InvalidArchitecture:
    case ErrorCode::TooFewViews:
    case ErrorCode::BatchTooSmall:
    case ErrorCode::BatchTooLarge:
    case ErrorCode::TemperatureNonPositive: return SIAMLAB_ERR_INVALID_ARGUMENT;
    case ErrorCode::ZeroNormRow:
    case ErrorCode::ZeroNormVector:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::NonFiniteEvaluation:
    case ErrorCode::SelfNegative:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::IndexOutOfRange: return SIAMLAB_ERR_NUMERIC;
    case ErrorCode::StaleTape:
    case ErrorCode::UntrainedPredictor: return SIAMLAB_ERR_INTERNAL;
  }
  return SIAMLAB_ERR_INTERNAL;
}

siamlab_status fail(siamlab_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename Fn>
siamlab_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return SIAMLAB_OK;
  } catch (const siamlab::Error& e) {
    return fail(to_status(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(SIAMLAB_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SIAMLAB_ERR_INTERNAL, e.what());
  }
}

siamlab::Settings parse_overrides(const char* const* overrides, std::size_t count) {
  if (count > 0 && !overrides) throw siamlab::Error(siamlab::ErrorCode::InvalidArgument, "override list is null");
  siamlab::Settings out;
  for (std::size_t i = 0; i < count; ++i) {
    if (!overrides[i]) throw siamlab::Error(siamlab::ErrorCode::InvalidOverride, "null override");
    out.push_back(siamlab::parse_assignment(overrides[i]));
  }
  return out;
}

void require(const void* p, const char* what) {
  if (!p) throw siamlab::Error(siamlab::ErrorCode::InvalidArgument, std::string(what) + " is null");
}

}  // namespace

extern "C" {

const char* siamlab_version(void) { return "0.1.0"; }

const char* siamlab_status_name(siamlab_status status) {
  switch (status) {
    case SIAMLAB_OK: return "ok";
    case SIAMLAB_ERR_UNKNOWN_PRESET: return "unknown preset";
    case SIAMLAB_ERR_INVALID_OVERRIDE: return "invalid override";
    case SIAMLAB_ERR_INVALID_PARAMETER: return "invalid parameter";
    case SIAMLAB_ERR_MISSING_COLUMN: return "missing column";
    case SIAMLAB_ERR_IO: return "i/o error";
    case SIAMLAB_ERR_MALFORMED_FILE: return "malformed file";
    case SIAMLAB_ERR_DIVERGED: return "training diverged";
    case SIAMLAB_ERR_INVALID_ARGUMENT: return "invalid argument";
    case SIAMLAB_ERR_NUMERIC: return "numeric error";
    case SIAMLAB_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* siamlab_last_error(void) { return g_last_error.c_str(); }

size_t siamlab_preset_count(void) { return siamlab::preset_registry().size(); }

siamlab_status siamlab_preset_info(size_t index, const char** name, const char** reference, const char** description,
                                   const char** expectation) {
  return guarded([&] {
    const auto& reg = siamlab::preset_registry();
    if (index >= reg.size()) throw siamlab::Error(siamlab::ErrorCode::IndexOutOfRange, "preset index out of range");
    const auto& p = reg[index];
    if (name) *name = p.name.c_str();
    if (reference) *reference = p.reference.c_str();
    if (description) *description = p.description.c_str();
    if (expectation) *expectation = siamlab::expectation_text(p.expectation);
  });
}

siamlab_status siamlab_run_preset(const char* preset, uint64_t seed, const char* out_dir, const char* config_path,
                                  const char* const* overrides, size_t override_count, siamlab_run** out) {
  return guarded([&] {
    require(preset, "preset");
    require(out, "output handle");
    *out = nullptr;
    siamlab::RunRequest req;
    req.preset = preset;
    req.seed = seed;
    if (out_dir) req.out_dir = out_dir;
    if (config_path && *config_path) req.config = siamlab::read_config_file(config_path);
    req.overrides = parse_overrides(overrides, override_count);
    auto* run = new siamlab_run{siamlab::run_preset(req)};
    *out = run;
  });
}

int siamlab_run_expectation_held(const siamlab_run* run) { return run && run->outcome.manifest.expectation_held; }
int siamlab_run_collapsed(const siamlab_run* run) { return run && run->outcome.manifest.collapsed; }
const char* siamlab_run_out_dir(const siamlab_run* run) { return run ? run->outcome.manifest.out_dir.c_str() : ""; }
const char* siamlab_run_summary(const siamlab_run* run) { return run ? run->outcome.manifest.summary.c_str() : ""; }
const char* siamlab_run_expectation(const siamlab_run* run) {
  return run ? run->outcome.manifest.expectation.c_str() : "";
}
void siamlab_run_free(siamlab_run* run) { delete run; }

siamlab_status siamlab_sweep(const char* preset, const char* parameter, const double* values, size_t value_count,
                             const uint64_t* seeds, size_t seed_count, const char* const* overrides,
                             size_t override_count, const char* csv_path) {
  return guarded([&] {
    require(preset, "preset");
    require(parameter, "parameter");
    require(csv_path, "csv path");
    if (value_count > 0) require(values, "values");
    if (seed_count > 0) require(seeds, "seeds");
    const std::vector<double> v(values, values + value_count);
    const std::vector<std::uint64_t> s(seeds, seeds + seed_count);
    const auto rows = siamlab::sweep(preset, parameter, v, s, parse_overrides(overrides, override_count));
    std::ofstream file(csv_path);
    if (!file) throw siamlab::Error(siamlab::ErrorCode::Io, std::string("cannot write ") + csv_path);
    siamlab::write_sweep_csv(file, rows);
    if (!file) throw siamlab::Error(siamlab::ErrorCode::Io, std::string("write failed for ") + csv_path);
  });
}

siamlab_status siamlab_render_svg(const char* csv_path, const char* const* metrics, size_t metric_count,
                                  const char* svg_path, const char** written_path) {
  return guarded([&] {
    require(csv_path, "csv path");
    if (metric_count > 0) require(metrics, "metrics");
    std::vector<std::string> names;
    for (size_t i = 0; i < metric_count; ++i) {
      require(metrics[i], "metric name");
      names.emplace_back(metrics[i]);
    }
    g_written_path = siamlab::render_svg_file(csv_path, names, svg_path ? svg_path : "");
    if (written_path) *written_path = g_written_path.c_str();
  });
}

siamlab_status siamlab_verify(const char* suite, siamlab_report** out) {
  return guarded([&] {
    require(suite, "suite");
    require(out, "output handle");
    *out = nullptr;
    auto* r = new siamlab_report{siamlab::verify(suite), {}};
    r->json = r->report.to_json();
    *out = r;
  });
}

int siamlab_report_passed(const siamlab_report* report) { return report && report->report.passed(); }
size_t siamlab_report_failures(const siamlab_report* report) { return report ? report->report.failures() : 0; }
const char* siamlab_report_json(const siamlab_report* report) { return report ? report->json.c_str() : ""; }
void siamlab_report_free(siamlab_report* report) { delete report; }

}  // extern "C"
