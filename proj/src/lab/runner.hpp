#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lab/config.hpp"
#include "lab/presets.hpp"

namespace siamlab {

struct RunRequest {
  std::string preset;
  std::uint64_t seed = 0;
  std::string out_dir;      // empty: $SIAMLAB_OUT/<preset>-seed<N>, else runs/<preset>-seed<N>
  Settings config;          // from a config file, applied before overrides
  Settings overrides;
};

struct RunManifest {
  std::string out_dir;
  std::string preset;
  std::uint64_t seed = 0;
  Settings overrides;
  std::string started;
  std::string finished;
  std::vector<std::pair<std::string, std::string>> artifacts;  // role -> path
  std::string expectation;
  bool expectation_held = false;
  bool collapsed = false;
  std::string summary;
};

struct RunOutcome {
  RunManifest manifest;
  PresetResult result;
};

/// Preset spec, then seed, then config-file settings, then overrides.
RunSpec resolve_spec(const Preset& preset, std::uint64_t seed, const Settings& config, const Settings& overrides);

/// Runs a preset and writes trajectory.csv, trajectory.svg, checkpoint.txt,
/// any preset tables and, last, manifest.json (atomically via rename).
RunOutcome run_preset(const RunRequest& request);

std::string default_output_root();

/// Sweep-enabled parameters: tau, eta, sigma, m_ma.
std::vector<std::string> sweep_parameters();

struct SweepRow {
  double value;
  std::uint64_t seed;
  std::string metric;
  int step;
  double reading;
};

inline constexpr const char* kSweepHeader = "value,seed,metric,step,reading";

/// One run per (value, seed), except eta: one trained run per seed with the
/// values used as the eta grid. Throws InvalidParameter.
std::vector<SweepRow> sweep(const std::string& preset, const std::string& parameter, const std::vector<double>& values,
                            const std::vector<std::uint64_t>& seeds, const Settings& overrides = {});
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::optional<double>>> rows;

  /// Index of a column; throws MissingColumn.
  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

/// Static SVG line plot: x is the first column, one polyline per metric,
/// a legend when there is more than one. Throws MissingColumn.
std::string render_svg(const CsvTable& table, const std::vector<std::string>& metrics);
/// Reads csv_path and writes the plot next to it (same stem, .svg) unless
/// svg_path is given. Returns the written path.
std::string render_svg_file(const std::string& csv_path, const std::vector<std::string>& metrics,
                            const std::string& svg_path = {});

}  // namespace siamlab
