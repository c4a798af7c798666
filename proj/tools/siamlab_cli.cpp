// Command-line front end. Links only the C API.
#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "siamlab/siamlab.h"

namespace {

constexpr int kHeld = 0;
constexpr int kViolated = 1;
constexpr int kUsage = 2;

/// Errors in what the user asked for exit 2; failures while running exit 1.
int exit_for(siamlab_status s) {
  switch (s) {
    case SIAMLAB_OK: return kHeld;
    case SIAMLAB_ERR_UNKNOWN_PRESET:
    case SIAMLAB_ERR_INVALID_OVERRIDE:
    case SIAMLAB_ERR_INVALID_PARAMETER:
    case SIAMLAB_ERR_MISSING_COLUMN:
    case SIAMLAB_ERR_IO:
    case SIAMLAB_ERR_MALFORMED_FILE:
    case SIAMLAB_ERR_INVALID_ARGUMENT: return kUsage;
    default: return kViolated;
  }
}

int report_error(siamlab_status s) {
  std::cerr << "siamlab: " << siamlab_status_name(s) << ": " << siamlab_last_error() << "\n";
  return exit_for(s);
}

std::vector<const char*> c_strings(const std::vector<std::string>& items) {
  std::vector<const char*> out;
  for (const auto& s : items) out.push_back(s.c_str());
  return out;
}

std::string output_root() {
  const char* env = std::getenv("SIAMLAB_OUT");
  return env && *env ? env : "runs";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Siamese collapse lab: presets, sweeps, plots and self-checks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(siamlab_version()));

  auto* list = app.add_subcommand("list", "List the presets");

  std::string preset;
  std::uint64_t seed = 0;
  std::string out;
  std::string config;
  std::vector<std::string> sets;
  auto* run = app.add_subcommand("run", "Run a preset; exit 0 if its expectation held, 1 if not");
  run->add_option("preset", preset, "Preset name")->required();
  run->add_option("--seed", seed, "Seed");
  run->add_option("--out", out, "Output directory (default $SIAMLAB_OUT/<preset>-seed<N>, else runs/...)");
  run->add_option("--config", config, "key = value file applied before --set")->check(CLI::ExistingFile);
  run->add_option("--set", sets, "Override key=value (repeatable)");

  std::string param;
  std::vector<double> values;
  std::vector<std::uint64_t> seeds{0};
  auto* sweep = app.add_subcommand("sweep", "Sweep tau, eta, sigma or m_ma; writes a long-format CSV");
  sweep->add_option("preset", preset, "Preset name")->required();
  sweep->add_option("--param", param, "tau, eta, sigma or m_ma")->required();
  sweep->add_option("--values", values, "Comma-separated values")->delimiter(',')->required();
  sweep->add_option("--seeds", seeds, "Comma-separated seeds")->delimiter(',');
  sweep->add_option("--out", out, "CSV path (default $SIAMLAB_OUT/sweep-<preset>-<param>.csv)");
  sweep->add_option("--set", sets, "Override key=value (repeatable)");

  std::string csv;
  std::vector<std::string> metrics;
  auto* plot = app.add_subcommand("plot", "Render CSV columns as an SVG line plot");
  plot->add_option("csv", csv, "CSV file")->required()->check(CLI::ExistingFile);
  plot->add_option("--metrics", metrics, "Comma-separated column names")->delimiter(',')->required();
  plot->add_option("--out", out, "SVG path (default: next to the CSV)");

  std::string suite = "all";
  auto* verify = app.add_subcommand("verify", "Run the self-check suites; prints a JSON report");
  verify->add_option("suite", suite, "all, linalg-core, decomposition, losses, network, data, trainer-metrics or cli");
  verify->add_option("--out", out, "Also write the report to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  if (list->parsed()) {
    for (std::size_t i = 0; i < siamlab_preset_count(); ++i) {
      const char *name = nullptr, *ref = nullptr, *desc = nullptr, *expect = nullptr;
      siamlab_preset_info(i, &name, &ref, &desc, &expect);
      std::cout << name << "\t" << ref << "\t" << expect << "\t" << desc << "\n";
    }
    return 0;
  }

  if (run->parsed()) {
    const auto args = c_strings(sets);
    siamlab_run* handle = nullptr;
    const siamlab_status s = siamlab_run_preset(preset.c_str(), seed, out.c_str(), config.c_str(), args.data(),
                                                args.size(), &handle);
    if (s != SIAMLAB_OK) return report_error(s);
    const bool held = siamlab_run_expectation_held(handle);
    std::cout << preset << " seed " << seed << ": " << siamlab_run_summary(handle) << "\n"
              << "expectation (" << siamlab_run_expectation(handle) << ") " << (held ? "held" : "violated") << "\n"
              << "artifacts in " << siamlab_run_out_dir(handle) << "\n";
    siamlab_run_free(handle);
    return held ? kHeld : kViolated;
  }

  if (sweep->parsed()) {
    if (out.empty()) {
      std::filesystem::create_directories(output_root());
      out = (std::filesystem::path(output_root()) / ("sweep-" + preset + "-" + param + ".csv")).string();
    }
    const auto args = c_strings(sets);
    const siamlab_status s = siamlab_sweep(preset.c_str(), param.c_str(), values.data(), values.size(), seeds.data(),
                                           seeds.size(), args.data(), args.size(), out.c_str());
    if (s != SIAMLAB_OK) return report_error(s);
    std::cout << "wrote " << out << "\n";
    return 0;
  }

  if (plot->parsed()) {
    const auto names = c_strings(metrics);
    const char* written = nullptr;
    const siamlab_status s =
        siamlab_render_svg(csv.c_str(), names.data(), names.size(), out.empty() ? nullptr : out.c_str(), &written);
    if (s != SIAMLAB_OK) return report_error(s);
    std::cout << "wrote " << written << "\n";
    return 0;
  }

  siamlab_report* report = nullptr;
  const siamlab_status s = siamlab_verify(suite.c_str(), &report);
  if (s != SIAMLAB_OK) return report_error(s);
  const std::string json = siamlab_report_json(report);
  std::cout << json;
  if (!out.empty()) {
    std::FILE* f = std::fopen(out.c_str(), "w");
    if (!f || std::fputs(json.c_str(), f) < 0) {
      if (f) std::fclose(f);
      siamlab_report_free(report);
      std::cerr << "siamlab: cannot write " << out << "\n";
      return kUsage;
    }
    std::fclose(f);
  }
  const bool passed = siamlab_report_passed(report);
  siamlab_report_free(report);
  return passed ? kHeld : kViolated;
}
