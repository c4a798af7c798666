#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "core/data.hpp"
#include "core/trainer.hpp"

namespace siamlab {

enum class DataSource { Synthetic, Csv, Cifar };

struct DataSpec {
  DataSource source = DataSource::Synthetic;
  SyntheticSpec synthetic;
  std::string path;
  int cifar_subset = 0;  // 0 keeps every record
};

/// Everything a single training run depends on besides the seed.
struct RunSpec {
  ArchitectureSpec arch;
  TrainConfig train;
  DataSpec data;
};

using Settings = std::vector<std::pair<std::string, std::string>>;

/// Sets one dotted key. Throws InvalidOverride for unknown keys or values
/// that do not parse.
void apply_setting(RunSpec& spec, const std::string& key, const std::string& value);
void apply_settings(RunSpec& spec, const Settings& settings);

/// Every key with its current value, in a fixed order.
Settings describe(const RunSpec& spec);
std::vector<std::string> setting_keys();

/// "key=value" -> pair. Throws InvalidOverride.
std::pair<std::string, std::string> parse_assignment(const std::string& text);

/// Flat key = value lines; '#' starts a comment; blank lines are skipped.
Settings parse_config(std::istream& in);
Settings read_config_file(const std::string& path);

/// Seeds both training and synthetic data generation.
void set_seed(RunSpec& spec, std::uint64_t seed);

Dataset load_dataset(const DataSpec& spec);

std::string format_double(double v);

}  // namespace siamlab
