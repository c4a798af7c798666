#pragma once

#include <string>
#include <vector>

namespace siamlab {

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyReport {
  std::string suite;
  std::vector<CheckResult> checks;
  double seconds = 0.0;

  bool passed() const;
  std::size_t failures() const;
  std::string to_json() const;
};

/// linalg-core, decomposition, losses, network, data, trainer-metrics, cli.
std::vector<std::string> verify_suites();

/// Runs one module suite, or every suite plus one seed-0 run of each preset
/// for "all". Failures are report content; an unknown suite name throws
/// InvalidParameter.
VerifyReport verify(const std::string& suite);

}  // namespace siamlab
