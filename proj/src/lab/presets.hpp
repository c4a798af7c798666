#pragma once

#include <optional>
#include <string>
#include <vector>

#include "core/linalg.hpp"
#include "core/trainer.hpp"
#include "lab/config.hpp"

namespace siamlab {

/// What a preset is expected to show. Verdict kinds read the collapse
/// verdict; the others read preset-specific findings.
enum class Expectation {
  Collapse,
  NoCollapse,
  CenterGrows,      // m_o at the end of the window above m_o at its start
  ResidualGrows,    // same for m_r
  EtaSigns,         // o_p crossing < 0, mirror-direction o_z crossing > 0
  Recovery,         // collapse phase reaches m_r < 0.1, regularizer phase ends with m_r > 0.5
  Alignment,        // r_e alignment above o_e alignment at tau 0.1 and 0.2
  CovarianceFalls,  // final covariance below the step-100 value
  CovarianceHolds,  // final covariance at or above the step-100 value
  BiasFixedPoint,   // cossim(b_p, o_z) >= 0.95 and fixed-point residual < 0.2
  BiasAligned,      // cossim(last predictor bias, o_z) >= 0.5
};

const char* expectation_text(Expectation e);

struct Preset {
  std::string name;
  std::string reference;  // table or figure the preset mirrors
  std::string description;
  RunSpec spec;
  Expectation expectation;
};

const std::vector<Preset>& preset_registry();
/// Throws UnknownPreset.
const Preset& find_preset(const std::string& name);

struct Finding {
  std::string name;
  double value;
};

/// Extra per-preset CSV output.
struct Table {
  std::string file;
  std::vector<std::string> columns;
  std::vector<std::vector<std::optional<double>>> rows;
};

/// Batch centers of Z and P on a trained SimSiam, averaged over batches.
struct CenterPair {
  Vector o_z;
  Vector o_p;
};

struct PresetResult {
  RunRecord record;
  std::string checkpoint;
  bool expectation_held = false;
  std::string summary;
  std::vector<Finding> findings;
  std::vector<Table> tables;
  std::optional<CenterPair> centers;

  std::optional<double> finding(const std::string& name) const;
};

/// Phase lengths of the collapse-then-regularize preset.
inline constexpr int kRecoveryWarmPhase = 500;
inline constexpr int kRecoveryCollapseBudget = 1000;
inline constexpr double kRecoveryCollapseTarget = 0.1;
inline constexpr double kRecoveryTarget = 0.5;

/// Metrics window of the probe-loss presets: records at steps 50 and 550.
inline constexpr int kProbeWindowStart = 50;
inline constexpr int kProbeWindow = 500;

/// Runs the preset's experiment on the given spec (normally preset.spec with
/// overrides and seed applied).
PresetResult execute(const Preset& preset, const RunSpec& spec);

/// Alignment temperatures reported by the alignment preset.
std::vector<double> alignment_taus();

}  // namespace siamlab
