#pragma once

#include <optional>
#include <vector>

#include "core/linalg.hpp"

namespace siamlab {

/// Z = o + r split of a batch. m_o and m_r are the center and RMS residual
/// norms relative to the RMS row norm, so m_o^2 + m_r^2 = 1 for any batch.
struct CenterResidual {
  Vector center;
  Matrix residuals;
  double m_o = 0.0;
  double m_r = 0.0;
};

CenterResidual decompose(const Matrix& Z);
CenterResidual decompose(const NormalizedBatch& Z);

/// Column mean of a batch.
Vector batch_center(const Matrix& Z);

/// full_target = basic + extra, extra = o_e (broadcast) + r_e.
struct GradientDecomposition {
  Matrix basic;
  Matrix extra;
  Vector o_e;
  Matrix r_e;
};

GradientDecomposition decompose_gradient(const Matrix& full_target, const Matrix& basic);

/// Which pieces of the extra gradient survive into a surgical target.
struct Surgery {
  bool keep_o_e = true;
  bool keep_r_e = true;

  bool full() const { return keep_o_e && keep_r_e; }
  friend bool operator==(const Surgery&, const Surgery&) = default;
};

/// basic + [o_e] + [r_e]. The result is meant to be used as a detached target.
Matrix compose_target(const Matrix& basic, const GradientDecomposition& decomp, Surgery surgery);

struct EtaSweepResult {
  Vector grid;
  /// cossim(o_e - eta * o_ref, o_ref) per grid point; empty where the
  /// difference vector degenerates.
  std::vector<std::optional<double>> similarities;
  std::optional<double> zero_crossing;
};

/// 64 evenly spaced points over [-2, 2].
Vector default_eta_grid();

EtaSweepResult eta_sweep(const Vector& o_e, const Vector& o_ref, const Vector& grid);

}  // namespace siamlab
