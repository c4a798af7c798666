#pragma once

#include <optional>
#include <span>
#include <vector>

#include "core/linalg.hpp"

namespace siamlab {

/// Mean over dimensions of the per-dimension (unbiased) standard deviation
/// across the batch. A healthy unit-norm batch sits near 1/sqrt(D).
double std_metric(const Matrix& Z);
double std_metric(const NormalizedBatch& Z);

/// Decorrelation-loss value, no gradient.
double covariance_metric(const Matrix& Z);

struct CollapseThresholds {
  double m_o = 0.99;
  /// Std must fall below std_factor / sqrt(D).
  double std_factor = 0.1;
};

bool collapse_verdict(double m_o, double std, int dim, const CollapseThresholds& thresholds = {});

/// Softmax regression on detached features.
struct LinearProbe {
  LinearProbe() = default;
  LinearProbe(int num_classes, int dim);

  Matrix W;                // K x D
  Eigen::RowVectorXd b;    // 1 x K

  int num_classes() const { return static_cast<int>(W.rows()); }
};

/// One SGD step on the mean cross-entropy; returns the accuracy on the batch
/// before the step.
double probe_update(LinearProbe& probe, const Matrix& features, const std::vector<int>& labels, double lr);
double probe_accuracy(const LinearProbe& probe, const Matrix& features, const std::vector<int>& labels);

/// One batch of evidence for the bias-layer fixed point: normalized views and
/// the raw predictor output p_a = Z_a + b_p.
struct BiasProbeBatch {
  Matrix Z_a;
  Matrix Z_b;
  Matrix p_a;
};

struct BiasProbeResult {
  double cossim = 0.0;
  double residual = 0.0;
  double m_bar = 0.0;
  Vector o_z;
};

/// cossim(b_p, o_z) and ||b_p - ((1 - m)/m) o_z|| / ||b_p|| with
/// m = mean_i cossim(Z_a[i], Z_b[i]) / ||p_a[i]||, o_z and m averaged over
/// every batch in the history.
BiasProbeResult bias_center_probe(const Vector& b_p, std::span<const BiasProbeBatch> history);

struct AlignmentRow {
  double tau = 0.0;
  std::optional<double> r_e;
  std::optional<double> o_e;
  bool degenerate = false;
};

/// Cosine between the InfoNCE r_e (and o_e) components on Z_a and the
/// descent direction of the decorrelation loss on Z_a, per temperature.
std::vector<AlignmentRow> decorrelation_alignment_probe(const Matrix& Z_a, const Matrix& Z_b,
                                                        std::span<const double> taus);

}  // namespace siamlab
