#include "core/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "core/decomposition.hpp"
#include "core/errors.hpp"
#include "core/losses.hpp"

namespace siamlab {

double std_metric(const Matrix& Z) {
  if (Z.rows() < 2) throw Error(ErrorCode::BatchTooSmall, "std_metric needs at least two rows");
  const Matrix centered = Z.rowwise() - Z.colwise().mean();
  const Eigen::RowVectorXd var = centered.colwise().squaredNorm() / static_cast<double>(Z.rows() - 1);
  return var.array().sqrt().mean();
}

double std_metric(const NormalizedBatch& Z) { return std_metric(Z.Z); }

double covariance_metric(const Matrix& Z) { return decorrelation_loss(Z).value; }

bool collapse_verdict(double m_o, double std, int dim, const CollapseThresholds& thresholds) {
  return m_o > thresholds.m_o && std < thresholds.std_factor / std::sqrt(static_cast<double>(dim));
}

LinearProbe::LinearProbe(int num_classes, int dim)
    : W(Matrix::Zero(num_classes, dim)), b(Eigen::RowVectorXd::Zero(num_classes)) {
  if (num_classes < 2 || dim < 1) throw Error(ErrorCode::BadDims, "probe needs two classes and a positive width");
}

namespace {

void check_probe_input(const LinearProbe& probe, const Matrix& features, const std::vector<int>& labels) {
  if (features.cols() != probe.W.cols()) throw Error(ErrorCode::DimensionMismatch, "probe feature width differs");
  if (static_cast<std::size_t>(features.rows()) != labels.size() || labels.empty()) {
    throw Error(ErrorCode::ShapeMismatch, "one label per feature row required");
  }
  for (int label : labels) {
    if (label < 0 || label >= probe.num_classes()) throw Error(ErrorCode::IndexOutOfRange, "label out of range");
  }
}

Matrix logits_of(const LinearProbe& probe, const Matrix& features) {
  Matrix logits = features * probe.W.transpose();
  logits.rowwise() += probe.b;
  return logits;
}

double accuracy_of(const Matrix& logits, const std::vector<int>& labels) {
  int correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    if (best == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

}  // namespace

double probe_update(LinearProbe& probe, const Matrix& features, const std::vector<int>& labels, double lr) {
  check_probe_input(probe, features, labels);
  Matrix probs = logits_of(probe, features);
  const double acc = accuracy_of(probs, labels);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    probs.row(i).array() -= probs.row(i).maxCoeff();
    probs.row(i) = probs.row(i).array().exp().matrix();
    probs.row(i) /= probs.row(i).sum();
    probs(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  }
  probs /= static_cast<double>(features.rows());
  probe.W -= lr * (probs.transpose() * features);
  probe.b -= lr * probs.colwise().sum();
  return acc;
}

double probe_accuracy(const LinearProbe& probe, const Matrix& features, const std::vector<int>& labels) {
  check_probe_input(probe, features, labels);
  return accuracy_of(logits_of(probe, features), labels);
}

BiasProbeResult bias_center_probe(const Vector& b_p, std::span<const BiasProbeBatch> history) {
  if (history.empty()) throw Error(ErrorCode::UntrainedPredictor, "no batches recorded for the bias probe");
  if (b_p.norm() <= kZeroNorm) throw Error(ErrorCode::UntrainedPredictor, "bias vector is zero");
  BiasProbeResult out;
  out.o_z = Vector::Zero(b_p.size());
  double m_sum = 0.0;
  std::size_t m_count = 0;
  for (const auto& batch : history) {
    require_same_shape(batch.Z_a, batch.Z_b, "bias_center_probe");
    require_same_shape(batch.Z_a, batch.p_a, "bias_center_probe");
    if (batch.Z_a.cols() != b_p.size()) throw Error(ErrorCode::DimensionMismatch, "bias width differs from batch");
    out.o_z += batch_center(batch.Z_a);
    for (Eigen::Index i = 0; i < batch.Z_a.rows(); ++i) {
      const Vector za = row_vector(batch.Z_a, i);
      const Vector zb = row_vector(batch.Z_b, i);
      m_sum += cosine_sim(za, zb) / batch.p_a.row(i).norm();
      ++m_count;
    }
  }
  out.o_z /= static_cast<double>(history.size());
  out.m_bar = m_sum / static_cast<double>(m_count);
  out.cossim = cosine_sim(b_p, out.o_z);
  const Vector fixed_point = ((1.0 - out.m_bar) / out.m_bar) * out.o_z;
  out.residual = (b_p - fixed_point).norm() / b_p.norm();
  return out;
}

namespace {

std::optional<double> flat_cosine(const Matrix& a, const Matrix& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na <= kZeroNorm || nb <= kZeroNorm) return std::nullopt;
  return std::clamp(a.cwiseProduct(b).sum() / (na * nb), -1.0, 1.0);
}

}  // namespace

std::vector<AlignmentRow> decorrelation_alignment_probe(const Matrix& Z_a, const Matrix& Z_b,
                                                        std::span<const double> taus) {
  require_same_shape(Z_a, Z_b, "decorrelation_alignment_probe");
  if (Z_a.rows() < 8) throw Error(ErrorCode::BatchTooSmall, "alignment probe needs a batch of at least 8");
  const Matrix descent = -decorrelation_loss(Z_a).grad;
  std::vector<AlignmentRow> rows;
  for (double tau : taus) {
    const InfoNceDecomposition parts = infonce_decomposition(Z_a, Z_b, tau);
    Matrix o_e(Z_a.rows(), Z_a.cols());
    o_e.rowwise() = parts.o_e.transpose();
    AlignmentRow row;
    row.tau = tau;
    row.r_e = flat_cosine(parts.r_e, descent);
    row.o_e = flat_cosine(o_e, descent);
    row.degenerate = !row.r_e.has_value();
    rows.push_back(row);
  }
  return rows;
}

}  // namespace siamlab
