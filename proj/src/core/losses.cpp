#include "core/losses.hpp"

#include <cmath>
#include <string>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace siamlab {

const char* loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::Cosine: return "cosine";
    case LossKind::RawMSE: return "raw-mse";
    case LossKind::SimSiam: return "simsiam";
    case LossKind::Mirror: return "mirror";
    case LossKind::Triplet: return "triplet";
    case LossKind::InfoNCE: return "infonce";
    case LossKind::Decorrelation: return "decorrelation";
    case LossKind::ProbeCenter: return "probe-center";
    case LossKind::ProbeResidual: return "probe-residual";
  }
  return "unknown";
}

std::optional<LossKind> parse_loss_kind(const std::string& name) {
  for (auto kind : {LossKind::Cosine, LossKind::RawMSE, LossKind::SimSiam, LossKind::Mirror, LossKind::Triplet,
                    LossKind::InfoNCE, LossKind::Decorrelation, LossKind::ProbeCenter, LossKind::ProbeResidual}) {
    if (name == loss_kind_name(kind)) return kind;
  }
  return std::nullopt;
}

namespace {

double mean_row_dot(const Matrix& a, const Matrix& b) {
  return a.cwiseProduct(b).sum() / static_cast<double>(a.rows());
}

}  // namespace

LossOutput cosine_loss(const NormalizedBatch& Z_a, const Matrix& target) {
  require_same_shape(Z_a.Z, target, "cosine_loss");
  LossOutput out;
  out.value = -mean_row_dot(Z_a.Z, target);
  out.grad = -target / static_cast<double>(Z_a.rows());
  return out;
}

Matrix simsiam_target(const Matrix& P_other, const Matrix& Z_other, Surgery surgery) {
  if (surgery.full()) return Z_other;
  return compose_target(P_other, decompose_gradient(Z_other, P_other), surgery);
}

PairLossOutput simsiam_loss(const NormalizedBatch& P_a, const NormalizedBatch& P_b, const NormalizedBatch& Z_a,
                            const NormalizedBatch& Z_b, Surgery surgery) {
  require_same_shape(P_a.Z, P_b.Z, "simsiam_loss");
  require_same_shape(P_a.Z, Z_a.Z, "simsiam_loss");
  require_same_shape(P_a.Z, Z_b.Z, "simsiam_loss");
  const Matrix target_a = simsiam_target(P_b.Z, Z_b.Z, surgery);
  const Matrix target_b = simsiam_target(P_a.Z, Z_a.Z, surgery);
  const double scale = 2.0 * static_cast<double>(P_a.rows());
  PairLossOutput out;
  out.value = -(mean_row_dot(P_a.Z, target_a) + mean_row_dot(P_b.Z, target_b)) / 2.0;
  out.grad_a = -target_a / scale;
  out.grad_b = -target_b / scale;
  return out;
}

MirrorLossOutput mirror_loss(const NormalizedBatch& P_a, const NormalizedBatch& P_b, const NormalizedBatch& Z_a,
                             const NormalizedBatch& Z_b) {
  require_same_shape(P_a.Z, P_b.Z, "mirror_loss");
  require_same_shape(P_a.Z, Z_a.Z, "mirror_loss");
  require_same_shape(P_a.Z, Z_b.Z, "mirror_loss");
  const double scale = 2.0 * static_cast<double>(P_a.rows());
  MirrorLossOutput out;
  out.value = -(mean_row_dot(P_a.Z, Z_b.Z) + mean_row_dot(P_b.Z, Z_a.Z)) / 2.0;
  out.grad_z_a = -P_b.Z / scale;
  out.grad_z_b = -P_a.Z / scale;
  out.grad_p_a = -Z_b.Z / scale;
  out.grad_p_b = -Z_a.Z / scale;
  return out;
}

std::vector<int> draw_negatives(int batch, Rng& rng) {
  if (batch < 2) throw Error(ErrorCode::BatchTooSmall, "negatives need a batch of at least two");
  std::vector<int> perm(static_cast<std::size_t>(batch));
  for (;;) {
    for (int i = 0; i < batch; ++i) perm[static_cast<std::size_t>(i)] = i;
    rng.shuffle(perm);
    bool has_fixed_point = false;
    for (int i = 0; i < batch && !has_fixed_point; ++i) has_fixed_point = perm[static_cast<std::size_t>(i)] == i;
    if (!has_fixed_point) return perm;
  }
}

LossOutput triplet_loss(const NormalizedBatch& Z_a, const NormalizedBatch& Z_b, std::span<const int> negatives,
                        Surgery surgery) {
  require_same_shape(Z_a.Z, Z_b.Z, "triplet_loss");
  const Eigen::Index rows = Z_a.rows();
  if (static_cast<Eigen::Index>(negatives.size()) != rows) {
    throw Error(ErrorCode::ShapeMismatch, "triplet_loss: one negative index per row required");
  }
  Matrix Z_n(rows, Z_b.cols());
  for (Eigen::Index i = 0; i < rows; ++i) {
    const int j = negatives[static_cast<std::size_t>(i)];
    if (j < 0 || j >= rows) throw Error(ErrorCode::IndexOutOfRange, "triplet_loss: negative index out of range");
    if (j == i) throw Error(ErrorCode::SelfNegative, "triplet_loss: row " + std::to_string(i) + " is its own negative");
    Z_n.row(i) = Z_b.Z.row(j);
  }
  const Matrix full = Z_b.Z - Z_n;
  const Matrix target = surgery.full() ? full : compose_target(Z_b.Z, decompose_gradient(full, Z_b.Z), surgery);
  return cosine_loss(Z_a, target);
}

namespace {

Matrix row_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double peak = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - peak).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

void check_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::TemperatureNonPositive, "temperature must be a positive finite number");
  }
}

}  // namespace

InfoNceDecomposition infonce_decomposition(const Matrix& Z_a, const Matrix& Z_b, double temperature) {
  check_temperature(temperature);
  require_same_shape(Z_a, Z_b, "infonce_decomposition");
  InfoNceDecomposition out;
  out.lambda = row_softmax((Z_a * Z_b.transpose()) / temperature);
  out.o_z = batch_center(Z_b);
  const Matrix residuals = Z_b.rowwise() - out.o_z.transpose();
  out.r_e = -(out.lambda * residuals);
  out.o_e = -out.o_z;
  return out;
}

double mean_row_entropy(const Matrix& weights) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < weights.rows(); ++i) {
    for (Eigen::Index j = 0; j < weights.cols(); ++j) {
      const double w = weights(i, j);
      if (w > 0.0) total -= w * std::log(w);
    }
  }
  return total / static_cast<double>(weights.rows());
}

LossOutput infonce_loss(const NormalizedBatch& Z_a, const NormalizedBatch& Z_b, double temperature,
                        Surgery surgery) {
  check_temperature(temperature);
  require_same_shape(Z_a.Z, Z_b.Z, "infonce_loss");
  const Eigen::Index rows = Z_a.rows();
  if (rows < 2) throw Error(ErrorCode::BatchTooSmall, "infonce_loss needs at least one negative");
  const double m = static_cast<double>(rows);

  const InfoNceDecomposition parts = infonce_decomposition(Z_a.Z, Z_b.Z, temperature);

  LossOutput out;
  Matrix ordered(rows, rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    ordered(i, 0) = parts.lambda(i, i);
    Eigen::Index col = 1;
    for (Eigen::Index j = 0; j < rows; ++j) {
      if (j != i) ordered(i, col++) = parts.lambda(i, j);
    }
  }
  out.lambda = std::move(ordered);

  if (surgery.full()) {
    double value = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i) value -= std::log(parts.lambda(i, i));
    out.value = value / m;
    out.grad = -(Z_b.Z - parts.lambda * Z_b.Z) / (temperature * m);
    return out;
  }

  Matrix target = Z_b.Z;
  if (surgery.keep_o_e) target.rowwise() += parts.o_e.transpose();
  if (surgery.keep_r_e) target += parts.r_e;
  target /= temperature;
  out.value = -mean_row_dot(Z_a.Z, target);
  out.grad = -target / m;
  return out;
}

LossOutput decorrelation_loss(const Matrix& Z) {
  const Eigen::Index rows = Z.rows();
  if (rows < 2) throw Error(ErrorCode::BatchTooSmall, "decorrelation_loss needs at least two rows");
  const double dim = static_cast<double>(Z.cols());
  const Matrix centered = Z.rowwise() - Z.colwise().mean();
  Matrix cov = (centered.transpose() * centered) / static_cast<double>(rows - 1);
  cov.diagonal().setZero();
  LossOutput out;
  out.value = cov.squaredNorm() / dim;
  out.grad = (4.0 / (static_cast<double>(rows - 1) * dim)) * (centered * cov);
  return out;
}

LossOutput probe_loss(const NormalizedBatch& Z_a, ProbeMode mode) {
  if (Z_a.rows() < 2) throw Error(ErrorCode::BatchTooSmall, "probe_loss needs at least two rows");
  const Vector center = batch_center(Z_a.Z);
  Matrix target(Z_a.rows(), Z_a.cols());
  if (mode == ProbeMode::Center) {
    target.rowwise() = center.transpose();
  } else {
    target = Z_a.Z.rowwise() - center.transpose();
  }
  return cosine_loss(Z_a, target);
}

LossOutput raw_mse_loss(const Matrix& z_a, const Matrix& z_b_detached) {
  require_same_shape(z_a, z_b_detached, "raw_mse_loss");
  const double count = static_cast<double>(z_a.size());
  const Matrix diff = z_a - z_b_detached;
  LossOutput out;
  out.value = diff.squaredNorm() / count;
  out.grad = diff * (2.0 / count);
  return out;
}

}  // namespace siamlab
