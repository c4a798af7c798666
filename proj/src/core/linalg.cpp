#include "core/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "core/errors.hpp"

namespace siamlab {

namespace testing_hooks {
// Mutation-test hook: when set, normalize_backward drops the projection term.
bool g_break_normalize_backward = false;
}  // namespace testing_hooks

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(what) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                    " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

NormalizedBatch l2_normalize(const Matrix& batch) {
  NormalizedBatch out;
  out.Z.resize(batch.rows(), batch.cols());
  out.raw_norms.resize(batch.rows());
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    const double norm = batch.row(i).norm();
    if (!(norm > kZeroNorm)) {
      throw Error(ErrorCode::ZeroNormRow, "row " + std::to_string(i) + " has norm " + std::to_string(norm));
    }
    out.raw_norms(i) = norm;
    out.Z.row(i) = batch.row(i) / norm;
  }
  return out;
}

Matrix normalize_backward(const Matrix& grad_on_Z, const Matrix& raw, const Vector& raw_norms) {
  require_same_shape(grad_on_Z, raw, "normalize_backward");
  if (raw_norms.size() != raw.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "normalize_backward: raw_norms length differs from row count");
  }
  Matrix out(raw.rows(), raw.cols());
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    const double norm = raw_norms(i);
    if (!(norm > kZeroNorm)) throw Error(ErrorCode::ZeroNormRow, "normalize_backward: zero raw norm");
    const auto unit = raw.row(i) / norm;
    const double along = grad_on_Z.row(i).dot(unit);
    if (testing_hooks::g_break_normalize_backward) {
      out.row(i) = grad_on_Z.row(i) / norm;
    } else {
      out.row(i) = (grad_on_Z.row(i) - along * unit) / norm;
    }
  }
  return out;
}

namespace {
void require_nonzero(double norm, const char* which) {
  if (!(norm > kZeroNorm)) throw Error(ErrorCode::ZeroNormVector, std::string(which) + " has zero norm");
}
}  // namespace

double cosine_sim(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "cosine_sim: length mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  require_nonzero(na, "a");
  require_nonzero(nb, "b");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

Vector cosine_sim_grad(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "cosine_sim_grad: length mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  require_nonzero(na, "a");
  require_nonzero(nb, "b");
  const double cos = a.dot(b) / (na * nb);
  return b / (na * nb) - cos * a / (na * na);
}

namespace {
void check_step(double step) {
  if (!(step >= 1e-7 && step <= 1e-3)) {
    throw Error(ErrorCode::InvalidArgument, "finite difference step must lie in [1e-7, 1e-3]");
  }
}

double evaluate(const auto& fn, const auto& x) {
  const double v = fn(x);
  if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteEvaluation, "objective returned a non-finite value");
  return v;
}
}  // namespace

Vector finite_diff_grad(const ScalarFn& fn, const Vector& point, double step) {
  check_step(step);
  Vector x = point;
  Vector grad(point.size());
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    const double orig = x(i);
    x(i) = orig + step;
    const double up = evaluate(fn, x);
    x(i) = orig - step;
    const double down = evaluate(fn, x);
    x(i) = orig;
    grad(i) = (up - down) / (2.0 * step);
  }
  return grad;
}

Matrix finite_diff_grad(const MatrixScalarFn& fn, const Matrix& point, double step) {
  check_step(step);
  Matrix x = point;
  Matrix grad(point.rows(), point.cols());
  for (Eigen::Index r = 0; r < point.rows(); ++r) {
    for (Eigen::Index c = 0; c < point.cols(); ++c) {
      const double orig = x(r, c);
      x(r, c) = orig + step;
      const double up = evaluate(fn, x);
      x(r, c) = orig - step;
      const double down = evaluate(fn, x);
      x(r, c) = orig;
      grad(r, c) = (up - down) / (2.0 * step);
    }
  }
  return grad;
}

double relative_error(const Eigen::Ref<const Eigen::MatrixXd>& a, const Eigen::Ref<const Eigen::MatrixXd>& b,
                      double floor) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "relative_error: shape mismatch");
  }
  const double scale = std::max({a.norm(), b.norm(), floor});
  return (a - b).norm() / scale;
}

}  // namespace siamlab
