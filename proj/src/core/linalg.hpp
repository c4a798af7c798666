#pragma once

#include <Eigen/Dense>
#include <functional>

namespace siamlab {

/// Dense row-major batch: one sample per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Rows with norm at or below this are rejected, never clamped.
inline constexpr double kZeroNorm = 1e-12;
inline constexpr double kDefaultFdStep = 1e-5;

/// Unit-norm rows plus the norms they had before normalization.
struct NormalizedBatch {
  Matrix Z;
  Vector raw_norms;

  Eigen::Index rows() const { return Z.rows(); }
  Eigen::Index cols() const { return Z.cols(); }
};

NormalizedBatch l2_normalize(const Matrix& batch);

/// Chain rule through row-wise normalization: each row of grad_on_Z is
/// projected onto the tangent space of its unit row and divided by the raw norm.
Matrix normalize_backward(const Matrix& grad_on_Z, const Matrix& raw, const Vector& raw_norms);

double cosine_sim(const Vector& a, const Vector& b);

/// d cossim(a, b) / da.
Vector cosine_sim_grad(const Vector& a, const Vector& b);

using ScalarFn = std::function<double(const Vector&)>;
using MatrixScalarFn = std::function<double(const Matrix&)>;

/// Central-difference gradient estimate. Step must lie in [1e-7, 1e-3].
Vector finite_diff_grad(const ScalarFn& fn, const Vector& point, double step = kDefaultFdStep);
Matrix finite_diff_grad(const MatrixScalarFn& fn, const Matrix& point, double step = kDefaultFdStep);

/// ||a - b|| / max(||a||, ||b||), with a floor so two near-zero gradients compare equal.
double relative_error(const Eigen::Ref<const Eigen::MatrixXd>& a,
                      const Eigen::Ref<const Eigen::MatrixXd>& b, double floor = 1e-5);

/// Copy of `row` as a column vector.
inline Vector row_vector(const Matrix& m, Eigen::Index row) { return m.row(row).transpose(); }

bool all_finite(const Matrix& m);

void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

namespace testing_hooks {
/// Mutation-test switch: drops the projection term of normalize_backward.
extern bool g_break_normalize_backward;
}  // namespace testing_hooks

}  // namespace siamlab
