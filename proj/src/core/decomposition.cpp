#include "core/decomposition.hpp"

#include <cmath>

#include "core/errors.hpp"

namespace siamlab {

Vector batch_center(const Matrix& Z) { return Z.colwise().mean().transpose(); }

CenterResidual decompose(const Matrix& Z) {
  if (Z.rows() < 2) throw Error(ErrorCode::BatchTooSmall, "decompose needs at least two rows");
  CenterResidual out;
  out.center = batch_center(Z);
  out.residuals = Z.rowwise() - out.center.transpose();
  const double rows = static_cast<double>(Z.rows());
  const double mean_sq_norm = Z.squaredNorm() / rows;
  if (!(mean_sq_norm > 0.0)) throw Error(ErrorCode::ZeroNormRow, "decompose: all rows are zero");
  const double scale = std::sqrt(mean_sq_norm);
  out.m_o = out.center.norm() / scale;
  out.m_r = std::sqrt(out.residuals.squaredNorm() / rows) / scale;
  return out;
}

CenterResidual decompose(const NormalizedBatch& Z) { return decompose(Z.Z); }

GradientDecomposition decompose_gradient(const Matrix& full_target, const Matrix& basic) {
  require_same_shape(full_target, basic, "decompose_gradient");
  if (full_target.rows() < 1) throw Error(ErrorCode::BatchTooSmall, "decompose_gradient: empty batch");
  GradientDecomposition out;
  out.basic = basic;
  out.extra = full_target - basic;
  out.o_e = batch_center(out.extra);
  out.r_e = out.extra.rowwise() - out.o_e.transpose();
  return out;
}

Matrix compose_target(const Matrix& basic, const GradientDecomposition& decomp, Surgery surgery) {
  require_same_shape(basic, decomp.r_e, "compose_target");
  if (decomp.o_e.size() != basic.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "compose_target: o_e length differs from column count");
  }
  Matrix target = basic;
  if (surgery.keep_o_e) target.rowwise() += decomp.o_e.transpose();
  if (surgery.keep_r_e) target += decomp.r_e;
  return target;
}

Vector default_eta_grid() { return Vector::LinSpaced(64, -2.0, 2.0); }

EtaSweepResult eta_sweep(const Vector& o_e, const Vector& o_ref, const Vector& grid) {
  if (o_e.size() != o_ref.size()) throw Error(ErrorCode::ShapeMismatch, "eta_sweep: vector lengths differ");
  if (!(o_ref.norm() > kZeroNorm)) throw Error(ErrorCode::ZeroNormVector, "eta_sweep: reference vector is zero");
  for (Eigen::Index i = 1; i < grid.size(); ++i) {
    if (grid(i) < grid(i - 1)) throw Error(ErrorCode::InvalidArgument, "eta_sweep: grid must be ascending");
  }

  EtaSweepResult out;
  out.grid = grid;
  out.similarities.reserve(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const Vector diff = o_e - grid(i) * o_ref;
    if (diff.norm() > kZeroNorm) {
      out.similarities.emplace_back(cosine_sim(diff, o_ref));
    } else {
      out.similarities.emplace_back(std::nullopt);
    }
  }

  // Walk the defined samples in grid order and interpolate the first sign change.
  std::optional<Eigen::Index> prev;
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const auto& s = out.similarities[static_cast<std::size_t>(i)];
    if (!s) continue;
    if (*s == 0.0) {
      out.zero_crossing = grid(i);
      break;
    }
    if (prev) {
      const double sp = *out.similarities[static_cast<std::size_t>(*prev)];
      if ((sp > 0.0) != (*s > 0.0)) {
        const double t = sp / (sp - *s);
        out.zero_crossing = grid(*prev) + t * (grid(i) - grid(*prev));
        break;
      }
    }
    prev = i;
  }
  return out;
}

}  // namespace siamlab
