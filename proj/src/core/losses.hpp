#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/decomposition.hpp"
#include "core/linalg.hpp"
#include "core/rng.hpp"

namespace siamlab {

enum class LossKind {
  Cosine,
  RawMSE,
  SimSiam,
  Mirror,
  Triplet,
  InfoNCE,
  Decorrelation,
  ProbeCenter,
  ProbeResidual,
};

const char* loss_kind_name(LossKind kind);
std::optional<LossKind> parse_loss_kind(const std::string& name);

struct LossSpec {
  LossKind kind = LossKind::Cosine;
  double temperature = 0.2;
  Surgery surgery;
  bool symmetric = true;
};

/// Value and gradient with respect to the live anchor batch.
struct LossOutput {
  double value = 0.0;
  Matrix grad;
  /// InfoNCE softmax weights, M x M; column 0 is the positive, the rest are
  /// the M - 1 negatives in batch order.
  std::optional<Matrix> lambda;
};

/// Symmetric two-anchor loss: gradients on both live batches.
struct PairLossOutput {
  double value = 0.0;
  Matrix grad_a;
  Matrix grad_b;
};

/// Mirror loss: every input is live.
struct MirrorLossOutput {
  double value = 0.0;
  Matrix grad_z_a;
  Matrix grad_z_b;
  Matrix grad_p_a;
  Matrix grad_p_b;
};

/// L = -mean_i Z_a[i] . target[i]; the target is treated as a constant.
LossOutput cosine_loss(const NormalizedBatch& Z_a, const Matrix& target);

/// Symmetric SimSiam loss with gradients on the predictor outputs only.
/// With surgery, the target on P_a is P_b + [o_e] + [r_e] where the extra
/// gradient is Z_b - P_b.
PairLossOutput simsiam_loss(const NormalizedBatch& P_a, const NormalizedBatch& P_b, const NormalizedBatch& Z_a,
                            const NormalizedBatch& Z_b, Surgery surgery = {});

/// Symmetric target of the SimSiam loss for one direction.
Matrix simsiam_target(const Matrix& P_other, const Matrix& Z_other, Surgery surgery);

/// Mirror SimSiam: -(P_a . Z_b + P_b . Z_a)/2, predictor fed detached inputs.
MirrorLossOutput mirror_loss(const NormalizedBatch& P_a, const NormalizedBatch& P_b, const NormalizedBatch& Z_a,
                             const NormalizedBatch& Z_b);

/// Seeded within-batch permutation without fixed points.
std::vector<int> draw_negatives(int batch, Rng& rng);

/// -Z_a . sg(Z_b - Z_n) with negatives taken from the Z_b batch.
LossOutput triplet_loss(const NormalizedBatch& Z_a, const NormalizedBatch& Z_b, std::span<const int> negatives,
                        Surgery surgery = {});

/// InfoNCE with the positive in Z_b[i] and the other rows of Z_b as negatives.
/// The Z_b side is detached. With surgery the negative gradient on Z_a is
/// (1/tau)(Z_b + [-o_z] + [-sum lambda_i r_i]).
LossOutput infonce_loss(const NormalizedBatch& Z_a, const NormalizedBatch& Z_b, double temperature,
                        Surgery surgery = {});

/// Components of the InfoNCE negative gradient (without the 1/tau factor).
struct InfoNceDecomposition {
  Matrix lambda;   // M x M, lambda(i, j) is the weight of Z_b[j] for anchor i
  Vector o_z;      // center of Z_b
  Matrix r_e;      // -sum_j lambda(i, j) (Z_b[j] - o_z)
  Vector o_e;      // -o_z
};

InfoNceDecomposition infonce_decomposition(const Matrix& Z_a, const Matrix& Z_b, double temperature);

/// Mean Shannon entropy (nats) of the rows of a weight matrix.
double mean_row_entropy(const Matrix& weights);

/// Sum of squared off-diagonal covariance entries divided by D.
LossOutput decorrelation_loss(const Matrix& Z);

enum class ProbeMode { Center, Residual };

/// -Z_a . sg(o_z) or -Z_a . sg(Z_a - o_z).
LossOutput probe_loss(const NormalizedBatch& Z_a, ProbeMode mode);

/// Mean squared error over all entries, target detached.
LossOutput raw_mse_loss(const Matrix& z_a, const Matrix& z_b_detached);

}  // namespace siamlab
