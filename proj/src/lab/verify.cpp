#include "lab/verify.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>

#include "core/data.hpp"
#include "core/decomposition.hpp"
#include "core/errors.hpp"
#include "core/linalg.hpp"
#include "core/losses.hpp"
#include "core/metrics.hpp"
#include "core/network.hpp"
#include "core/rng.hpp"
#include "core/trainer.hpp"
#include "lab/config.hpp"
#include "lab/presets.hpp"
#include "lab/runner.hpp"

namespace siamlab {

namespace {

constexpr int kFdPoints = 20;
constexpr double kFdTolerance = 1e-4;

/// Outcome of one check: pass flag and a short human-readable reading.
struct Verdict {
  bool passed;
  std::string detail;
};

using CheckFn = std::function<Verdict()>;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Verdict within(double worst, double tolerance) {
  return {worst < tolerance, "worst " + fmt(worst) + " (limit " + fmt(tolerance) + ")"};
}

Matrix gaussian(Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

NormalizedBatch unit_batch(Rng& rng, int rows, int cols) { return l2_normalize(gaussian(rng, rows, cols)); }

NormalizedBatch as_batch(const Matrix& Z) {
  NormalizedBatch b;
  b.Z = Z;
  b.raw_norms = Vector::Ones(Z.rows());
  return b;
}

/// Worst relative error of an analytic gradient against central differences
/// over kFdPoints random points.
double fd_worst(Rng& rng, int rows, int cols, const std::function<double(const Matrix&)>& value,
                const std::function<Matrix(const Matrix&)>& grad) {
  double worst = 0.0;
  for (int p = 0; p < kFdPoints; ++p) {
    const Matrix x = l2_normalize(gaussian(rng, rows, cols)).Z;
    worst = std::max(worst, relative_error(grad(x), finite_diff_grad(value, x)));
  }
  return worst;
}

/// Gradient check of a single layer: input gradient and every parameter.
double layer_fd_worst(Rng& rng, Layer layer, int rows) {
  double worst = 0.0;
  for (int p = 0; p < kFdPoints; ++p) {
    const Matrix x = gaussian(rng, rows, layer.in_dim());
    const Matrix w = gaussian(rng, rows, layer.out_dim());
    auto value_at = [&](Layer& l, const Matrix& in) {
      LayerCache c;
      return l.forward(in, Mode::Train, c).cwiseProduct(w).sum();
    };
    for (auto& prm : layer.params()) prm.grad.setZero();
    LayerCache cache;
    layer.forward(x, Mode::Train, cache);
    const Matrix gx = layer.backward(cache, w);
    worst = std::max(worst, relative_error(gx, finite_diff_grad([&](const Matrix& in) { return value_at(layer, in); }, x)));
    for (auto& prm : layer.params()) {
      const Matrix start = prm.value;
      const Matrix numeric = finite_diff_grad(
          [&](const Matrix& v) {
            prm.value = v;
            const double out = value_at(layer, x);
            prm.value = start;
            return out;
          },
          start);
      worst = std::max(worst, relative_error(prm.grad, numeric));
    }
  }
  return worst;
}

template <typename Fn>
bool throws_code(ErrorCode code, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

// ---------------------------------------------------------------- linalg-core

std::vector<std::pair<std::string, CheckFn>> linalg_checks() {
  return {
      {"normalize-unit-rows",
       [] {
         Rng rng(11);
         double worst = 0.0;
         for (int t = 0; t < 100; ++t) {
           const NormalizedBatch b = l2_normalize(gaussian(rng, 8, 16) * std::exp(rng.uniform(-5.0, 5.0)));
           worst = std::max(worst, (b.Z.rowwise().norm().array() - 1.0).abs().maxCoeff());
         }
         return within(worst, 1e-12);
       }},
      {"normalize-zero-row",
       [] {
         Matrix m = Matrix::Ones(3, 4);
         m.row(1).setZero();
         return Verdict{throws_code(ErrorCode::ZeroNormRow, [&] { l2_normalize(m); }), "zero row rejected"};
       }},
      {"normalize-backward-fd",
       [] {
         Rng rng(12);
         double worst = 0.0;
         for (int p = 0; p < kFdPoints; ++p) {
           const Matrix x = gaussian(rng, 6, 8);
           const Matrix w = gaussian(rng, 6, 8);
           const NormalizedBatch b = l2_normalize(x);
           const Matrix analytic = normalize_backward(w, x, b.raw_norms);
           const Matrix numeric = finite_diff_grad([&](const Matrix& in) { return l2_normalize(in).Z.cwiseProduct(w).sum(); }, x);
           worst = std::max(worst, relative_error(analytic, numeric));
         }
         return within(worst, kFdTolerance);
       }},
      {"l2norm-layer-fd",
       [] {
         Rng rng(13);
         return within(layer_fd_worst(rng, Layer::l2_norm(8), 6), kFdTolerance);
       }},
      {"cosine-grad-fd",
       [] {
         Rng rng(14);
         double worst = 0.0;
         for (int p = 0; p < kFdPoints; ++p) {
           const Vector a = Vector::NullaryExpr(10, [&] { return rng.normal(); });
           const Vector b = Vector::NullaryExpr(10, [&] { return rng.normal(); });
           const Vector numeric = finite_diff_grad([&](const Vector& v) { return cosine_sim(v, b); }, a);
           worst = std::max(worst, relative_error(cosine_sim_grad(a, b), numeric));
         }
         return within(worst, kFdTolerance);
       }},
      {"fd-step-range",
       [] {
         const Vector x = Vector::Ones(3);
         auto f = [](const Vector& v) { return v.squaredNorm(); };
         const bool ok = throws_code(ErrorCode::InvalidArgument, [&] { finite_diff_grad(f, x, 1e-9); }) &&
                         throws_code(ErrorCode::InvalidArgument, [&] { finite_diff_grad(f, x, 1e-2); });
         return Verdict{ok, "steps outside [1e-7, 1e-3] rejected"};
       }},
  };
}

// -------------------------------------------------------------- decomposition

std::vector<std::pair<std::string, CheckFn>> decomposition_checks() {
  return {
      {"center-residual-identities",
       [] {
         Rng rng(21);
         double recon = 0.0, sum_r = 0.0, ratio = 0.0;
         for (int t = 0; t < 200; ++t) {
           const NormalizedBatch Z = unit_batch(rng, 2 + static_cast<int>(rng.below(30)), 2 + static_cast<int>(rng.below(30)));
           const CenterResidual d = decompose(Z);
           const Matrix back = d.residuals.rowwise() + d.center.transpose();
           recon = std::max(recon, (back - Z.Z).cwiseAbs().maxCoeff());
           sum_r = std::max(sum_r, d.residuals.colwise().sum().cwiseAbs().maxCoeff());
           ratio = std::max(ratio, std::abs(d.m_o * d.m_o + d.m_r * d.m_r - 1.0));
         }
         const bool ok = recon <= 1e-12 && sum_r <= 1e-9 && ratio <= 1e-9;
         return Verdict{ok, "reconstruction " + fmt(recon) + ", residual sum " + fmt(sum_r) + ", m_o^2+m_r^2-1 " + fmt(ratio)};
       }},
      {"collapsed-batch",
       [] {
         Rng rng(22);
         const NormalizedBatch one = unit_batch(rng, 1, 8);
         Matrix Z(16, 8);
         Z.rowwise() = one.Z.row(0);
         const CenterResidual d = decompose(Z);
         return Verdict{std::abs(d.m_o - 1.0) < 1e-12 && d.m_r < 1e-7, "m_o " + fmt(d.m_o) + ", m_r " + fmt(d.m_r)};
       }},
      {"gradient-split-recomposes",
       [] {
         Rng rng(23);
         double worst = 0.0;
         for (int t = 0; t < 50; ++t) {
           const Matrix basic = gaussian(rng, 12, 6);
           const Matrix full = gaussian(rng, 12, 6);
           const GradientDecomposition g = decompose_gradient(full, basic);
           const Matrix back = (g.basic + g.r_e).rowwise() + g.o_e.transpose();
           worst = std::max(worst, (back - full).cwiseAbs().maxCoeff());
           worst = std::max(worst, (compose_target(basic, g, {}) - full).cwiseAbs().maxCoeff());
           worst = std::max(worst, g.r_e.colwise().sum().cwiseAbs().maxCoeff());
           worst = std::max(worst, (compose_target(basic, g, {false, false}) - basic).cwiseAbs().maxCoeff());
         }
         return within(worst, 1e-9);
       }},
      {"eta-sweep-crossing",
       [] {
         // o_e = 0.3 * o_ref + orthogonal part crosses zero at eta = 0.3; the
         // reported crossing is interpolated, so it is good to a grid step.
         Vector o_ref = Vector::Zero(4);
         o_ref(0) = 1.0;
         Vector o_e = 0.3 * o_ref;
         o_e(1) = 0.5;
         const EtaSweepResult r = eta_sweep(o_e, o_ref, default_eta_grid());
         const bool ok = r.zero_crossing && std::abs(*r.zero_crossing - 0.3) < 4.0 / 63.0;
         return Verdict{ok, r.zero_crossing ? "crossing " + fmt(*r.zero_crossing) : std::string("no crossing")};
       }},
  };
}

// --------------------------------------------------------------------- losses

std::vector<std::pair<std::string, CheckFn>> loss_checks() {
  return {
      {"normalized-mse-identity",
       [] {
         Rng rng(31);
         double worst = 0.0;
         for (int t = 0; t < 10000; ++t) {
           const NormalizedBatch p = unit_batch(rng, 2, 16);
           const Vector a = row_vector(p.Z, 0);
           const Vector b = row_vector(p.Z, 1);
           worst = std::max(worst, std::abs((a - b).squaredNorm() / 2.0 - 1.0 + a.dot(b)));
         }
         return within(worst, 1e-9);
       }},
      {"cosine-fd",
       [] {
         Rng rng(32);
         const Matrix target = gaussian(rng, 8, 6);
         return within(fd_worst(rng, 8, 6, [&](const Matrix& z) { return cosine_loss(as_batch(z), target).value; },
                                [&](const Matrix& z) { return cosine_loss(as_batch(z), target).grad; }),
                       kFdTolerance);
       }},
      {"simsiam-fd",
       [] {
         Rng rng(33);
         double worst = 0.0;
         for (Surgery s : {Surgery{true, true}, Surgery{true, false}, Surgery{false, true}, Surgery{false, false}}) {
           const NormalizedBatch P_b = unit_batch(rng, 8, 6), Z_a = unit_batch(rng, 8, 6), Z_b = unit_batch(rng, 8, 6);
           // The target on P_a is a stop-gradient constant.
           const Matrix target = simsiam_target(P_b.Z, Z_b.Z, s);
           worst = std::max(worst, fd_worst(
                                       rng, 8, 6, [&](const Matrix& p) { return -p.cwiseProduct(target).sum() / 16.0; },
                                       [&](const Matrix& p) { return simsiam_loss(as_batch(p), P_b, Z_a, Z_b, s).grad_a; }));
         }
         return within(worst, kFdTolerance);
       }},
      {"mirror-fd",
       [] {
         Rng rng(34);
         const NormalizedBatch P_b = unit_batch(rng, 8, 6), Z_a = unit_batch(rng, 8, 6), Z_b = unit_batch(rng, 8, 6);
         const double w1 = fd_worst(rng, 8, 6, [&](const Matrix& p) { return mirror_loss(as_batch(p), P_b, Z_a, Z_b).value; },
                                    [&](const Matrix& p) { return mirror_loss(as_batch(p), P_b, Z_a, Z_b).grad_p_a; });
         const NormalizedBatch P_a = unit_batch(rng, 8, 6);
         const double w2 = fd_worst(rng, 8, 6, [&](const Matrix& z) { return mirror_loss(P_a, P_b, as_batch(z), Z_b).value; },
                                    [&](const Matrix& z) { return mirror_loss(P_a, P_b, as_batch(z), Z_b).grad_z_a; });
         return within(std::max(w1, w2), kFdTolerance);
       }},
      {"triplet-fd",
       [] {
         Rng rng(35);
         const NormalizedBatch Z_b = unit_batch(rng, 8, 6);
         const std::vector<int> neg = draw_negatives(8, rng);
         double worst = 0.0;
         for (Surgery s : {Surgery{true, true}, Surgery{true, false}, Surgery{false, true}}) {
           worst = std::max(worst, fd_worst(rng, 8, 6, [&](const Matrix& z) { return triplet_loss(as_batch(z), Z_b, neg, s).value; },
                                            [&](const Matrix& z) { return triplet_loss(as_batch(z), Z_b, neg, s).grad; }));
         }
         return within(worst, kFdTolerance);
       }},
      {"infonce-fd",
       [] {
         Rng rng(36);
         double worst = 0.0;
         for (double tau : {0.1, 0.5, 1.0}) {
           const NormalizedBatch Z_b = unit_batch(rng, 8, 6);
           worst = std::max(worst, fd_worst(rng, 8, 6, [&](const Matrix& z) { return infonce_loss(as_batch(z), Z_b, tau).value; },
                                            [&](const Matrix& z) { return infonce_loss(as_batch(z), Z_b, tau).grad; }));
         }
         return within(worst, kFdTolerance);
       }},
      {"infonce-decomposition",
       [] {
         Rng rng(37);
         double worst = 0.0, lambda_sum = 0.0;
         for (int t = 0; t < 50; ++t) {
           const double tau = rng.uniform(0.05, 2.0);
           const NormalizedBatch Z_a = unit_batch(rng, 10, 8), Z_b = unit_batch(rng, 10, 8);
           const InfoNceDecomposition d = infonce_decomposition(Z_a.Z, Z_b.Z, tau);
           const Matrix negative = ((Z_b.Z + d.r_e).rowwise() + d.o_e.transpose()) / tau;
           const Matrix direct = -infonce_loss(Z_a, Z_b, tau).grad * 10.0;
           worst = std::max(worst, (negative - direct).cwiseAbs().maxCoeff());
           lambda_sum = std::max(lambda_sum, (d.lambda.rowwise().sum().array() - 1.0).abs().maxCoeff());
         }
         return Verdict{worst < 1e-9 && lambda_sum < 1e-9,
                        "gradient gap " + fmt(worst) + ", lambda sum gap " + fmt(lambda_sum)};
       }},
      {"infonce-high-temperature",
       [] {
         Rng rng(38);
         const NormalizedBatch Z_a = unit_batch(rng, 16, 8), Z_b = unit_batch(rng, 16, 8);
         const Matrix lambda = infonce_decomposition(Z_a.Z, Z_b.Z, 100.0).lambda;
         const double uniform = 1.0 / 16.0;
         const double worst = (lambda.array() - uniform).abs().maxCoeff();
         return within(worst, 0.01 * uniform);
       }},
      {"decorrelation-fd",
       [] {
         Rng rng(39);
         return within(fd_worst(rng, 10, 6, [](const Matrix& z) { return decorrelation_loss(z).value; },
                                [](const Matrix& z) { return decorrelation_loss(z).grad; }),
                       kFdTolerance);
       }},
      {"raw-mse-fd",
       [] {
         Rng rng(40);
         const Matrix target = gaussian(rng, 8, 6);
         return within(fd_worst(rng, 8, 6, [&](const Matrix& z) { return raw_mse_loss(z, target).value; },
                                [&](const Matrix& z) { return raw_mse_loss(z, target).grad; }),
                       kFdTolerance);
       }},
      {"probe-targets",
       [] {
         Rng rng(41);
         const NormalizedBatch Z = unit_batch(rng, 12, 6);
         const Vector o = batch_center(Z.Z);
         Matrix center(12, 6);
         center.rowwise() = o.transpose();
         const Matrix residual = Z.Z - center;
         const double gap = std::max((probe_loss(Z, ProbeMode::Center).grad + center / 12.0).cwiseAbs().maxCoeff(),
                                     (probe_loss(Z, ProbeMode::Residual).grad + residual / 12.0).cwiseAbs().maxCoeff());
         return within(gap, 1e-12);
       }},
      {"negatives-are-derangements",
       [] {
         Rng rng(42);
         for (int t = 0; t < 200; ++t) {
           const int m = 2 + static_cast<int>(rng.below(40));
           const auto perm = draw_negatives(m, rng);
           std::vector<int> seen(static_cast<std::size_t>(m), 0);
           for (int i = 0; i < m; ++i) {
             if (perm[static_cast<std::size_t>(i)] == i) return Verdict{false, "fixed point at batch " + std::to_string(m)};
             ++seen[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
           }
           for (int c : seen) {
             if (c != 1) return Verdict{false, "not a permutation"};
           }
         }
         return Verdict{true, "200 draws"};
       }},
  };
}

// -------------------------------------------------------------------- network

std::vector<std::pair<std::string, CheckFn>> network_checks() {
  return {
      {"layer-fd",
       [] {
         Rng rng(51);
         double worst = 0.0;
         worst = std::max(worst, layer_fd_worst(rng, Layer::fully_connected(5, 4, rng), 6));
         worst = std::max(worst, layer_fd_worst(rng, Layer::fully_connected(5, 4, rng, false), 6));
         Layer bias = Layer::bias_only(4);
         bias.params()[0].value = gaussian(rng, 1, 4);
         worst = std::max(worst, layer_fd_worst(rng, bias, 6));
         Layer bn = Layer::batch_norm(4);
         bn.params()[0].value = gaussian(rng, 1, 4);
         bn.params()[1].value = gaussian(rng, 1, 4);
         worst = std::max(worst, layer_fd_worst(rng, bn, 6));
         worst = std::max(worst, layer_fd_worst(rng, Layer::batch_norm(4, false), 6));
         worst = std::max(worst, layer_fd_worst(rng, Layer::relu(4), 6));
         worst = std::max(worst, layer_fd_worst(rng, Layer::tanh(4), 6));
         return within(worst, kFdTolerance);
       }},
      {"network-fd",
       [] {
         Rng rng(52);
         EncoderConfig cfg;
         cfg.input_dim = 6;
         cfg.hidden_dim = 8;
         cfg.output_dim = 5;
         Network net = make_encoder(cfg, rng);
         double worst = 0.0;
         for (int p = 0; p < 5; ++p) {
           const Matrix x = gaussian(rng, 7, 6);
           const Matrix w = gaussian(rng, 7, 5);
           net.zero_grad();
           ForwardPass fp = net.forward(x, Mode::Train);
           const Matrix gx = net.backward(fp.tape, w);
           auto value = [&](const Matrix& in) { return net.forward(in, Mode::Train).y.cwiseProduct(w).sum(); };
           worst = std::max(worst, relative_error(gx, finite_diff_grad(value, x)));
           for (Param* prm : net.params()) {
             const Matrix start = prm->value;
             const Matrix numeric = finite_diff_grad(
                 [&](const Matrix& v) {
                   prm->value = v;
                   const double out = value(x);
                   prm->value = start;
                   return out;
                 },
                 start);
             worst = std::max(worst, relative_error(prm->grad, numeric));
           }
         }
         return within(worst, kFdTolerance);
       }},
      {"checkpoint-round-trip",
       [] {
         Rng rng(53);
         EncoderConfig cfg;
         Network enc = make_encoder(cfg, rng);
         Network pred = make_predictor(PredictorVariant::NonlinearMLP, cfg.output_dim, 16, rng);
         const Matrix x = gaussian(rng, 9, cfg.input_dim);
         enc.forward(x, Mode::Train);
         std::stringstream buf;
         const Network* nets[] = {&enc, &pred};
         save_checkpoint(buf, nets);
         std::vector<Network> back = load_checkpoint(buf);
         if (back.size() != 2) return Verdict{false, "network count " + std::to_string(back.size())};
         const double gap = (back[0].forward(x, Mode::Eval).y - enc.forward(x, Mode::Eval).y).cwiseAbs().maxCoeff();
         return Verdict{gap == 0.0, "eval output gap " + fmt(gap)};
       }},
      {"stale-tape",
       [] {
         Rng rng(54);
         Network net = make_predictor(PredictorVariant::TanhFC, 4, 4, rng);
         ForwardPass fp = net.forward(gaussian(rng, 3, 4), Mode::Train);
         net.mark_updated();
         return Verdict{throws_code(ErrorCode::StaleTape, [&] { net.backward(fp.tape, Matrix::Ones(3, 4)); }),
                        "backward after an update rejected"};
       }},
      {"moving-average-bank",
       [] {
         MovingAverageBank bank(4, 2, 0.8);
         const std::vector<int> ids = {1, 3};
         moving_average_update(bank, ids, Matrix::Ones(2, 2));
         moving_average_update(bank, ids, Matrix::Zero(2, 2));
         const double gap = (bank.gather(ids).array() - 0.8).abs().maxCoeff();
         return within(gap, 1e-15);
       }},
  };
}

// ----------------------------------------------------------------------- data

std::vector<std::pair<std::string, CheckFn>> data_checks() {
  return {
      {"synthetic-deterministic",
       [] {
         SyntheticSpec spec;
         spec.seed = 7;
         const Dataset a = synth_generate(spec);
         const Dataset b = synth_generate(spec);
         const bool ok = a.samples == b.samples && a.labels == b.labels && a.size() == spec.num_classes * spec.per_class;
         return Verdict{ok, std::to_string(a.size()) + " samples"};
       }},
      {"csv-round-trip",
       [] {
         SyntheticSpec spec;
         spec.per_class = 5;
         const Dataset a = synth_generate(spec);
         std::stringstream buf;
         write_dataset_csv(buf, a);
         const Dataset b = read_dataset_csv(buf);
         const double gap = (a.samples - b.samples).cwiseAbs().maxCoeff();
         return Verdict{gap == 0.0 && a.labels == b.labels && a.ids == b.ids, "sample gap " + fmt(gap)};
       }},
      {"cifar-record-parse",
       [] {
         std::vector<unsigned char> bytes(2 * 3073);
         bytes[0] = 3;
         bytes[3073] = 7;
         for (std::size_t i = 1; i < 3073; ++i) bytes[i] = 255;
         const Dataset d = cifar_parse(bytes, std::nullopt, CifarLayout::Cifar10);
         const double expect = (1.0 - kCifarMean[0]) / kCifarStd[0];
         const bool ok = d.size() == 2 && d.labels[0] == 3 && d.labels[1] == 7 && d.dim() == 3072 &&
                         std::abs(d.samples(0, 0) - expect) < 1e-12;
         return Verdict{ok, "two records"};
       }},
      {"cifar-truncated",
       [] {
         std::vector<unsigned char> bytes(3073 + 10);
         return Verdict{throws_code(ErrorCode::TruncatedRecord, [&] { cifar_parse(bytes, std::nullopt, CifarLayout::Cifar10); }),
                        "partial record rejected"};
       }},
      {"split-disjoint",
       [] {
         SyntheticSpec spec;
         const Dataset d = synth_generate(spec);
         const Split s = split_ids(d, 0.2, 3);
         std::vector<int> seen(static_cast<std::size_t>(d.size()), 0);
         for (int id : s.train) ++seen[static_cast<std::size_t>(id)];
         for (int id : s.holdout) ++seen[static_cast<std::size_t>(id)];
         bool ok = true;
         for (int c : seen) ok = ok && c == 1;
         return Verdict{ok, std::to_string(s.train.size()) + " train, " + std::to_string(s.holdout.size()) + " held out"};
       }},
      {"batch-views",
       [] {
         SyntheticSpec spec;
         const Dataset d = synth_generate(spec);
         std::vector<int> pool(static_cast<std::size_t>(d.size()));
         for (int i = 0; i < d.size(); ++i) pool[static_cast<std::size_t>(i)] = i;
         BatchIterator it(d, pool, 32, 3, AugmentParams{}, Rng(5));
         const ViewBatch b = it.next();
         const bool ok = b.views.size() == 3 && b.views[0].rows() == 32 && b.views[0] != b.views[1];
         return Verdict{ok, "three distinct views of 32"};
       }},
  };
}

// ------------------------------------------------------------ trainer-metrics

std::string trajectory_text(const RunRecord& r) {
  std::ostringstream out;
  write_trajectory_csv(out, r.trajectory);
  return out.str();
}

std::vector<std::pair<std::string, CheckFn>> trainer_checks() {
  return {
      {"collapse-verdict",
       [] {
         Rng rng(61);
         const NormalizedBatch one = unit_batch(rng, 1, 16);
         Matrix Z(32, 16);
         Z.rowwise() = one.Z.row(0);
         const CenterResidual d = decompose(Z);
         const NormalizedBatch spread = unit_batch(rng, 256, 16);
         const bool ok = collapse_verdict(d.m_o, std_metric(Z), 16) &&
                         !collapse_verdict(decompose(spread).m_o, std_metric(spread), 16);
         return Verdict{ok, "constant batch flagged, Gaussian batch not"};
       }},
      {"bias-probe-injection",
       [] {
         Rng rng(62);
         const NormalizedBatch Z_a = unit_batch(rng, 32, 8), Z_b = unit_batch(rng, 32, 8);
         BiasProbeBatch batch{Z_a.Z, Z_b.Z, 1.7 * Z_a.Z};
         double m = 0.0;
         for (Eigen::Index i = 0; i < 32; ++i) m += cosine_sim(row_vector(Z_a.Z, i), row_vector(Z_b.Z, i)) / 1.7;
         m /= 32.0;
         const Vector b_p = ((1.0 - m) / m) * batch_center(Z_a.Z);
         const BiasProbeResult r = bias_center_probe(b_p, std::span<const BiasProbeBatch>(&batch, 1));
         return within(r.residual, 1e-9);
       }},
      {"schedule",
       [] {
         TrainConfig c;
         c.steps = 1000;
         c.warmup = 100;
         const double peak = peak_lr(c);
         const bool ok = std::abs(lr_at(c, 100) - peak) < 1e-12 && lr_at(c, 50) < peak && lr_at(c, 1000) < 1e-9 * peak;
         return Verdict{ok, "warmup peak " + fmt(peak)};
       }},
      {"short-run-deterministic",
       [] {
         const Preset& p = find_preset("table2-simsiam");
         RunSpec spec = p.spec;
         spec.train.steps = 100;
         const Dataset data = load_dataset(spec.data);
         const std::string a = trajectory_text(train(spec.arch, spec.train, data));
         const std::string b = trajectory_text(train(spec.arch, spec.train, data));
         return Verdict{a == b && !a.empty(), std::to_string(a.size()) + " bytes"};
       }},
      {"simsiam-no-collapse",
       [] {
         const Preset& p = find_preset("table2-simsiam");
         const PresetResult r = execute(p, p.spec);
         return Verdict{r.expectation_held, r.summary};
       }},
      {"naive-collapse",
       [] {
         const Preset& p = find_preset("table2-naive");
         const PresetResult r = execute(p, p.spec);
         return Verdict{r.expectation_held, r.summary};
       }},
  };
}

// ------------------------------------------------------------------------ cli

std::vector<std::pair<std::string, CheckFn>> cli_checks() {
  return {
      {"preset-registry",
       [] {
         const auto& reg = preset_registry();
         for (const char* name : {"table1-moving-average", "table1-samebatch-10", "table1-samebatch-25", "table2-simsiam",
                                  "fig4b-decorrelation-recovery", "fig8-bn-mse"}) {
           find_preset(name);
         }
         return Verdict{reg.size() >= 30, std::to_string(reg.size()) + " presets"};
       }},
      {"unknown-preset",
       [] { return Verdict{throws_code(ErrorCode::UnknownPreset, [] { find_preset("nope"); }), "rejected"}; }},
      {"config-and-overrides",
       [] {
         std::istringstream text("# comment\ntrain.steps = 10\nloss.temperature=0.5\n");
         const Settings cfg = parse_config(text);
         const RunSpec spec = resolve_spec(find_preset("fig6-temperature"), 4, cfg, {{"train.steps", "20"}, {"train.warmup", "5"}});
         const bool ok = spec.train.steps == 20 && spec.arch.loss.temperature == 0.5 && spec.train.seed == 4 &&
                         throws_code(ErrorCode::InvalidOverride, [] { RunSpec s; apply_setting(s, "train.nope", "1"); }) &&
                         throws_code(ErrorCode::InvalidOverride, [] { RunSpec s; apply_setting(s, "train.steps", "x"); });
         return Verdict{ok, "file then flags, bad keys rejected"};
       }},
      {"describe-round-trip",
       [] {
         const RunSpec spec = find_preset("table5-bias").spec;
         RunSpec back;
         apply_settings(back, describe(spec));
         return Verdict{describe(back) == describe(spec), std::to_string(describe(spec).size()) + " keys"};
       }},
      {"sweep-validation",
       [] {
         const bool ok = throws_code(ErrorCode::InvalidParameter, [] { sweep("fig6-temperature", "tau", {}, {0}); }) &&
                         throws_code(ErrorCode::InvalidParameter, [] { sweep("fig6-temperature", "lr", {0.1}, {0}); });
         return Verdict{ok, "empty values and unknown parameters rejected"};
       }},
      {"svg-render",
       [] {
         std::istringstream text("step,a,b\n0,1,2\n1,2,\n2,3,1\n");
         const CsvTable t = read_csv(text);
         const std::string one = render_svg(t, {"a"});
         const std::string two = render_svg(t, {"a", "b"});
         auto count = [](const std::string& s, const std::string& what) {
           std::size_t n = 0;
           for (auto pos = s.find(what); pos != std::string::npos; pos = s.find(what, pos + 1)) ++n;
           return n;
         };
         const bool ok = count(one, "<polyline") == 1 && count(two, "<polyline") == 2 &&
                         count(one, "legend") == 0 && count(two, "legend") == 1 && render_svg(t, {"a", "b"}) == two &&
                         throws_code(ErrorCode::MissingColumn, [&] { render_svg(t, {"c"}); });
         return Verdict{ok, "polylines, legend, missing column"};
       }},
  };
}

std::vector<std::pair<std::string, CheckFn>> checks_for(const std::string& suite) {
  if (suite == "linalg-core") return linalg_checks();
  if (suite == "decomposition") return decomposition_checks();
  if (suite == "losses") return loss_checks();
  if (suite == "network") return network_checks();
  if (suite == "data") return data_checks();
  if (suite == "trainer-metrics") return trainer_checks();
  if (suite == "cli") return cli_checks();
  throw Error(ErrorCode::InvalidParameter, "unknown suite '" + suite + "'");
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

CheckResult run_check(const std::string& suite, const std::string& name, const CheckFn& fn) {
  CheckResult r;
  r.suite = suite;
  r.name = name;
  const auto start = std::chrono::steady_clock::now();
  try {
    const Verdict v = fn();
    r.passed = v.passed;
    r.detail = v.detail;
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("threw ") + e.what();
  }
  r.seconds = seconds_since(start);
  return r;
}

}  // namespace

bool VerifyReport::passed() const { return failures() == 0; }

std::size_t VerifyReport::failures() const {
  std::size_t n = 0;
  for (const auto& c : checks) n += c.passed ? 0 : 1;
  return n;
}

std::string VerifyReport::to_json() const {
  nlohmann::ordered_json j;
  j["suite"] = suite;
  j["passed"] = passed();
  j["total"] = checks.size();
  j["failures"] = failures();
  j["seconds"] = seconds;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    list.push_back({{"suite", c.suite}, {"name", c.name}, {"passed", c.passed}, {"detail", c.detail}, {"seconds", c.seconds}});
  }
  j["checks"] = list;
  return j.dump(2) + "\n";
}

std::vector<std::string> verify_suites() {
  return {"linalg-core", "decomposition", "losses", "network", "data", "trainer-metrics", "cli"};
}

VerifyReport verify(const std::string& suite) {
  std::vector<std::string> suites;
  if (suite == "all") {
    suites = verify_suites();
  } else {
    checks_for(suite);
    suites = {suite};
  }
  VerifyReport report;
  report.suite = suite;
  const auto start = std::chrono::steady_clock::now();
  for (const auto& s : suites) {
    for (const auto& [name, fn] : checks_for(s)) report.checks.push_back(run_check(s, name, fn));
  }
  if (suite == "all") {
    for (const Preset& p : preset_registry()) {
      report.checks.push_back(run_check("presets", p.name, [&p] {
        const PresetResult r = execute(p, p.spec);
        return Verdict{r.expectation_held, r.summary};
      }));
    }
  }
  report.seconds = seconds_since(start);
  return report;
}

}  // namespace siamlab
