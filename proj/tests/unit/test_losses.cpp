#include <doctest.h>

#include "core/errors.hpp"
#include "core/losses.hpp"
#include "core/rng.hpp"
#include "oracles.hpp"

using namespace siamlab;

namespace {

NormalizedBatch batch_of(const Matrix& Z) { return {Z, Vector::Ones(Z.rows())}; }

/// InfoNCE written out with logsumexp per anchor.
double infonce_oracle(const Matrix& Za, const Matrix& Zb, double tau) {
  double total = 0.0;
  for (int i = 0; i < Za.rows(); ++i) {
    double peak = -1e300;
    std::vector<double> logits;
    for (int j = 0; j < Zb.rows(); ++j) {
      double s = 0.0;
      for (int k = 0; k < Za.cols(); ++k) s += Za(i, k) * Zb(j, k);
      logits.push_back(s / tau);
      peak = std::max(peak, s / tau);
    }
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - peak);
    total += -(logits[static_cast<std::size_t>(i)] - peak - std::log(sum));
  }
  return total / static_cast<double>(Za.rows());
}

/// Sum of squared off-diagonal entries of the unbiased covariance, over D.
double decorrelation_oracle(const Matrix& Z) {
  const int n = static_cast<int>(Z.rows()), d = static_cast<int>(Z.cols());
  const Vector mu = oracle::column_mean(Z);
  double total = 0.0;
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      if (a == b) continue;
      double c = 0.0;
      for (int i = 0; i < n; ++i) c += (Z(i, a) - mu(a)) * (Z(i, b) - mu(b));
      c /= (n - 1);
      total += c * c;
    }
  }
  return total / d;
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("normalized MSE equals negative cosine up to a constant") {
    oracle::Gen gen(20);
    double worst = 0.0;
    for (int t = 0; t < 10000; ++t) {
      const Matrix p = gen.unit_rows(2, gen.between(2, 64));
      const Vector a = p.row(0).transpose(), b = p.row(1).transpose();
      worst = std::max(worst, std::abs((a - b).squaredNorm() / 2.0 - 1.0 - (-a.dot(b))));
    }
    CHECK(worst < 1e-9);
  }

  TEST_CASE("cosine loss value and gradient") {
    oracle::Gen gen(21);
    for (int t = 0; t < 50; ++t) {
      const Matrix Z = gen.unit_rows(7, 5), target = gen.gaussian(7, 5);
      const LossOutput out = cosine_loss(batch_of(Z), target);
      double v = 0.0;
      for (int i = 0; i < 7; ++i) v -= oracle::dot_rows(Z, target, i);
      CHECK(out.value == doctest::Approx(v / 7.0).epsilon(1e-12));
      const Matrix numeric =
          oracle::central_diff([&](const Matrix& z) { return cosine_loss(batch_of(z), target).value; }, Z);
      CHECK(oracle::rel_err(out.grad, numeric) < 1e-4);
    }
  }

  TEST_CASE("simsiam loss: gradient on each predictor output with the target held fixed") {
    oracle::Gen gen(22);
    // Target for one direction built here: P + chosen parts of the extra gradient Z - P.
    auto target = [](const Matrix& P, const Matrix& Z, Surgery s) {
      const Matrix extra = Z - P;
      const Vector o_e = oracle::column_mean(extra);
      Matrix t = P;
      if (s.keep_o_e) t.rowwise() += o_e.transpose();
      if (s.keep_r_e) t += extra.rowwise() - o_e.transpose();
      return t;
    };
    for (Surgery s : {Surgery{true, true}, Surgery{true, false}, Surgery{false, true}, Surgery{false, false}}) {
      for (int t = 0; t < 15; ++t) {
        const auto Pa = batch_of(gen.unit_rows(6, 4)), Pb = batch_of(gen.unit_rows(6, 4));
        const auto Za = batch_of(gen.unit_rows(6, 4)), Zb = batch_of(gen.unit_rows(6, 4));
        const PairLossOutput out = simsiam_loss(Pa, Pb, Za, Zb, s);
        const Matrix Ta = target(Pb.Z, Zb.Z, s), Tb = target(Pa.Z, Za.Z, s);
        double v = 0.0;
        for (int i = 0; i < 6; ++i) v -= (oracle::dot_rows(Pa.Z, Ta, i) + oracle::dot_rows(Pb.Z, Tb, i)) / 12.0;
        CHECK(out.value == doctest::Approx(v).epsilon(1e-12));
        auto half = [](const Matrix& p, const Matrix& fixed) {
          double h = 0.0;
          for (int i = 0; i < p.rows(); ++i) h -= oracle::dot_rows(p, fixed, i) / 12.0;
          return h;
        };
        const Matrix na = oracle::central_diff([&](const Matrix& p) { return half(p, Ta); }, Pa.Z);
        const Matrix nb = oracle::central_diff([&](const Matrix& p) { return half(p, Tb); }, Pb.Z);
        CHECK(oracle::rel_err(out.grad_a, na) < 1e-4);
        CHECK(oracle::rel_err(out.grad_b, nb) < 1e-4);
      }
    }
  }

  TEST_CASE("simsiam target: surgery keeps P_b plus the chosen parts of Z_b - P_b") {
    oracle::Gen gen(23);
    const Matrix Pb = gen.unit_rows(8, 3), Zb = gen.unit_rows(8, 3);
    const Matrix extra = Zb - Pb;
    const Vector o_e = oracle::column_mean(extra);
    const Matrix r_e = extra.rowwise() - o_e.transpose();
    CHECK((simsiam_target(Pb, Zb, {true, true}) - Zb).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((simsiam_target(Pb, Zb, {false, false}) - Pb).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((simsiam_target(Pb, Zb, {false, true}) - (Pb + r_e)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((simsiam_target(Pb, Zb, {true, false}) - Matrix(Pb.rowwise() + o_e.transpose())).cwiseAbs().maxCoeff() <
          1e-12);
  }

  TEST_CASE("mirror loss gradients on all four inputs") {
    oracle::Gen gen(24);
    const auto Pa = batch_of(gen.unit_rows(5, 4)), Pb = batch_of(gen.unit_rows(5, 4));
    const auto Za = batch_of(gen.unit_rows(5, 4)), Zb = batch_of(gen.unit_rows(5, 4));
    const MirrorLossOutput out = mirror_loss(Pa, Pb, Za, Zb);
    CHECK(oracle::rel_err(out.grad_p_a, oracle::central_diff([&](const Matrix& m) { return mirror_loss(batch_of(m), Pb, Za, Zb).value; }, Pa.Z)) < 1e-4);
    CHECK(oracle::rel_err(out.grad_p_b, oracle::central_diff([&](const Matrix& m) { return mirror_loss(Pa, batch_of(m), Za, Zb).value; }, Pb.Z)) < 1e-4);
    CHECK(oracle::rel_err(out.grad_z_a, oracle::central_diff([&](const Matrix& m) { return mirror_loss(Pa, Pb, batch_of(m), Zb).value; }, Za.Z)) < 1e-4);
    CHECK(oracle::rel_err(out.grad_z_b, oracle::central_diff([&](const Matrix& m) { return mirror_loss(Pa, Pb, Za, batch_of(m)).value; }, Zb.Z)) < 1e-4);
  }

  TEST_CASE("negatives: seeded derangements") {
    Rng a(5), b(5);
    CHECK(draw_negatives(17, a) == draw_negatives(17, b));
    oracle::Gen gen(25);
    Rng rng(9);
    for (int t = 0; t < 300; ++t) {
      const int m = gen.between(2, 50);
      const auto perm = draw_negatives(m, rng);
      std::vector<int> count(static_cast<std::size_t>(m), 0);
      for (int i = 0; i < m; ++i) {
        CHECK(perm[static_cast<std::size_t>(i)] != i);
        ++count[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
      }
      for (int c : count) CHECK(c == 1);
    }
    CHECK_THROWS_AS(draw_negatives(1, rng), Error);
  }

  TEST_CASE("triplet loss value, gradient and errors") {
    oracle::Gen gen(26);
    Rng rng(3);
    const Matrix Za = gen.unit_rows(6, 4), Zb = gen.unit_rows(6, 4);
    const auto neg = draw_negatives(6, rng);
    const LossOutput out = triplet_loss(batch_of(Za), batch_of(Zb), neg);
    double v = 0.0;
    for (int i = 0; i < 6; ++i) {
      for (int k = 0; k < 4; ++k) v -= Za(i, k) * (Zb(i, k) - Zb(neg[static_cast<std::size_t>(i)], k));
    }
    CHECK(out.value == doctest::Approx(v / 6.0).epsilon(1e-12));
    for (Surgery s : {Surgery{true, true}, Surgery{true, false}, Surgery{false, true}}) {
      const Matrix numeric = oracle::central_diff(
          [&](const Matrix& z) { return triplet_loss(batch_of(z), batch_of(Zb), neg, s).value; }, Za);
      CHECK(oracle::rel_err(triplet_loss(batch_of(Za), batch_of(Zb), neg, s).grad, numeric) < 1e-4);
    }
    std::vector<int> self = {0, 2, 1, 4, 3, 5};
    std::vector<int> out_of_range = {1, 0, 3, 2, 5, 9};
    try {
      triplet_loss(batch_of(Za), batch_of(Zb), self);
      FAIL("self negative accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::SelfNegative);
    }
    CHECK_THROWS_AS(triplet_loss(batch_of(Za), batch_of(Zb), out_of_range), Error);
  }

  TEST_CASE("InfoNCE value and gradient against a logsumexp oracle") {
    oracle::Gen gen(27);
    for (double tau : {0.05, 0.2, 1.0, 5.0}) {
      for (int t = 0; t < 10; ++t) {
        const Matrix Za = gen.unit_rows(7, 5), Zb = gen.unit_rows(7, 5);
        const LossOutput out = infonce_loss(batch_of(Za), batch_of(Zb), tau);
        CHECK(out.value == doctest::Approx(infonce_oracle(Za, Zb, tau)).epsilon(1e-10));
        const Matrix numeric = oracle::central_diff([&](const Matrix& z) { return infonce_oracle(z, Zb, tau); }, Za);
        CHECK(oracle::rel_err(out.grad, numeric) < 1e-4);
      }
    }
  }

  TEST_CASE("InfoNCE weights: positive first, rows sum to one, uniform at high temperature") {
    oracle::Gen gen(28);
    const Matrix Za = gen.unit_rows(9, 6), Zb = gen.unit_rows(9, 6);
    const LossOutput out = infonce_loss(batch_of(Za), batch_of(Zb), 0.3);
    REQUIRE(out.lambda.has_value());
    const InfoNceDecomposition d = infonce_decomposition(Za, Zb, 0.3);
    for (int i = 0; i < 9; ++i) {
      CHECK(out.lambda->row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK((*out.lambda)(i, 0) == doctest::Approx(d.lambda(i, i)));
    }
    const Matrix hot = infonce_decomposition(Za, Zb, 100.0).lambda;
    CHECK((hot.array() - 1.0 / 9.0).abs().maxCoeff() < 0.01 / 9.0);
  }

  TEST_CASE("InfoNCE decomposition reproduces the softmax gradient") {
    oracle::Gen gen(29);
    for (int t = 0; t < 50; ++t) {
      const double tau = gen.uniform(0.05, 2.0);
      const int m = gen.between(2, 20);
      const Matrix Za = gen.unit_rows(m, 6), Zb = gen.unit_rows(m, 6);
      const InfoNceDecomposition d = infonce_decomposition(Za, Zb, tau);
      // -(dL/dZa) * M: the positive pull minus the softmax-weighted negatives.
      const Matrix direct = -infonce_loss(batch_of(Za), batch_of(Zb), tau).grad * m;
      const Vector o_z = oracle::column_mean(Zb);
      Matrix rebuilt(m, 6);
      for (int i = 0; i < m; ++i) {
        Vector weighted = Vector::Zero(6);
        for (int j = 0; j < m; ++j) weighted += d.lambda(i, j) * (Zb.row(j).transpose() - o_z);
        rebuilt.row(i) = ((Zb.row(i).transpose() - o_z - weighted) / tau).transpose();
      }
      CHECK((rebuilt - direct).cwiseAbs().maxCoeff() < 1e-9);
      CHECK((d.lambda.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
      CHECK((d.o_e + o_z).cwiseAbs().maxCoeff() < 1e-15);
    }
  }

  TEST_CASE("InfoNCE surgery keeps the positive and the chosen extra parts") {
    oracle::Gen gen(30);
    const Matrix Za = gen.unit_rows(8, 4), Zb = gen.unit_rows(8, 4);
    const double tau = 0.4;
    const InfoNceDecomposition d = infonce_decomposition(Za, Zb, tau);
    const LossOutput full = infonce_loss(batch_of(Za), batch_of(Zb), tau);
    const LossOutput both = infonce_loss(batch_of(Za), batch_of(Zb), tau, {true, true});
    CHECK((full.grad - both.grad).cwiseAbs().maxCoeff() == 0.0);
    const LossOutput no_r = infonce_loss(batch_of(Za), batch_of(Zb), tau, {true, false});
    const Matrix expect = -((Zb.rowwise() + d.o_e.transpose()) / tau) / 8.0;
    CHECK((no_r.grad - expect).cwiseAbs().maxCoeff() < 1e-12);
    const LossOutput none = infonce_loss(batch_of(Za), batch_of(Zb), tau, {false, false});
    CHECK((none.grad + Zb / (tau * 8.0)).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("InfoNCE rejects bad temperatures and single-row batches") {
    oracle::Gen gen(31);
    const auto Z = batch_of(gen.unit_rows(4, 3));
    for (double tau : {0.0, -1.0, std::nan("")}) {
      try {
        infonce_loss(Z, Z, tau);
        FAIL("temperature accepted");
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::TemperatureNonPositive);
      }
    }
    const auto one = batch_of(gen.unit_rows(1, 3));
    CHECK_THROWS_AS(infonce_loss(one, one, 0.5), Error);
  }

  TEST_CASE("entropy of the weights is nondecreasing in temperature on a fixed batch") {
    oracle::Gen gen(32);
    for (int t = 0; t < 20; ++t) {
      const Matrix Za = gen.unit_rows(32, 8), Zb = gen.unit_rows(32, 8);
      double last = -1.0;
      for (double tau : {0.05, 0.1, 0.2, 0.5, 1.0, 2.0}) {
        const double h = mean_row_entropy(infonce_decomposition(Za, Zb, tau).lambda);
        CHECK(h >= last - 1e-12);
        CHECK(h <= std::log(32.0) + 1e-12);
        last = h;
      }
    }
    CHECK(mean_row_entropy(Matrix::Constant(3, 4, 0.25)) == doctest::Approx(std::log(4.0)));
  }

  TEST_CASE("decorrelation loss against an explicit covariance") {
    oracle::Gen gen(33);
    for (int t = 0; t < 20; ++t) {
      const Matrix Z = gen.gaussian(gen.between(2, 12), gen.between(2, 6));
      const LossOutput out = decorrelation_loss(Z);
      CHECK(out.value == doctest::Approx(decorrelation_oracle(Z)).epsilon(1e-10));
      const Matrix numeric = oracle::central_diff(decorrelation_oracle, Z);
      CHECK(oracle::rel_err(out.grad, numeric) < 1e-4);
    }
    CHECK_THROWS_AS(decorrelation_loss(Matrix::Ones(1, 3)), Error);
  }

  TEST_CASE("probe losses use the detached center or residual as target") {
    oracle::Gen gen(34);
    const Matrix Z = gen.unit_rows(10, 5);
    const Vector o = oracle::column_mean(Z);
    const LossOutput c = probe_loss(batch_of(Z), ProbeMode::Center);
    const LossOutput r = probe_loss(batch_of(Z), ProbeMode::Residual);
    for (int i = 0; i < 10; ++i) {
      CHECK((c.grad.row(i).transpose() + o / 10.0).cwiseAbs().maxCoeff() < 1e-15);
      CHECK((r.grad.row(i).transpose() + (Z.row(i).transpose() - o) / 10.0).cwiseAbs().maxCoeff() < 1e-15);
    }
    CHECK(c.value == doctest::Approx(-o.squaredNorm()));
  }

  TEST_CASE("raw MSE value and gradient") {
    oracle::Gen gen(35);
    const Matrix z = gen.gaussian(6, 4), target = gen.gaussian(6, 4);
    const LossOutput out = raw_mse_loss(z, target);
    CHECK(out.value == doctest::Approx((z - target).squaredNorm() / 24.0));
    const Matrix numeric = oracle::central_diff([&](const Matrix& m) { return (m - target).squaredNorm() / 24.0; }, z);
    CHECK(oracle::rel_err(out.grad, numeric) < 1e-4);
  }

  TEST_CASE("loss names round-trip") {
    for (LossKind k : {LossKind::Cosine, LossKind::RawMSE, LossKind::SimSiam, LossKind::Mirror, LossKind::Triplet,
                       LossKind::InfoNCE, LossKind::Decorrelation, LossKind::ProbeCenter, LossKind::ProbeResidual}) {
      REQUIRE(parse_loss_kind(loss_kind_name(k)).has_value());
      CHECK(*parse_loss_kind(loss_kind_name(k)) == k);
    }
    CHECK_FALSE(parse_loss_kind("nope").has_value());
  }
}
