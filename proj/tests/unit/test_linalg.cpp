#include <doctest.h>

#include "core/errors.hpp"
#include "core/linalg.hpp"
#include "lab/verify.hpp"
#include "oracles.hpp"

using namespace siamlab;

TEST_SUITE("linalg-core") {
  TEST_CASE("normalized rows have unit length and keep direction") {
    oracle::Gen gen(1);
    for (int t = 0; t < 200; ++t) {
      const int rows = gen.between(1, 20), cols = gen.between(1, 20);
      const Matrix x = gen.gaussian(rows, cols) * std::exp(gen.uniform(-8.0, 8.0));
      const NormalizedBatch b = l2_normalize(x);
      for (int i = 0; i < rows; ++i) {
        CHECK(std::abs(b.Z.row(i).norm() - 1.0) < 1e-12);
        CHECK(std::abs(b.raw_norms(i) - x.row(i).norm()) <= 1e-12 * x.row(i).norm());
        CHECK(oracle::cos(x.row(i).transpose(), b.Z.row(i).transpose()) > 1.0 - 1e-12);
      }
    }
  }

  TEST_CASE("normalizing twice changes nothing") {
    oracle::Gen gen(2);
    const Matrix once = l2_normalize(gen.gaussian(9, 7)).Z;
    CHECK((l2_normalize(once).Z - once).cwiseAbs().maxCoeff() < 1e-15);
  }

  TEST_CASE("zero rows are rejected, not clamped") {
    Matrix m = Matrix::Ones(4, 3);
    m.row(2).setZero();
    CHECK_THROWS_AS(l2_normalize(m), Error);
    try {
      l2_normalize(m);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ZeroNormRow);
    }
    CHECK_THROWS_AS(cosine_sim(Vector::Zero(3), Vector::Ones(3)), Error);
  }

  TEST_CASE("normalize_backward matches central differences") {
    oracle::Gen gen(3);
    for (int p = 0; p < 50; ++p) {
      const Matrix x = gen.gaussian(5, 6);
      const Matrix w = gen.gaussian(5, 6);
      const NormalizedBatch b = l2_normalize(x);
      const Matrix numeric = oracle::central_diff(
          [&](const Matrix& in) {
            double s = 0.0;
            for (int i = 0; i < in.rows(); ++i) s += oracle::dot_rows(in, w, i) / in.row(i).norm();
            return s;
          },
          x);
      CHECK(oracle::rel_err(normalize_backward(w, x, b.raw_norms), numeric) < 1e-4);
    }
  }

  TEST_CASE("normalize_backward output is tangent to each unit row") {
    oracle::Gen gen(4);
    const Matrix x = gen.gaussian(8, 5);
    const NormalizedBatch b = l2_normalize(x);
    const Matrix g = normalize_backward(gen.gaussian(8, 5), x, b.raw_norms);
    for (int i = 0; i < 8; ++i) CHECK(std::abs(oracle::dot_rows(g, b.Z, i)) < 1e-12);
  }

  TEST_CASE("cosine similarity and its gradient") {
    oracle::Gen gen(5);
    for (int p = 0; p < 50; ++p) {
      const int n = gen.between(2, 12);
      const Vector a = gen.vec(n), b = gen.vec(n);
      CHECK(cosine_sim(a, b) == doctest::Approx(oracle::cos(a, b)).epsilon(1e-12));
      const Matrix numeric =
          oracle::central_diff([&](const Matrix& v) { return oracle::cos(Vector(v.row(0).transpose()), b); },
                               Matrix(a.transpose()));
      CHECK(oracle::rel_err(Matrix(cosine_sim_grad(a, b).transpose()), numeric) < 1e-4);
    }
    const Vector a = gen.vec(4);
    CHECK(cosine_sim(a, 3.0 * a) == doctest::Approx(1.0));
    CHECK(cosine_sim(a, -a) == doctest::Approx(-1.0));
  }

  TEST_CASE("finite_diff_grad agrees with a known gradient and checks its step") {
    oracle::Gen gen(6);
    const Matrix x = gen.gaussian(3, 4);
    const Matrix g = finite_diff_grad([](const Matrix& m) { return m.array().cube().sum(); }, x);
    CHECK(oracle::rel_err(g, Matrix(3.0 * x.array().square())) < 1e-8);
    const Vector v = gen.vec(3);
    CHECK_THROWS_AS(finite_diff_grad([](const Vector& u) { return u.sum(); }, v, 1e-8), Error);
    CHECK_THROWS_AS(finite_diff_grad([](const Vector& u) { return u.sum(); }, v, 1e-2), Error);
  }

  TEST_CASE("relative_error floors near-zero gradients") {
    const Matrix tiny = Matrix::Constant(2, 2, 1e-14);
    CHECK(relative_error(tiny, Matrix::Zero(2, 2)) < 1e-5);
    CHECK(relative_error(Matrix::Ones(2, 2), Matrix::Ones(2, 2)) == 0.0);
  }

  TEST_CASE("a broken normalize_backward is caught by the linalg-core suite only") {
    testing_hooks::g_break_normalize_backward = true;
    const VerifyReport linalg = verify("linalg-core");
    const VerifyReport losses = verify("losses");
    const VerifyReport network = verify("network");
    const VerifyReport decomposition = verify("decomposition");
    testing_hooks::g_break_normalize_backward = false;

    CHECK_FALSE(linalg.passed());
    bool backward_failed = false;
    for (const auto& c : linalg.checks) backward_failed |= (c.name == "normalize-backward-fd" && !c.passed);
    CHECK(backward_failed);
    CHECK(losses.passed());
    CHECK(network.passed());
    CHECK(decomposition.passed());
    CHECK(verify("linalg-core").passed());
  }
}
