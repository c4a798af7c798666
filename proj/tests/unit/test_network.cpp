#include <doctest.h>

#include <sstream>

#include "core/errors.hpp"
#include "core/network.hpp"
#include "oracles.hpp"

using namespace siamlab;

namespace {

/// Worst relative error of input and parameter gradients of one layer for
/// the scalar sum(w * layer(x)).
double layer_check(oracle::Gen& gen, Layer layer, int rows, Mode mode = Mode::Train) {
  double worst = 0.0;
  for (int p = 0; p < 50; ++p) {
    const Matrix x = gen.gaussian(rows, layer.in_dim());
    const Matrix w = gen.gaussian(rows, layer.out_dim());
    auto f = [&](const Matrix& in) {
      LayerCache c;
      return layer.forward(in, mode, c).cwiseProduct(w).sum();
    };
    for (auto& prm : layer.params()) prm.grad.setZero();
    LayerCache cache;
    layer.forward(x, mode, cache);
    worst = std::max(worst, oracle::rel_err(layer.backward(cache, w), oracle::central_diff(f, x)));
    for (auto& prm : layer.params()) {
      const Matrix start = prm.value;
      const Matrix numeric = oracle::central_diff(
          [&](const Matrix& v) {
            prm.value = v;
            const double out = f(x);
            prm.value = start;
            return out;
          },
          start);
      worst = std::max(worst, oracle::rel_err(prm.grad, numeric));
    }
  }
  return worst;
}

void randomize(oracle::Gen& gen, Layer& layer) {
  for (auto& prm : layer.params()) prm.value = gen.gaussian(static_cast<int>(prm.value.rows()), static_cast<int>(prm.value.cols()));
}

Matrix unit(const Matrix& m) { return m.rowwise().normalized(); }

}  // namespace

TEST_SUITE("network") {
  TEST_CASE("every layer kind matches central differences") {
    oracle::Gen gen(40);
    Rng rng(1);
    CHECK(layer_check(gen, Layer::fully_connected(5, 3, rng), 4) < 1e-4);
    CHECK(layer_check(gen, Layer::fully_connected(5, 3, rng, false), 4) < 1e-4);
    Layer bias = Layer::bias_only(4);
    randomize(gen, bias);
    CHECK(layer_check(gen, bias, 3) < 1e-4);
    Layer bn = Layer::batch_norm(4);
    randomize(gen, bn);
    CHECK(layer_check(gen, bn, 6) < 1e-4);
    CHECK(layer_check(gen, Layer::batch_norm(4, false), 6) < 1e-4);
    Layer bn_eval = Layer::batch_norm(4);
    randomize(gen, bn_eval);
    bn_eval.running_var = Vector::Constant(4, 2.0);
    CHECK(layer_check(gen, bn_eval, 6, Mode::Eval) < 1e-4);
    CHECK(layer_check(gen, Layer::relu(4), 5) < 1e-4);
    CHECK(layer_check(gen, Layer::tanh(4), 5) < 1e-4);
    CHECK(layer_check(gen, Layer::l2_norm(4), 5) < 1e-4);
  }

  TEST_CASE("batch norm: train output is standardized, running stats move by the momentum") {
    oracle::Gen gen(41);
    Layer bn = Layer::batch_norm(3, false);
    const Matrix x = gen.gaussian(50, 3) * 4.0;
    LayerCache c;
    const Matrix y = bn.forward(x, Mode::Train, c);
    const Vector mean = oracle::column_mean(x);
    for (int j = 0; j < 3; ++j) {
      CHECK(std::abs(y.col(j).mean()) < 1e-12);
      CHECK(y.col(j).squaredNorm() / 50.0 == doctest::Approx(1.0).epsilon(1e-3));
      CHECK(bn.running_mean(j) == doctest::Approx(kBatchNormMomentum * mean(j)));
    }
  }

  TEST_CASE("encoder and predictor shapes") {
    Rng rng(2);
    EncoderConfig cfg;
    cfg.input_dim = 10;
    cfg.hidden_dim = 12;
    cfg.output_dim = 6;
    cfg.hidden_layers = 2;
    cfg.l2_norm = true;
    Network enc = make_encoder(cfg, rng);
    CHECK(enc.in_dim() == 10);
    CHECK(enc.out_dim() == 6);
    CHECK(enc.ends_with(LayerKind::L2Norm));
    CHECK(enc.layers().size() == 3 * 2 + 1 + 1 + 1);
    oracle::Gen gen(42);
    const Matrix y = enc.forward(gen.gaussian(8, 10), Mode::Train).y;
    CHECK((y.rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-12);
    for (PredictorVariant v : {PredictorVariant::NonlinearMLP, PredictorVariant::TwoFC, PredictorVariant::TanhFC,
                               PredictorVariant::BiasOnly, PredictorVariant::Identity}) {
      Network p = make_predictor(v, 6, 4, rng);
      CHECK(p.out_dim() == 6);
      CHECK(p.forward(gen.gaussian(5, 6), Mode::Train).y.cols() == 6);
      REQUIRE(parse_predictor_variant(predictor_variant_name(v)).has_value());
    }
    Network id = make_predictor(PredictorVariant::Identity, 6, 4, rng);
    const Matrix x = gen.gaussian(3, 6);
    CHECK(id.forward(x, Mode::Train).y == x);
  }

  TEST_CASE("initial weights lie in +-1/sqrt(fan_in)") {
    Rng rng(3);
    const Layer fc = Layer::fully_connected(25, 7, rng);
    for (const auto& prm : fc.params()) CHECK(prm.value.cwiseAbs().maxCoeff() <= 0.2);
  }

  TEST_CASE("whole-network gradient matches central differences") {
    Rng rng(4);
    oracle::Gen gen(43);
    EncoderConfig cfg;
    cfg.input_dim = 5;
    cfg.hidden_dim = 7;
    cfg.output_dim = 4;
    cfg.l2_norm = true;
    Network net = make_encoder(cfg, rng);
    for (int p = 0; p < 10; ++p) {
      const Matrix x = gen.gaussian(6, 5), w = gen.gaussian(6, 4);
      net.zero_grad();
      ForwardPass fp = net.forward(x, Mode::Train);
      const Matrix gx = net.backward(fp.tape, w);
      auto f = [&](const Matrix& in) { return net.forward(in, Mode::Train).y.cwiseProduct(w).sum(); };
      CHECK(oracle::rel_err(gx, oracle::central_diff(f, x)) < 1e-4);
      for (Param* prm : net.params()) {
        const Matrix start = prm->value;
        const Matrix numeric = oracle::central_diff(
            [&](const Matrix& v) {
              prm->value = v;
              const double out = f(x);
              prm->value = start;
              return out;
            },
            start);
        CHECK(oracle::rel_err(prm->grad, numeric) < 1e-4);
      }
    }
  }

  TEST_CASE("tapes from another network or an older version are refused") {
    Rng rng(5);
    oracle::Gen gen(44);
    Network a = make_predictor(PredictorVariant::TanhFC, 3, 3, rng);
    Network b = a;
    ForwardPass fp = a.forward(gen.gaussian(2, 3), Mode::Train);
    CHECK_THROWS_AS(b.backward(fp.tape, Matrix::Ones(2, 3)), Error);
    a.mark_updated();
    try {
      a.backward(fp.tape, Matrix::Ones(2, 3));
      FAIL("stale tape accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::StaleTape);
    }
  }

  TEST_CASE("checkpoint round trip keeps parameters and running statistics") {
    Rng rng(6);
    oracle::Gen gen(45);
    EncoderConfig cfg;
    Network enc = make_encoder(cfg, rng);
    Network pred = make_predictor(PredictorVariant::TwoFC, cfg.output_dim, 8, rng);
    enc.forward(gen.gaussian(16, cfg.input_dim), Mode::Train);
    std::stringstream buf;
    const Network* nets[] = {&enc, &pred};
    save_checkpoint(buf, nets);
    const std::string text = buf.str();
    std::vector<Network> back = load_checkpoint(buf);
    REQUIRE(back.size() == 2);
    CHECK(back[0].name() == enc.name());
    const Matrix x = gen.gaussian(4, cfg.input_dim);
    CHECK(back[0].forward(x, Mode::Eval).y == enc.forward(x, Mode::Eval).y);
    const Matrix z = gen.gaussian(4, cfg.output_dim);
    CHECK(back[1].forward(z, Mode::Train).y == pred.forward(z, Mode::Train).y);
    std::stringstream again;
    const Network* backs[] = {&back[0], &back[1]};
    save_checkpoint(again, backs);
    CHECK(again.str() == text);
    std::istringstream cut(text.substr(0, text.size() / 2));
    CHECK_THROWS_AS(load_checkpoint(cut), Error);
  }

  TEST_CASE("moving-average bank: first sight copies, later updates blend") {
    MovingAverageBank bank(5, 2, 0.75);
    const std::vector<int> ids = {0, 4};
    Matrix first(2, 2);
    first << 1, 2, 3, 4;
    moving_average_update(bank, ids, first);
    CHECK(bank.gather(ids) == first);
    moving_average_update(bank, ids, Matrix::Zero(2, 2));
    CHECK((bank.gather(ids) - 0.75 * first).cwiseAbs().maxCoeff() < 1e-15);
    CHECK_FALSE(bank.filled[1]);
  }

  TEST_CASE("same-batch target averages every view but the anchor") {
    oracle::Gen gen(46);
    std::vector<NormalizedBatch> views;
    for (int v = 0; v < 4; ++v) views.push_back({gen.unit_rows(3, 5), Vector::Ones(3)});
    const Matrix t = same_batch_eoa_target(views);
    CHECK((t - (views[1].Z + views[2].Z + views[3].Z) / 3.0).cwiseAbs().maxCoeff() < 1e-15);
  }

  TEST_CASE("inverse predictor step: encoder gradient against central differences") {
    Rng rng(7);
    oracle::Gen gen(47);
    Network h = make_predictor(PredictorVariant::TanhFC, 4, 4, rng);
    Network h_inv = make_predictor(PredictorVariant::TanhFC, 4, 4, rng);
    const Matrix z_a = gen.gaussian(6, 4), z_b = gen.gaussian(6, 4);
    Network h0 = h, hi0 = h_inv;
    const Matrix target = unit(hi0.forward(h0.forward(z_b, Mode::Train).y, Mode::Train).y);
    auto f = [&](const Matrix& za) {
      const Matrix p = unit(h0.forward(za, Mode::Train).y);
      return -p.cwiseProduct(target).sum() / 12.0;
    };
    h.zero_grad();
    h_inv.zero_grad();
    const InverseStepResult r = inverse_predictor_step(h, h_inv, z_a, z_b);
    CHECK(oracle::rel_err(r.grad_z_a, oracle::central_diff(f, z_a)) < 1e-4);
    double h_inv_grad = 0.0;
    for (const Param* prm : h_inv.params()) h_inv_grad += prm->grad.norm();
    CHECK(h_inv_grad > 0.0);
    CHECK(r.pred_loss >= -1.0);
    CHECK(r.pred_loss <= 1.0);
  }
}
