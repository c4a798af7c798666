#include "core/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <sstream>

#include "core/errors.hpp"

namespace siamlab {

namespace {

constexpr ArchTag kAllTags[] = {ArchTag::NaiveSiamese,       ArchTag::SimSiam,          ArchTag::MirrorSimSiam,
                                ArchTag::SymmetricPredictor, ArchTag::InversePredictor, ArchTag::MovingAverageTarget,
                                ArchTag::SameBatchEOA,       ArchTag::BNMSE};

bool uses_predictor(ArchTag tag) {
  return tag == ArchTag::SimSiam || tag == ArchTag::MirrorSimSiam || tag == ArchTag::SymmetricPredictor ||
         tag == ArchTag::InversePredictor;
}

[[noreturn]] void bad_arch(const std::string& why) { throw Error(ErrorCode::InvalidArchitecture, why); }

}  // namespace

const char* arch_tag_name(ArchTag tag) {
  switch (tag) {
    case ArchTag::NaiveSiamese: return "naive-siamese";
    case ArchTag::SimSiam: return "simsiam";
    case ArchTag::MirrorSimSiam: return "mirror-simsiam";
    case ArchTag::SymmetricPredictor: return "symmetric-predictor";
    case ArchTag::InversePredictor: return "inverse-predictor";
    case ArchTag::MovingAverageTarget: return "moving-average";
    case ArchTag::SameBatchEOA: return "same-batch-eoa";
    case ArchTag::BNMSE: return "bn-mse";
  }
  return "unknown";
}

std::optional<ArchTag> parse_arch_tag(const std::string& name) {
  for (auto tag : kAllTags) {
    if (name == arch_tag_name(tag)) return tag;
  }
  return std::nullopt;
}

const char* symmetric_variant_name(SymmetricVariant v) {
  switch (v) {
    case SymmetricVariant::Joint: return "joint";
    case SymmetricVariant::Extra: return "extra";
    case SymmetricVariant::Alternating: return "alternating";
  }
  return "unknown";
}

std::optional<SymmetricVariant> parse_symmetric_variant(const std::string& name) {
  for (auto v : {SymmetricVariant::Joint, SymmetricVariant::Extra, SymmetricVariant::Alternating}) {
    if (name == symmetric_variant_name(v)) return v;
  }
  return std::nullopt;
}

bool Plan::updates(const std::string& params) const {
  for (const auto& term : terms) {
    if (std::find(term.updates.begin(), term.updates.end(), params) != term.updates.end()) return true;
  }
  return false;
}

Plan wire(const ArchitectureSpec& arch) {
  const bool identity = arch.predictor == PredictorVariant::Identity;
  const LossKind kind = arch.loss.kind;
  if (arch.n_views < 2) bad_arch("at least two views are required");
  if (arch.n_views != 2 && arch.tag != ArchTag::SameBatchEOA) bad_arch("only same-batch-eoa takes more than two views");
  if ((arch.predictor == PredictorVariant::BiasOnly || arch.predictor == PredictorVariant::TwoFC ||
       arch.predictor == PredictorVariant::TanhFC) &&
      !arch.encoder.l2_norm) {
    bad_arch(std::string(predictor_variant_name(arch.predictor)) + " predictor needs an encoder ending in l2-norm");
  }
  if (!uses_predictor(arch.tag) && !identity) {
    bad_arch(std::string(arch_tag_name(arch.tag)) + " takes no predictor; use the identity variant");
  }
  if ((arch.tag == ArchTag::MirrorSimSiam || arch.tag == ArchTag::SymmetricPredictor ||
       arch.tag == ArchTag::InversePredictor) &&
      identity) {
    bad_arch(std::string(arch_tag_name(arch.tag)) + " requires a predictor");
  }
  if (kind == LossKind::InfoNCE && !(arch.loss.temperature > 0.0)) bad_arch("temperature must be positive");

  Plan plan;
  plan.tag = arch.tag;
  plan.n_views = arch.n_views;
  const bool surgical = !arch.loss.surgery.full();
  auto expect_loss = [&](std::initializer_list<LossKind> allowed) {
    if (std::find(allowed.begin(), allowed.end(), kind) == allowed.end()) {
      bad_arch(std::string(arch_tag_name(arch.tag)) + " cannot use the " + loss_kind_name(kind) + " loss");
    }
  };

  switch (arch.tag) {
    case ArchTag::NaiveSiamese: {
      expect_loss({LossKind::Cosine, LossKind::Triplet, LossKind::InfoNCE, LossKind::Decorrelation,
                   LossKind::ProbeCenter, LossKind::ProbeResidual});
      if (surgical && kind != LossKind::Triplet && kind != LossKind::InfoNCE) {
        bad_arch("component surgery applies to triplet, infonce and simsiam losses only");
      }
      plan.forward_passes = {"z_a = f(x_a)", "z_b = f(x_b)"};
      if (kind == LossKind::Cosine) {
        plan.terms.push_back({"L", "-Z_a . Z_b", {"encoder"}});
      } else if (kind == LossKind::Decorrelation) {
        plan.terms.push_back({"L", "sum offdiag cov(Z_a)^2 / D", {"encoder"}});
      } else if (kind == LossKind::ProbeCenter) {
        plan.detached = {"o_z"};
        plan.terms.push_back({"L", "-Z_a . sg(o_z)", {"encoder"}});
      } else if (kind == LossKind::ProbeResidual) {
        plan.detached = {"Z_a - o_z"};
        plan.terms.push_back({"L", "-Z_a . sg(Z_a - o_z)", {"encoder"}});
      } else if (kind == LossKind::Triplet) {
        plan.detached = {"Z_b", "Z_n"};
        plan.terms.push_back({"L", "-Z_a . sg(Z_b + [o_e] + [r_e]), G_e = -Z_n", {"encoder"}});
      } else {
        plan.detached = {"Z_b"};
        plan.terms.push_back({"L", "InfoNCE(Z_a; Z_b, tau), extra gradient split into [o_e] + [r_e]", {"encoder"}});
      }
      break;
    }
    case ArchTag::SimSiam:
      expect_loss({LossKind::SimSiam});
      plan.uses_predictor = true;
      plan.forward_passes = {"z_a = f(x_a)", "z_b = f(x_b)", "p_a = h(z_a)", "p_b = h(z_b)"};
      plan.detached = {"z_a", "z_b"};
      plan.terms.push_back({"L", "D(p_a, sg z_b)/2 + D(p_b, sg z_a)/2, target P_b + [o_e] + [r_e]",
                            {"encoder", "predictor"}});
      break;
    case ArchTag::MirrorSimSiam:
      expect_loss({LossKind::Mirror});
      plan.uses_predictor = true;
      plan.forward_passes = {"z_a = f(x_a)", "z_b = f(x_b)", "p_a = h(sg z_a)", "p_b = h(sg z_b)"};
      plan.detached = {"predictor input"};
      plan.terms.push_back({"L", "D(z_a, p_b)/2 + D(z_b, p_a)/2", {"encoder", "predictor"}});
      break;
    case ArchTag::SymmetricPredictor:
      expect_loss({LossKind::Cosine});
      plan.uses_predictor = true;
      plan.forward_passes = {"z_a = f(x_a)", "z_b = f(x_b)", "p_a = h(z_a)", "p_b = h(z_b)"};
      if (arch.symmetric_variant == SymmetricVariant::Joint) {
        plan.detached = {"p_b as target", "p_a as target"};
        plan.terms.push_back({"L", "D(p_a, sg p_b)/2 + D(p_b, sg p_a)/2", {"encoder", "predictor"}});
      } else {
        plan.detached = {"predictor input in L_pred", "targets"};
        plan.terms.push_back({"L_pred", "D(h(sg z_a), z_b)/2 + D(h(sg z_b), z_a)/2", {"predictor"}});
        plan.terms.push_back({"L_enc", "D(p_a, sg p_b)/2 + D(p_b, sg p_a)/2", {"encoder", "predictor"}});
      }
      break;
    case ArchTag::InversePredictor:
      expect_loss({LossKind::Cosine});
      plan.uses_predictor = true;
      plan.uses_inverse = true;
      plan.forward_passes = {"z_a = f(x_a)", "z_b = f(x_b)", "p_a = h(z_a)", "p_b = h(z_b)",
                             "i_a = h_inv(sg p_a)", "i_b = h_inv(sg p_b)"};
      plan.detached = {"predictor input in L_pred", "inverse-predictor input", "targets"};
      plan.terms.push_back({"L_pred", "D(h(sg z_a), z_b)/2 + D(h(sg z_b), z_a)/2", {"predictor"}});
      plan.terms.push_back({"L_inv_pred", "D(h_inv(sg p_a), z_a)/2 + D(h_inv(sg p_b), z_b)/2", {"inverse"}});
      plan.terms.push_back({"L_enc", "D(p_a, sg h_inv(p_b))/2 + D(p_b, sg h_inv(p_a))/2", {"encoder", "predictor"}});
      break;
    case ArchTag::MovingAverageTarget:
      expect_loss({LossKind::Cosine});
      plan.uses_bank = true;
      plan.forward_passes = {"z_a = f(x_a)", "z_b = f(x_b)"};
      plan.detached = {"eta"};
      plan.terms.push_back({"L", "-Z_a . sg(normalize(eta)), eta <- m eta + (1 - m) Z_b", {"encoder"}});
      break;
    case ArchTag::SameBatchEOA:
      expect_loss({LossKind::Cosine});
      for (int v = 0; v < arch.n_views; ++v) plan.forward_passes.push_back("z_" + std::to_string(v + 1) + " = f(x_" + std::to_string(v + 1) + ")");
      plan.detached = {"z_2..z_N"};
      plan.terms.push_back({"L", "-Z_1 . sg(normalize(mean(Z_2..Z_N)))", {"encoder"}});
      break;
    case ArchTag::BNMSE:
      expect_loss({LossKind::RawMSE});
      if (arch.encoder.l2_norm) bad_arch("bn-mse compares raw encoder outputs; the encoder must not end in l2-norm");
      plan.forward_passes = {"z_a = f(x_a)", "z_b = f(x_b)"};
      plan.terms.push_back({"L", "mean (z_a - z_b)^2", {"encoder"}});
      break;
  }
  if (kind == LossKind::SimSiam && arch.tag != ArchTag::SimSiam) bad_arch("the simsiam loss needs the simsiam wiring");
  if (surgical && kind != LossKind::SimSiam && kind != LossKind::Triplet && kind != LossKind::InfoNCE) {
    bad_arch("component surgery applies to triplet, infonce and simsiam losses only");
  }
  return plan;
}

void validate(const TrainConfig& c) {
  auto bad = [](const std::string& why) { throw Error(ErrorCode::InvalidArgument, why); };
  if (c.steps < 1) bad("steps must be positive");
  if (c.batch < 2) bad("batch must be at least 2");
  if (!(c.base_lr > 0.0)) bad("base_lr must be positive");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) bad("momentum must lie in [0, 1)");
  if (!(c.weight_decay >= 0.0)) bad("weight_decay must be non-negative");
  if (c.warmup < 0 || c.warmup > c.steps) bad("warmup must lie in [0, steps]");
  if (!(c.m_ma >= 0.0 && c.m_ma <= 1.0)) bad("m_ma must lie in [0, 1]");
  if (!(c.probe_lr > 0.0)) bad("probe_lr must be positive");
  if (!(c.predictor_lr_scale >= 0.0)) bad("predictor_lr_scale must be non-negative");
  if (c.metric_every < 1) bad("metric_every must be positive");
  if (!(c.holdout > 0.0 && c.holdout < 1.0)) bad("holdout must lie in (0, 1)");
}

double peak_lr(const TrainConfig& config) { return config.base_lr * config.batch / 256.0; }

double lr_at(const TrainConfig& config, int step) {
  const double peak = peak_lr(config);
  if (step < config.warmup) return peak * (step + 1) / config.warmup;
  if (config.schedule == Schedule::Constant) return peak;
  const int span = config.steps - config.warmup;
  if (span <= 0) return peak;
  const double t = std::min(1.0, static_cast<double>(step - config.warmup) / span);
  return 0.5 * peak * (1.0 + std::cos(std::numbers::pi * t));
}

namespace {

void put(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  out << buf;
}

}  // namespace

void write_trajectory_csv(std::ostream& out, const std::vector<MetricsRecord>& trajectory) {
  out << kTrajectoryHeader << '\n';
  for (const auto& r : trajectory) {
    out << r.step << ',';
    put(out, r.loss);
    out << ',';
    put(out, r.std);
    out << ',';
    put(out, r.m_o);
    out << ',';
    put(out, r.m_r);
    out << ',';
    put(out, r.covariance);
    out << ',';
    if (r.entropy_lambda) put(out, *r.entropy_lambda);
    out << ',';
    put(out, r.probe_acc);
    out << ',';
    put(out, r.lr);
    out << '\n';
  }
}

namespace {

struct Encoded {
  ForwardPass pass;
  NormalizedBatch Z;
};

Encoded encode(Network& f, const Matrix& x) {
  ForwardPass pass = f.forward(x, Mode::Train);
  NormalizedBatch Z = l2_normalize(pass.y);
  return {std::move(pass), std::move(Z)};
}

void backprop_normalized(Network& f, const Encoded& e, const Matrix& grad_Z) {
  f.backward(e.pass.tape, normalize_backward(grad_Z, e.pass.y, e.Z.raw_norms));
}

Matrix through_norm(const Matrix& grad_P, const ForwardPass& p, const NormalizedBatch& P) {
  return normalize_backward(grad_P, p.y, P.raw_norms);
}

double mean_dot(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum() / static_cast<double>(a.rows()); }

std::vector<Matrix> zero_like(const Network& net) {
  std::vector<Matrix> out;
  for (const Param* p : net.params()) out.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  return out;
}

void sgd(Network& net, std::vector<Matrix>& velocity, double lr, const TrainConfig& c) {
  auto params = net.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    Matrix g = p.grad;
    if (p.weight_decay) g += c.weight_decay * p.value;
    velocity[i] = c.momentum * velocity[i] + g;
    p.value -= lr * velocity[i];
  }
  net.mark_updated();
}

bool grads_finite(const Network& net) {
  for (const Param* p : net.params()) {
    if (!all_finite(p->grad)) return false;
  }
  return true;
}

}  // namespace

Session::Session(const ArchitectureSpec& arch, const TrainConfig& config, const Dataset& data)
    : arch_(arch),
      config_((validate(config), config)),
      plan_(wire(arch)),
      data_(&data),
      split_(split_ids(data, config.holdout, config.seed)),
      rng_(config.seed),
      negative_rng_(rng_.fork(3)),
      batches_(data, split_.train, config.batch, arch.n_views, config.augment, rng_.fork(1)) {
  if (data.dim() != arch.encoder.input_dim) {
    throw Error(ErrorCode::DimensionMismatch, "dataset width " + std::to_string(data.dim()) +
                                                  " differs from encoder input " + std::to_string(arch.encoder.input_dim));
  }
  Rng init = rng_.fork(2);
  encoder_ = make_encoder(arch.encoder, init);
  const int dim = arch.encoder.output_dim;
  predictor_ = make_predictor(arch.predictor, dim, arch.predictor_hidden, init);
  if (plan_.uses_inverse) {
    inverse_ = make_predictor(arch.predictor, dim, arch.predictor_hidden, init);
    inverse_.set_name("inverse-predictor");
  } else {
    inverse_ = Network(dim, "inverse-predictor");
  }
  if (plan_.uses_bank) bank_.emplace(data.size(), dim, config.m_ma);
  probe_ = LinearProbe(std::max(2, data.num_classes), dim);
  encoder_velocity_ = zero_like(encoder_);
  predictor_velocity_ = zero_like(predictor_);
  inverse_velocity_ = zero_like(inverse_);
  holdout_x_ = gather_rows(data.samples, split_.holdout);
  for (int id : split_.holdout) holdout_labels_.push_back(data.labels[static_cast<std::size_t>(id)]);
}

void Session::set_objective(ArchTag tag, const LossSpec& loss) {
  ArchitectureSpec next = arch_;
  next.tag = tag;
  next.loss = loss;
  if (!uses_predictor(tag)) next.predictor = PredictorVariant::Identity;
  Plan plan = wire(next);
  if (uses_predictor(tag) && predictor_.layers().empty()) bad_arch("this session was built without a predictor");
  if (plan.uses_inverse && inverse_.layers().empty()) bad_arch("this session was built without an inverse predictor");
  if (plan.uses_bank && !bank_) bank_.emplace(data_->size(), arch_.encoder.output_dim, config_.m_ma);
  arch_.tag = tag;
  arch_.loss = loss;
  plan_ = std::move(plan);
}

Session::StepOutcome Session::compute(const ViewBatch& batch, int step) {
  StepOutcome out;
  out.labels = batch.labels;
  const LossSpec& loss = arch_.loss;
  const double M = static_cast<double>(batch.ids.size());
  update_encoder_ = true;
  update_predictor_ = plan_.uses_predictor;

  switch (arch_.tag) {
    case ArchTag::NaiveSiamese: {
      Encoded a = encode(encoder_, batch.views[0]);
      Encoded b = encode(encoder_, batch.views[1]);
      Matrix ga;
      Matrix gb;
      auto both = [&](const LossOutput& oa, const LossOutput& ob) {
        ga = oa.grad / 2.0;
        gb = ob.grad / 2.0;
        out.loss = (oa.value + ob.value) / 2.0;
      };
      switch (loss.kind) {
        case LossKind::Cosine:
          out.loss = -mean_dot(a.Z.Z, b.Z.Z);
          ga = -b.Z.Z / M;
          if (loss.symmetric) gb = -a.Z.Z / M;
          break;
        case LossKind::Triplet: {
          const auto negatives = draw_negatives(static_cast<int>(M), negative_rng_);
          LossOutput oa = triplet_loss(a.Z, b.Z, negatives, loss.surgery);
          if (loss.symmetric) {
            both(oa, triplet_loss(b.Z, a.Z, negatives, loss.surgery));
          } else {
            ga = oa.grad;
            out.loss = oa.value;
          }
          break;
        }
        case LossKind::InfoNCE: {
          LossOutput oa = infonce_loss(a.Z, b.Z, loss.temperature, loss.surgery);
          out.entropy = mean_row_entropy(*oa.lambda);
          if (loss.symmetric) {
            both(oa, infonce_loss(b.Z, a.Z, loss.temperature, loss.surgery));
          } else {
            ga = oa.grad;
            out.loss = oa.value;
          }
          break;
        }
        case LossKind::Decorrelation: {
          LossOutput oa = decorrelation_loss(a.Z.Z);
          if (loss.symmetric) {
            both(oa, decorrelation_loss(b.Z.Z));
          } else {
            ga = oa.grad;
            out.loss = oa.value;
          }
          break;
        }
        case LossKind::ProbeCenter:
        case LossKind::ProbeResidual: {
          const ProbeMode mode = loss.kind == LossKind::ProbeCenter ? ProbeMode::Center : ProbeMode::Residual;
          LossOutput oa = probe_loss(a.Z, mode);
          if (loss.symmetric) {
            both(oa, probe_loss(b.Z, mode));
          } else {
            ga = oa.grad;
            out.loss = oa.value;
          }
          break;
        }
        default:
          bad_arch("unsupported loss for naive-siamese");
      }
      backprop_normalized(encoder_, a, ga);
      if (gb.size() > 0) backprop_normalized(encoder_, b, gb);
      out.Z_a = std::move(a.Z.Z);
      break;
    }
    case ArchTag::SimSiam: {
      Encoded a = encode(encoder_, batch.views[0]);
      Encoded b = encode(encoder_, batch.views[1]);
      ForwardPass pa = predictor_.forward(a.pass.y, Mode::Train);
      ForwardPass pb = predictor_.forward(b.pass.y, Mode::Train);
      const NormalizedBatch Pa = l2_normalize(pa.y);
      const NormalizedBatch Pb = l2_normalize(pb.y);
      const PairLossOutput o = simsiam_loss(Pa, Pb, a.Z, b.Z, loss.surgery);
      out.loss = o.value;
      encoder_.backward(a.pass.tape, predictor_.backward(pa.tape, through_norm(o.grad_a, pa, Pa)));
      encoder_.backward(b.pass.tape, predictor_.backward(pb.tape, through_norm(o.grad_b, pb, Pb)));
      out.Z_a = predictor_in_encoder() ? Pa.Z : std::move(a.Z.Z);
      break;
    }
    case ArchTag::MirrorSimSiam: {
      Encoded a = encode(encoder_, batch.views[0]);
      Encoded b = encode(encoder_, batch.views[1]);
      ForwardPass pa = predictor_.forward(a.pass.y, Mode::Train);
      ForwardPass pb = predictor_.forward(b.pass.y, Mode::Train);
      const NormalizedBatch Pa = l2_normalize(pa.y);
      const NormalizedBatch Pb = l2_normalize(pb.y);
      const MirrorLossOutput o = mirror_loss(Pa, Pb, a.Z, b.Z);
      out.loss = o.value;
      backprop_normalized(encoder_, a, o.grad_z_a);
      backprop_normalized(encoder_, b, o.grad_z_b);
      predictor_.backward(pa.tape, through_norm(o.grad_p_a, pa, Pa));
      predictor_.backward(pb.tape, through_norm(o.grad_p_b, pb, Pb));
      out.Z_a = std::move(a.Z.Z);
      break;
    }
    case ArchTag::SymmetricPredictor: {
      Encoded a = encode(encoder_, batch.views[0]);
      Encoded b = encode(encoder_, batch.views[1]);
      ForwardPass pa = predictor_.forward(a.pass.y, Mode::Train);
      ForwardPass pb = predictor_.forward(b.pass.y, Mode::Train);
      const NormalizedBatch Pa = l2_normalize(pa.y);
      const NormalizedBatch Pb = l2_normalize(pb.y);
      const double scale = 2.0 * M;
      const double enc_value = -mean_dot(Pa.Z, Pb.Z);
      const double pred_value = -(mean_dot(Pa.Z, b.Z.Z) + mean_dot(Pb.Z, a.Z.Z)) / 2.0;
      const SymmetricVariant variant = arch_.symmetric_variant;
      const bool encoder_turn = variant != SymmetricVariant::Alternating || step % 2 == 1;
      const bool predictor_turn = variant != SymmetricVariant::Alternating || step % 2 == 0;
      out.loss = variant == SymmetricVariant::Joint ? enc_value : enc_value + pred_value;
      if (encoder_turn) {
        encoder_.backward(a.pass.tape, predictor_.backward(pa.tape, through_norm(-Pb.Z / scale, pa, Pa)));
        encoder_.backward(b.pass.tape, predictor_.backward(pb.tape, through_norm(-Pa.Z / scale, pb, Pb)));
      }
      if (variant == SymmetricVariant::Alternating && !predictor_turn) predictor_.zero_grad();
      if (variant != SymmetricVariant::Joint && predictor_turn) {
        predictor_.backward(pa.tape, through_norm(-b.Z.Z / scale, pa, Pa));
        predictor_.backward(pb.tape, through_norm(-a.Z.Z / scale, pb, Pb));
      }
      update_encoder_ = encoder_turn;
      update_predictor_ = predictor_turn;
      out.Z_a = Pa.Z;
      break;
    }
    case ArchTag::InversePredictor: {
      Encoded a = encode(encoder_, batch.views[0]);
      Encoded b = encode(encoder_, batch.views[1]);
      const InverseStepResult r = inverse_predictor_step(predictor_, inverse_, a.pass.y, b.pass.y);
      out.loss = r.pred_loss + r.inverse_loss + r.encoder_loss;
      encoder_.backward(a.pass.tape, r.grad_z_a);
      encoder_.backward(b.pass.tape, r.grad_z_b);
      out.Z_a = r.P_a;
      break;
    }
    case ArchTag::MovingAverageTarget: {
      Encoded a = encode(encoder_, batch.views[0]);
      const Matrix Z_b = l2_normalize(encoder_.forward(batch.views[1], Mode::Train).y).Z;
      moving_average_update(*bank_, batch.ids, Z_b);
      const Matrix target = l2_normalize(bank_->gather(batch.ids)).Z;
      const LossOutput o = cosine_loss(a.Z, target);
      out.loss = o.value;
      backprop_normalized(encoder_, a, o.grad);
      out.Z_a = std::move(a.Z.Z);
      break;
    }
    case ArchTag::SameBatchEOA: {
      Encoded first = encode(encoder_, batch.views[0]);
      std::vector<NormalizedBatch> views;
      views.push_back(first.Z);
      for (std::size_t v = 1; v < batch.views.size(); ++v) {
        views.push_back(l2_normalize(encoder_.forward(batch.views[v], Mode::Train).y));
      }
      const Matrix target = l2_normalize(same_batch_eoa_target(views)).Z;
      const LossOutput o = cosine_loss(first.Z, target);
      out.loss = o.value;
      backprop_normalized(encoder_, first, o.grad);
      out.Z_a = std::move(first.Z.Z);
      break;
    }
    case ArchTag::BNMSE: {
      ForwardPass a = encoder_.forward(batch.views[0], Mode::Train);
      ForwardPass b = encoder_.forward(batch.views[1], Mode::Train);
      const LossOutput o = raw_mse_loss(a.y, b.y);
      out.loss = o.value;
      encoder_.backward(a.tape, o.grad);
      encoder_.backward(b.tape, -o.grad);
      out.Z_a = l2_normalize(a.y).Z;
      break;
    }
  }
  return out;
}

void Session::apply_update(int step) {
  const double lr = lr_at(config_, step - 1);
  const double fixed = config_.predictor_lr_scale * (config_.fixed_predictor_lr ? peak_lr(config_) : lr);
  if (update_encoder_) sgd(encoder_, encoder_velocity_, lr, config_);
  if (update_predictor_ && !predictor_.layers().empty()) sgd(predictor_, predictor_velocity_, fixed, config_);
  if (plan_.uses_inverse) sgd(inverse_, inverse_velocity_, fixed, config_);
}

double Session::step() {
  const ViewBatch batch = batches_.next();
  const int t = steps_done_ + 1;
  encoder_.zero_grad();
  predictor_.zero_grad();
  inverse_.zero_grad();
  StepOutcome outcome;
  try {
    outcome = compute(batch, t);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ZeroNormRow) {
      throw Error(ErrorCode::DivergedTraining, "step " + std::to_string(t) + ": representations vanished (" + e.what() + ")");
    }
    throw;
  }
  if (!std::isfinite(outcome.loss) || !grads_finite(encoder_) || !grads_finite(predictor_) || !grads_finite(inverse_)) {
    throw Error(ErrorCode::DivergedTraining, "step " + std::to_string(t) + ": loss or gradient is not finite");
  }
  apply_update(t);
  probe_update(probe_, outcome.Z_a, outcome.labels, config_.probe_lr);
  steps_done_ = t;
  if (t % config_.metric_every == 0 || t == config_.steps) record_metrics(outcome);
  return outcome.loss;
}

void Session::run(int count) {
  for (int i = 0; i < count; ++i) step();
}

void Session::record_metrics(const StepOutcome& outcome) {
  MetricsRecord r;
  r.step = steps_done_;
  r.loss = outcome.loss;
  r.std = std_metric(outcome.Z_a);
  const CenterResidual cr = decompose(outcome.Z_a);
  r.m_o = cr.m_o;
  r.m_r = cr.m_r;
  r.covariance = covariance_metric(outcome.Z_a);
  r.entropy_lambda = outcome.entropy;
  r.probe_acc = holdout_accuracy();
  r.lr = lr_at(config_, steps_done_ - 1);
  trajectory_.push_back(r);
}

const MetricsRecord& Session::latest() const {
  if (trajectory_.empty()) throw Error(ErrorCode::InvalidArgument, "no metrics recorded yet");
  return trajectory_.back();
}

RunRecord Session::record() const {
  RunRecord out;
  out.trajectory = trajectory_;
  out.dim = arch_.encoder.output_dim;
  out.checkpoint = checkpoint();
  if (!trajectory_.empty()) {
    const auto& last = trajectory_.back();
    out.collapsed = collapse_verdict(last.m_o, last.std, out.dim, config_.thresholds);
  }
  return out;
}

std::string Session::checkpoint() const {
  std::vector<const Network*> nets{&encoder_};
  if (!predictor_.layers().empty()) nets.push_back(&predictor_);
  if (!inverse_.layers().empty()) nets.push_back(&inverse_);
  std::ostringstream out;
  save_checkpoint(out, nets);
  return out.str();
}

bool Session::predictor_in_encoder() const {
  if (arch_.tag == ArchTag::SymmetricPredictor || arch_.tag == ArchTag::InversePredictor) return true;
  // Surgery decomposes the gradient on P, so P is the tracked representation.
  return arch_.tag == ArchTag::SimSiam && !arch_.loss.surgery.full();
}

NormalizedBatch Session::represent(const Matrix& x, Mode mode) {
  Matrix z = encoder_.forward(x, mode).y;
  if (predictor_in_encoder()) z = predictor_.forward(z, mode).y;
  return l2_normalize(z);
}

Matrix Session::predict(const Matrix& z) { return predictor_.forward(z, Mode::Train).y; }

double Session::holdout_accuracy() {
  const NormalizedBatch Z = represent(holdout_x_, Mode::Eval);
  return probe_accuracy(probe_, Z.Z, holdout_labels_);
}

RunRecord train(const ArchitectureSpec& arch, const TrainConfig& config, const Dataset& data) {
  Session session(arch, config, data);
  session.run(config.steps);
  return session.record();
}

}  // namespace siamlab
