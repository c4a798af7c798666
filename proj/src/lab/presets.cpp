#include "lab/presets.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "core/decomposition.hpp"
#include "core/errors.hpp"
#include "core/metrics.hpp"

namespace siamlab {

const char* expectation_text(Expectation e) {
  switch (e) {
    case Expectation::Collapse: return "collapse";
    case Expectation::NoCollapse: return "no collapse";
    case Expectation::CenterGrows: return "m_o increases over the window";
    case Expectation::ResidualGrows: return "m_r increases over the window";
    case Expectation::EtaSigns: return "o_p crossing negative, o_z crossing positive";
    case Expectation::Recovery: return "m_r < 0.1 after the collapse phase, m_r > 0.5 after regularization";
    case Expectation::Alignment: return "r_e alignment above o_e alignment at tau 0.1 and 0.2";
    case Expectation::CovarianceFalls: return "final covariance below the step-100 covariance";
    case Expectation::CovarianceHolds: return "final covariance not below the step-100 covariance";
    case Expectation::BiasFixedPoint: return "cossim(b_p, o_z) >= 0.95 and fixed-point residual < 0.2";
    case Expectation::BiasAligned: return "cossim(predictor bias, o_z) >= 0.5";
  }
  return "";
}

std::optional<double> PresetResult::finding(const std::string& name) const {
  for (const auto& f : findings) {
    if (f.name == name) return f.value;
  }
  return std::nullopt;
}

std::vector<double> alignment_taus() { return {0.05, 0.1, 0.2, 0.5, 1.0}; }

namespace {

RunSpec toy() {
  RunSpec s;
  s.train.steps = 2000;
  s.train.metric_every = 50;
  return s;
}

RunSpec no_predictor(RunSpec s, ArchTag tag, LossKind kind) {
  s.arch.tag = tag;
  s.arch.predictor = PredictorVariant::Identity;
  s.arch.loss.kind = kind;
  return s;
}

RunSpec with_loss(RunSpec s, ArchTag tag, LossKind kind) {
  s.arch.tag = tag;
  s.arch.loss.kind = kind;
  return s;
}

RunSpec surgery(RunSpec s, bool keep_o, bool keep_r) {
  s.arch.loss.surgery = Surgery{keep_o, keep_r};
  return s;
}

RunSpec infonce(double tau) {
  RunSpec s = no_predictor(toy(), ArchTag::NaiveSiamese, LossKind::InfoNCE);
  s.arch.loss.temperature = tau;
  return s;
}

RunSpec l2_predictor(PredictorVariant v) {
  RunSpec s = toy();
  s.arch.encoder.l2_norm = true;
  s.arch.predictor = v;
  return s;
}

RunSpec bn_mse(bool final_bn) {
  RunSpec s = no_predictor(toy(), ArchTag::BNMSE, LossKind::RawMSE);
  s.arch.encoder.final_bn = final_bn;
  s.arch.encoder.final_bn_affine = false;
  return s;
}

std::vector<Preset> build_registry() {
  std::vector<Preset> r;
  auto add = [&](std::string name, std::string ref, std::string what, RunSpec spec, Expectation e) {
    r.push_back(Preset{std::move(name), std::move(ref), std::move(what), std::move(spec), e});
  };
  using E = Expectation;

  {
    RunSpec ma = no_predictor(toy(), ArchTag::MovingAverageTarget, LossKind::Cosine);
    add("table1-moving-average", "table1", "per-sample moving-average target, no predictor", ma, E::NoCollapse);
    RunSpec sb = no_predictor(toy(), ArchTag::SameBatchEOA, LossKind::Cosine);
    sb.arch.n_views = 10;
    add("table1-samebatch-10", "table1", "target is the mean of 9 other views of the same sample", sb, E::Collapse);
    sb.arch.n_views = 25;
    add("table1-samebatch-25", "table1", "target is the mean of 24 other views of the same sample", sb, E::Collapse);
  }
  add("table2-simsiam", "table2", "predictor on one branch, stop-gradient on the other", toy(), E::NoCollapse);
  add("table2-naive", "table2", "plain cosine loss, no predictor, no stop-gradient",
      no_predictor(toy(), ArchTag::NaiveSiamese, LossKind::Cosine), E::Collapse);
  add("table2-mirror", "table2", "gradient and stop-gradient paths exchanged",
      with_loss(toy(), ArchTag::MirrorSimSiam, LossKind::Mirror), E::Collapse);
  add("table2-symmetric-predictor", "table2", "predictor on both branches",
      with_loss(toy(), ArchTag::SymmetricPredictor, LossKind::Cosine), E::Collapse);
  add("fig2-inverse-predictor", "fig2", "target processed by a trainable inverse predictor",
      with_loss(toy(), ArchTag::InversePredictor, LossKind::Cosine), E::NoCollapse);

  {
    RunSpec tri = no_predictor(toy(), ArchTag::NaiveSiamese, LossKind::Triplet);
    add("table3-baseline", "table3", "triplet target Z_b - Z_n", tri, E::NoCollapse);
    add("table3-keep-oe", "table3", "triplet target keeps only o_e of the extra gradient", surgery(tri, true, false),
        E::NoCollapse);
    add("table3-keep-re", "table3", "triplet target keeps only r_e of the extra gradient", surgery(tri, false, true),
        E::Collapse);
  }
  add("table4-full", "table4", "SimSiam, extra gradient kept whole", toy(), E::NoCollapse);
  add("table4-keep-oe", "table4", "SimSiam target P_b + o_e", surgery(toy(), true, false), E::NoCollapse);
  add("table4-keep-re", "table4", "SimSiam target P_b + r_e", surgery(toy(), false, true), E::NoCollapse);
  add("table4-none", "table4", "SimSiam target P_b only", surgery(toy(), false, false), E::Collapse);

  add("table5-mlp", "table5", "l2-normalized encoder, FC-BN-ReLU-FC predictor",
      l2_predictor(PredictorVariant::NonlinearMLP), E::NoCollapse);
  add("table5-two-fc", "table5", "l2-normalized encoder, FC-FC-bias predictor", l2_predictor(PredictorVariant::TwoFC),
      E::NoCollapse);
  add("table5-tanh-fc", "table5", "l2-normalized encoder, tanh(FC) predictor", l2_predictor(PredictorVariant::TanhFC),
      E::NoCollapse);
  add("table5-bias", "table5", "l2-normalized encoder, single bias predictor", l2_predictor(PredictorVariant::BiasOnly),
      E::NoCollapse);
  {
    RunSpec single = l2_predictor(PredictorVariant::BiasOnly);
    single.arch.encoder.final_bn = false;
    single.train.augment.sigma = 0.3;
    single.train.predictor_lr_scale = 0.1;
    add("table6-bias-single", "table6", "bias-only predictor compared with the batch center", single,
        E::BiasFixedPoint);
    RunSpec mlp = l2_predictor(PredictorVariant::NonlinearMLP);
    mlp.arch.encoder.final_bn = false;
    add("table6-bias-mlp", "table6", "last bias of the MLP predictor compared with the batch center", mlp,
        E::BiasAligned);
  }
  {
    RunSpec probe = no_predictor(toy(), ArchTag::NaiveSiamese, LossKind::ProbeCenter);
    probe.train.steps = kProbeWindowStart + kProbeWindow;
    probe.train.warmup = 0;
    probe.train.schedule = Schedule::Constant;
    add("fig3-probe-center", "fig3", "loss -Z_a . sg(o_z)", probe, E::CenterGrows);
    probe.arch.loss.kind = LossKind::ProbeResidual;
    add("fig3-probe-residual", "fig3", "loss -Z_a . sg(Z_a - o_z)", probe, E::ResidualGrows);
  }
  add("fig4a-eta-sweep", "fig4a", "o_e components along o_p and o_z on a trained SimSiam", toy(), E::EtaSigns);
  {
    RunSpec rec = toy();
    rec.train.steps = 3000;
    add("fig4b-decorrelation-recovery", "fig4b",
        "SimSiam, then a cosine collapse phase until m_r < 0.1, then the decorrelation loss alone", rec,
        E::Recovery);
  }
  add("fig4c-alignment", "fig4c", "cosine between InfoNCE r_e / o_e and the decorrelation descent direction",
      infonce(0.2), E::Alignment);
  add("fig5-simsiam", "fig5", "covariance trajectory of SimSiam", toy(), E::CovarianceFalls);
  add("fig5-infonce", "fig5", "covariance trajectory of InfoNCE", infonce(0.2), E::CovarianceFalls);
  add("fig5-infonce-no-re", "fig5", "InfoNCE with r_e removed from the negative gradient",
      surgery(infonce(0.2), true, false), E::CovarianceHolds);
  add("fig6-temperature", "fig6", "InfoNCE at tau 0.2; sweep loss.temperature for the temperature study",
      infonce(0.2), E::NoCollapse);
  add("fig8-bn-mse", "fig8", "raw MSE with a final batch-norm encoder, no predictor", bn_mse(true), E::NoCollapse);
  add("fig8-mse-no-bn", "fig8", "raw MSE without the final batch norm", bn_mse(false), E::Collapse);
  return r;
}

const MetricsRecord* record_at(const std::vector<MetricsRecord>& t, int step) {
  for (const auto& r : t) {
    if (r.step == step) return &r;
  }
  return nullptr;
}

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(4);
  o << v;
  return o.str();
}

CenterPair measure_centers(Session& s, int batches) {
  const int dim = s.arch().encoder.output_dim;
  CenterPair c{Vector::Zero(dim), Vector::Zero(dim)};
  for (int k = 0; k < batches; ++k) {
    const ViewBatch b = s.next_batch();
    const Matrix z = s.encoder().forward(b.views[0], Mode::Train).y;
    c.o_z += batch_center(l2_normalize(z).Z);
    c.o_p += batch_center(l2_normalize(s.predict(z)).Z);
  }
  c.o_z /= batches;
  c.o_p /= batches;
  return c;
}

std::vector<BiasProbeBatch> bias_history(Session& s, int batches) {
  std::vector<BiasProbeBatch> out;
  for (int k = 0; k < batches; ++k) {
    const ViewBatch b = s.next_batch();
    BiasProbeBatch h;
    h.Z_a = s.represent(b.views[0], Mode::Train).Z;
    h.Z_b = s.represent(b.views[1], Mode::Train).Z;
    h.p_a = s.predict(h.Z_a);
    out.push_back(std::move(h));
  }
  return out;
}

Vector last_bias(Network& predictor) {
  for (auto it = predictor.layers().rbegin(); it != predictor.layers().rend(); ++it) {
    if (const Param* b = it->find("b")) return b->value.transpose();
  }
  throw Error(ErrorCode::UntrainedPredictor, "predictor has no bias parameter");
}

std::optional<double> crossing_of(const Vector& o_e, const Vector& o_ref) {
  return eta_sweep(o_e, o_ref, default_eta_grid()).zero_crossing;
}

}  // namespace

const std::vector<Preset>& preset_registry() {
  static const std::vector<Preset> registry = build_registry();
  return registry;
}

const Preset& find_preset(const std::string& name) {
  for (const Preset& p : preset_registry()) {
    if (p.name == name) return p;
  }
  throw Error(ErrorCode::UnknownPreset, "no preset named '" + name + "'");
}

PresetResult execute(const Preset& preset, const RunSpec& spec) {
  const Dataset data = load_dataset(spec.data);
  Session session(spec.arch, spec.train, data);
  PresetResult out;
  std::ostringstream summary;

  if (preset.expectation == Expectation::Recovery) {
    const int total = spec.train.steps;
    if (total <= kRecoveryWarmPhase + kRecoveryCollapseBudget) {
      throw Error(ErrorCode::InvalidOverride, "train.steps must exceed " +
                                                  std::to_string(kRecoveryWarmPhase + kRecoveryCollapseBudget) +
                                                  " for the recovery preset");
    }
    session.run(kRecoveryWarmPhase);
    session.set_objective(ArchTag::NaiveSiamese, LossSpec{LossKind::Cosine, 0.2, {}, true});
    const int every = spec.train.metric_every;
    double collapsed_m_r = 1.0;
    int collapse_steps = 0;
    while (collapse_steps < kRecoveryCollapseBudget) {
      const int chunk = std::min(every, kRecoveryCollapseBudget - collapse_steps);
      session.run(chunk);
      collapse_steps += chunk;
      if (session.steps_done() % every == 0) {
        collapsed_m_r = session.latest().m_r;
        if (collapsed_m_r < kRecoveryCollapseTarget) break;
      }
    }
    session.set_objective(ArchTag::NaiveSiamese, LossSpec{LossKind::Decorrelation, 0.2, {}, true});
    session.run(total - session.steps_done());
    const double final_m_r = session.latest().m_r;
    out.findings = {{"collapse_phase_end_step", static_cast<double>(kRecoveryWarmPhase + collapse_steps)},
                    {"m_r_after_collapse", collapsed_m_r},
                    {"m_r_final", final_m_r}};
    out.expectation_held = collapsed_m_r < kRecoveryCollapseTarget && final_m_r > kRecoveryTarget;
    summary << "m_r after collapse " << fmt(collapsed_m_r) << ", final m_r " << fmt(final_m_r);
  } else {
    session.run(spec.train.steps);
  }

  out.record = session.record();
  out.record.config = describe(spec);
  const auto& t = out.record.trajectory;
  const MetricsRecord& last = session.latest();

  switch (preset.expectation) {
    case Expectation::Collapse:
    case Expectation::NoCollapse: {
      const bool want = preset.expectation == Expectation::Collapse;
      out.expectation_held = out.record.collapsed == want;
      summary << (out.record.collapsed ? "collapse" : "no collapse") << " (m_o " << fmt(last.m_o) << ", std "
              << fmt(last.std) << ", m_r " << fmt(last.m_r) << ", probe " << fmt(last.probe_acc) << ")";
      break;
    }
    case Expectation::CenterGrows:
    case Expectation::ResidualGrows: {
      const MetricsRecord* start = record_at(t, kProbeWindowStart);
      const MetricsRecord* end = record_at(t, kProbeWindowStart + kProbeWindow);
      if (!start || !end) {
        throw Error(ErrorCode::InvalidOverride, "probe window needs metrics at steps " +
                                                    std::to_string(kProbeWindowStart) + " and " +
                                                    std::to_string(kProbeWindowStart + kProbeWindow));
      }
      const bool center = preset.expectation == Expectation::CenterGrows;
      const double a = center ? start->m_o : start->m_r;
      const double b = center ? end->m_o : end->m_r;
      out.findings = {{center ? "m_o_start" : "m_r_start", a}, {center ? "m_o_end" : "m_r_end", b}};
      out.expectation_held = b > a;
      summary << (center ? "m_o " : "m_r ") << fmt(a) << " -> " << fmt(b);
      break;
    }
    case Expectation::EtaSigns: {
      const CenterPair c = measure_centers(session, 20);
      const auto eta_p = crossing_of(c.o_z - c.o_p, c.o_p);
      const auto eta_z = crossing_of(c.o_p - c.o_z, c.o_z);
      Table table{"eta.csv", {"eta", "cossim_o_p", "cossim_o_z"}, {}};
      const Vector grid = default_eta_grid();
      const EtaSweepResult sp = eta_sweep(c.o_z - c.o_p, c.o_p, grid);
      const EtaSweepResult sz = eta_sweep(c.o_p - c.o_z, c.o_z, grid);
      for (Eigen::Index i = 0; i < grid.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        table.rows.push_back({grid(i), sp.similarities[k], sz.similarities[k]});
      }
      out.tables.push_back(std::move(table));
      if (eta_p) out.findings.push_back({"eta_p_crossing", *eta_p});
      if (eta_z) out.findings.push_back({"eta_z_crossing", *eta_z});
      out.expectation_held = eta_p && eta_z && *eta_p < 0.0 && *eta_z > 0.0;
      summary << "o_p crossing " << (eta_p ? fmt(*eta_p) : "none") << ", o_z crossing "
              << (eta_z ? fmt(*eta_z) : "none");
      out.centers = c;
      break;
    }
    case Expectation::Recovery:
      break;
    case Expectation::Alignment: {
      const ViewBatch b = session.next_batch();
      const Matrix Z_a = session.represent(b.views[0], Mode::Train).Z;
      const Matrix Z_b = session.represent(b.views[1], Mode::Train).Z;
      const std::vector<double> taus = alignment_taus();
      const auto rows = decorrelation_alignment_probe(Z_a, Z_b, taus);
      Table table{"alignment.csv", {"tau", "r_e", "o_e"}, {}};
      bool held = true;
      for (const auto& row : rows) {
        table.rows.push_back({row.tau, row.r_e, row.o_e});
        if (std::abs(row.tau - 0.1) < 1e-12 || std::abs(row.tau - 0.2) < 1e-12) {
          held = held && row.r_e && row.o_e && *row.r_e > *row.o_e;
          if (row.r_e) out.findings.push_back({"r_e_alignment_tau_" + fmt(row.tau), *row.r_e});
          if (row.o_e) out.findings.push_back({"o_e_alignment_tau_" + fmt(row.tau), *row.o_e});
        }
      }
      out.tables.push_back(std::move(table));
      out.expectation_held = held;
      summary << "alignment at tau 0.1/0.2: r_e " << fmt(out.finding("r_e_alignment_tau_0.1").value_or(NAN)) << "/"
              << fmt(out.finding("r_e_alignment_tau_0.2").value_or(NAN)) << ", o_e "
              << fmt(out.finding("o_e_alignment_tau_0.1").value_or(NAN)) << "/"
              << fmt(out.finding("o_e_alignment_tau_0.2").value_or(NAN));
      break;
    }
    case Expectation::CovarianceFalls:
    case Expectation::CovarianceHolds: {
      const MetricsRecord* early = record_at(t, 100);
      if (!early) throw Error(ErrorCode::InvalidOverride, "train.metric_every must divide 100 for this preset");
      out.findings = {{"covariance_step_100", early->covariance}, {"covariance_final", last.covariance}};
      const bool falls = last.covariance < early->covariance;
      out.expectation_held = preset.expectation == Expectation::CovarianceFalls ? falls : !falls;
      summary << "covariance " << fmt(early->covariance) << " at step 100 -> " << fmt(last.covariance);
      break;
    }
    case Expectation::BiasFixedPoint:
    case Expectation::BiasAligned: {
      const auto history = bias_history(session, 20);
      const BiasProbeResult probe = bias_center_probe(last_bias(session.predictor()), history);
      out.findings = {{"cossim", probe.cossim}, {"fixed_point_residual", probe.residual}, {"m_bar", probe.m_bar}};
      if (preset.expectation == Expectation::BiasFixedPoint) {
        out.expectation_held = probe.cossim >= 0.95 && probe.residual < 0.2;
      } else {
        out.expectation_held = probe.cossim >= 0.5;
      }
      summary << "cossim(b, o_z) " << fmt(probe.cossim) << ", fixed-point residual " << fmt(probe.residual);
      break;
    }
  }

  out.record.checkpoint = session.checkpoint();
  out.checkpoint = out.record.checkpoint;
  out.summary = summary.str();
  return out;
}

}  // namespace siamlab
