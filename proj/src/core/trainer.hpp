#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "core/data.hpp"
#include "core/losses.hpp"
#include "core/metrics.hpp"
#include "core/network.hpp"

namespace siamlab {

enum class ArchTag {
  NaiveSiamese,
  SimSiam,
  MirrorSimSiam,
  SymmetricPredictor,
  InversePredictor,
  MovingAverageTarget,
  SameBatchEOA,
  BNMSE,
};

const char* arch_tag_name(ArchTag tag);
std::optional<ArchTag> parse_arch_tag(const std::string& name);

/// How the symmetric predictor is trained.
///   Joint:       the predictor is part of the encoder, L = D(p_a, sg p_b)/2 + D(p_b, sg p_a)/2.
///   Extra:       adds L_pred = D(h(sg z_a), z_b)/2 + D(h(sg z_b), z_a)/2 on h alone.
///   Alternating: Extra, but h and the encoder are updated on alternate steps.
enum class SymmetricVariant { Joint, Extra, Alternating };

const char* symmetric_variant_name(SymmetricVariant v);
std::optional<SymmetricVariant> parse_symmetric_variant(const std::string& name);

struct ArchitectureSpec {
  ArchTag tag = ArchTag::SimSiam;
  EncoderConfig encoder;
  PredictorVariant predictor = PredictorVariant::NonlinearMLP;
  int predictor_hidden = 16;
  LossSpec loss{LossKind::SimSiam, 0.2, {}, true};
  int n_views = 2;
  SymmetricVariant symmetric_variant = SymmetricVariant::Joint;
};

/// Declarative description of one training step.
struct LossTerm {
  std::string name;
  std::string expression;
  std::vector<std::string> updates;  // parameter sets reached by this term
};

struct Plan {
  ArchTag tag = ArchTag::SimSiam;
  bool uses_predictor = false;
  bool uses_inverse = false;
  bool uses_bank = false;
  int n_views = 2;
  std::vector<std::string> forward_passes;
  std::vector<std::string> detached;
  std::vector<LossTerm> terms;

  /// True when some loss term reaches the named parameter set.
  bool updates(const std::string& params) const;
};

Plan wire(const ArchitectureSpec& arch);

enum class Schedule { Cosine, Constant };

struct TrainConfig {
  int steps = 2000;
  int batch = 128;
  double base_lr = 1.5;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  int warmup = 100;
  Schedule schedule = Schedule::Cosine;
  std::uint64_t seed = 0;
  double m_ma = 0.8;
  double probe_lr = 0.1;
  int metric_every = 50;
  bool fixed_predictor_lr = true;
  double predictor_lr_scale = 1.0;
  double holdout = 0.2;
  AugmentParams augment;
  CollapseThresholds thresholds;
};

void validate(const TrainConfig& config);

/// Peak learning rate base_lr * M / 256.
double peak_lr(const TrainConfig& config);
/// Linear warmup to the peak, then cosine decay to zero (or flat).
double lr_at(const TrainConfig& config, int step);

struct MetricsRecord {
  int step = 0;
  double loss = 0.0;
  double std = 0.0;
  double m_o = 0.0;
  double m_r = 0.0;
  double covariance = 0.0;
  std::optional<double> entropy_lambda;
  double probe_acc = 0.0;
  double lr = 0.0;
};

struct RunRecord {
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<MetricsRecord> trajectory;
  std::string checkpoint;  // text checkpoint at the time of the record
  bool collapsed = false;
  int dim = 0;
};

inline constexpr const char* kTrajectoryHeader = "step,loss,std,m_o,m_r,covariance,entropy_lambda,probe_acc,lr";

void write_trajectory_csv(std::ostream& out, const std::vector<MetricsRecord>& trajectory);

/// Stateful training run. Steps are counted from 1; metrics are recorded
/// after step t whenever t is a multiple of metric_every or the last step.
class Session {
 public:
  Session(const ArchitectureSpec& arch, const TrainConfig& config, const Dataset& data);

  /// Switches the objective for subsequent steps (used for multi-phase runs).
  /// The networks built at construction are kept.
  void set_objective(ArchTag tag, const LossSpec& loss);

  /// One optimizer step; returns the loss value.
  double step();
  /// Runs `count` steps, recording metrics on schedule.
  void run(int count);

  int steps_done() const { return steps_done_; }
  const ArchitectureSpec& arch() const { return arch_; }
  const TrainConfig& config() const { return config_; }
  const Plan& plan() const { return plan_; }
  const std::vector<MetricsRecord>& trajectory() const { return trajectory_; }
  const MetricsRecord& latest() const;
  RunRecord record() const;
  /// Text checkpoint of the encoder, predictor and inverse predictor (when present).
  std::string checkpoint() const;

  Network& encoder() { return encoder_; }
  Network& predictor() { return predictor_; }
  Network& inverse() { return inverse_; }
  const LinearProbe& probe() const { return probe_; }

  /// Draws the next training batch (consumes the iterator like a step would).
  ViewBatch next_batch() { return batches_.next(); }
  /// Symmetric and inverse predictor runs treat h(f(x)) as the encoder, so
  /// their metrics and probe read the predictor output.
  bool predictor_in_encoder() const;
  /// Normalized representation in the given mode; no tape kept.
  NormalizedBatch represent(const Matrix& x, Mode mode);
  /// Predictor output on raw encoder features, train mode, no tape kept.
  Matrix predict(const Matrix& z);
  /// Held-out accuracy of the online probe on clean eval-mode features.
  double holdout_accuracy();

 private:
  struct StepOutcome {
    double loss = 0.0;
    Matrix Z_a;
    std::optional<double> entropy;
    std::vector<int> labels;
  };

  StepOutcome compute(const ViewBatch& batch, int step);
  void apply_update(int step);
  void record_metrics(const StepOutcome& outcome);

  ArchitectureSpec arch_;
  TrainConfig config_;
  Plan plan_;
  const Dataset* data_;
  Split split_;
  Matrix holdout_x_;
  std::vector<int> holdout_labels_;
  Rng rng_;
  Rng negative_rng_;
  BatchIterator batches_;
  Network encoder_;
  Network predictor_;
  Network inverse_;
  std::optional<MovingAverageBank> bank_;
  LinearProbe probe_;
  std::vector<Matrix> encoder_velocity_;
  std::vector<Matrix> predictor_velocity_;
  std::vector<Matrix> inverse_velocity_;
  bool update_predictor_ = true;
  bool update_encoder_ = true;
  int steps_done_ = 0;
  std::vector<MetricsRecord> trajectory_;
};

/// Builds a session and runs config.steps steps.
RunRecord train(const ArchitectureSpec& arch, const TrainConfig& config, const Dataset& data);

}  // namespace siamlab
