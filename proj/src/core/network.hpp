#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/linalg.hpp"
#include "core/rng.hpp"

namespace siamlab {

enum class LayerKind { FullyConnected, BiasOnly, BatchNorm, ReLU, Tanh, L2Norm };
enum class Mode { Train, Eval };

const char* layer_kind_name(LayerKind kind);

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  bool weight_decay = true;
};

/// Activations a layer needs to run its backward pass.
struct LayerCache {
  Mode mode = Mode::Train;
  Matrix input;
  Matrix output;
  Matrix x_hat;
  Vector inv_std;
  Vector norms;
};

class Layer {
 public:
  static Layer fully_connected(int in, int out, Rng& rng, bool with_bias = true);
  static Layer bias_only(int dim);
  static Layer batch_norm(int dim, bool affine = true);
  static Layer relu(int dim);
  static Layer tanh(int dim);
  static Layer l2_norm(int dim);

  LayerKind kind() const { return kind_; }
  int in_dim() const { return in_; }
  int out_dim() const { return out_; }
  bool affine() const { return affine_; }

  Matrix forward(const Matrix& x, Mode mode, LayerCache& cache);
  /// Accumulates parameter gradients and returns the gradient on the input.
  Matrix backward(const LayerCache& cache, const Matrix& grad_out);

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;

  // BatchNorm running statistics.
  Vector running_mean;
  Vector running_var;

 private:
  Layer(LayerKind kind, int in, int out) : kind_(kind), in_(in), out_(out) {}

  LayerKind kind_;
  int in_;
  int out_;
  bool affine_ = false;
  std::vector<Param> params_;
};

/// Record of one forward pass, bound to the network and parameter version
/// that produced it.
struct Tape {
  std::uint64_t network_id = 0;
  std::uint64_t version = 0;
  std::vector<LayerCache> caches;
};

struct ForwardPass {
  Matrix y;
  Tape tape;
};

class Network {
 public:
  explicit Network(int in_dim = 0, std::string name = {});
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  void add(Layer layer);

  ForwardPass forward(const Matrix& x, Mode mode);
  Matrix backward(const Tape& tape, const Matrix& grad_y);

  void zero_grad();
  /// Invalidates every tape recorded before the call.
  void mark_updated() { ++version_; }

  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  std::size_t param_count() const;

  int in_dim() const { return in_dim_; }
  int out_dim() const { return layers_.empty() ? in_dim_ : layers_.back().out_dim(); }
  const std::string& name() const { return name_; }
  void set_name(std::string name) { name_ = std::move(name); }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  bool ends_with(LayerKind kind) const { return !layers_.empty() && layers_.back().kind() == kind; }
  std::uint64_t id() const { return id_; }

 private:
  int in_dim_;
  std::string name_;
  std::vector<Layer> layers_;
  std::uint64_t id_;
  std::uint64_t version_ = 0;
};

struct EncoderConfig {
  int input_dim = 32;
  int hidden_dim = 64;
  int output_dim = 32;
  int hidden_layers = 1;
  bool final_bn = true;
  bool final_bn_affine = true;
  bool l2_norm = false;
};

/// [FC + BN + ReLU] x hidden_layers, FC, optional BN, optional L2Norm.
/// Weights and biases start uniform in +-1/sqrt(fan_in).
Network make_encoder(const EncoderConfig& config, Rng& rng);

enum class PredictorVariant { NonlinearMLP, TwoFC, TanhFC, BiasOnly, Identity };

const char* predictor_variant_name(PredictorVariant variant);
std::optional<PredictorVariant> parse_predictor_variant(const std::string& name);

/// NonlinearMLP: FC(D,H) BN ReLU FC(H,D). TwoFC: FC(D,H) FC(H,D) Bias.
/// TanhFC: FC(D,D) Tanh. BiasOnly: Bias. Identity: no layers.
Network make_predictor(PredictorVariant variant, int dim, int hidden, Rng& rng);

/// Text checkpoint; layout is described in docs/checkpoint-format.md.
void save_checkpoint(std::ostream& out, std::span<const Network* const> networks);
std::vector<Network> load_checkpoint(std::istream& in);

/// Per-sample target bank updated as eta <- m * eta + (1 - m) * fresh.
struct MovingAverageBank {
  MovingAverageBank(int count, int dim, double momentum);

  Matrix values;
  std::vector<bool> filled;
  double momentum;

  Matrix gather(std::span<const int> indices) const;
};

/// Entries seen for the first time take the fresh value directly.
void moving_average_update(MovingAverageBank& bank, std::span<const int> indices, const Matrix& fresh_targets);

/// Mean of views[1..]; views[0] is the anchor and does not enter the target.
Matrix same_batch_eoa_target(std::span<const NormalizedBatch> views);

struct InverseStepResult {
  double pred_loss = 0.0;
  double inverse_loss = 0.0;
  double encoder_loss = 0.0;
  Matrix P_a;  // normalized h(z_a)
  Matrix grad_z_a;
  Matrix grad_z_b;
};

/// One step of the trainable inverse predictor objective:
///   L_pred     = D(h(sg z_a), z_b)/2 + D(h(sg z_b), z_a)/2        -> h
///   L_inv_pred = D(h_inv(sg p_a), z_a)/2 + D(h_inv(sg p_b), z_b)/2 -> h_inv
///   L_enc      = D(p_a, sg h_inv(p_b))/2 + D(p_b, sg h_inv(p_a))/2 -> h, encoder
/// where D(p, z) = -mean normalize(p) . normalize(sg z). Parameter gradients
/// are accumulated into h and h_inv; the returned gradients on z_a and z_b
/// carry only L_enc and must be pushed through the encoder by the caller.
InverseStepResult inverse_predictor_step(Network& h, Network& h_inv, const Matrix& z_a, const Matrix& z_b);

}  // namespace siamlab
