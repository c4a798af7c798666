#include "core/network.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "core/errors.hpp"

namespace siamlab {

namespace {

std::uint64_t next_network_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

Param make_param(std::string name, Eigen::Index rows, Eigen::Index cols, bool decay) {
  Param p;
  p.name = std::move(name);
  p.value = Matrix::Zero(rows, cols);
  p.grad = Matrix::Zero(rows, cols);
  p.weight_decay = decay;
  return p;
}

void require_positive(int dim, const char* what) {
  if (dim <= 0) throw Error(ErrorCode::BadDims, std::string(what) + " must be positive");
}

}  // namespace

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::FullyConnected: return "fully-connected";
    case LayerKind::BiasOnly: return "bias-only";
    case LayerKind::BatchNorm: return "batch-norm";
    case LayerKind::ReLU: return "relu";
    case LayerKind::Tanh: return "tanh";
    case LayerKind::L2Norm: return "l2-norm";
  }
  return "unknown";
}

Layer Layer::fully_connected(int in, int out, Rng& rng, bool with_bias) {
  require_positive(in, "fully-connected input");
  require_positive(out, "fully-connected output");
  Layer layer(LayerKind::FullyConnected, in, out);
  Param w = make_param("W", out, in, true);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (Eigen::Index r = 0; r < w.value.rows(); ++r) {
    for (Eigen::Index c = 0; c < w.value.cols(); ++c) w.value(r, c) = rng.uniform(-bound, bound);
  }
  layer.params_.push_back(std::move(w));
  if (with_bias) {
    Param b = make_param("b", 1, out, true);
    for (Eigen::Index c = 0; c < b.value.cols(); ++c) b.value(0, c) = rng.uniform(-bound, bound);
    layer.params_.push_back(std::move(b));
  }
  return layer;
}

Layer Layer::bias_only(int dim) {
  require_positive(dim, "bias dimension");
  Layer layer(LayerKind::BiasOnly, dim, dim);
  layer.params_.push_back(make_param("b", 1, dim, true));
  return layer;
}

Layer Layer::batch_norm(int dim, bool affine) {
  require_positive(dim, "batch-norm dimension");
  Layer layer(LayerKind::BatchNorm, dim, dim);
  layer.affine_ = affine;
  if (affine) {
    Param gamma = make_param("gamma", 1, dim, true);
    gamma.value.setOnes();
    layer.params_.push_back(std::move(gamma));
    layer.params_.push_back(make_param("beta", 1, dim, true));
  }
  layer.running_mean = Vector::Zero(dim);
  layer.running_var = Vector::Ones(dim);
  return layer;
}

Layer Layer::relu(int dim) {
  require_positive(dim, "relu dimension");
  return Layer(LayerKind::ReLU, dim, dim);
}

Layer Layer::tanh(int dim) {
  require_positive(dim, "tanh dimension");
  return Layer(LayerKind::Tanh, dim, dim);
}

Layer Layer::l2_norm(int dim) {
  require_positive(dim, "l2-norm dimension");
  return Layer(LayerKind::L2Norm, dim, dim);
}

Param* Layer::find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Param* Layer::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Matrix Layer::forward(const Matrix& x, Mode mode, LayerCache& cache) {
  if (x.cols() != in_) {
    throw Error(ErrorCode::DimensionMismatch, std::string(layer_kind_name(kind_)) + " expects " +
                                                  std::to_string(in_) + " columns, got " + std::to_string(x.cols()));
  }
  cache.mode = mode;
  cache.input = x;
  Matrix y;
  switch (kind_) {
    case LayerKind::FullyConnected: {
      y.noalias() = x * params_[0].value.transpose();
      if (params_.size() > 1) y.rowwise() += params_[1].value.row(0);
      break;
    }
    case LayerKind::BiasOnly:
      y = x.rowwise() + params_[0].value.row(0);
      break;
    case LayerKind::BatchNorm: {
      Eigen::RowVectorXd mean;
      Eigen::RowVectorXd var;
      if (mode == Mode::Train) {
        if (x.rows() < 2) throw Error(ErrorCode::BatchTooSmall, "batch-norm in train mode needs two rows");
        mean = x.colwise().mean();
        const Matrix centered = x.rowwise() - mean;
        var = centered.colwise().squaredNorm() / static_cast<double>(x.rows());
        const double n = static_cast<double>(x.rows());
        running_mean = (1.0 - kBatchNormMomentum) * running_mean + kBatchNormMomentum * mean.transpose();
        running_var = (1.0 - kBatchNormMomentum) * running_var + kBatchNormMomentum * (var.transpose() * n / (n - 1.0));
      } else {
        mean = running_mean.transpose();
        var = running_var.transpose();
      }
      cache.inv_std = (var.array() + kBatchNormEps).rsqrt().matrix().transpose();
      cache.x_hat = (x.rowwise() - mean).array().rowwise() * cache.inv_std.transpose().array();
      if (affine_) {
        y = (cache.x_hat.array().rowwise() * params_[0].value.row(0).array()).matrix();
        y.rowwise() += params_[1].value.row(0);
      } else {
        y = cache.x_hat;
      }
      break;
    }
    case LayerKind::ReLU:
      y = x.cwiseMax(0.0);
      break;
    case LayerKind::Tanh:
      y = x.array().tanh().matrix();
      break;
    case LayerKind::L2Norm: {
      NormalizedBatch nb = l2_normalize(x);
      cache.norms = std::move(nb.raw_norms);
      y = std::move(nb.Z);
      break;
    }
  }
  cache.output = y;
  return y;
}

Matrix Layer::backward(const LayerCache& cache, const Matrix& grad_out) {
  if (grad_out.rows() != cache.output.rows() || grad_out.cols() != cache.output.cols()) {
    throw Error(ErrorCode::ShapeMismatch, std::string(layer_kind_name(kind_)) + " backward: gradient shape differs");
  }
  switch (kind_) {
    case LayerKind::FullyConnected: {
      params_[0].grad.noalias() += grad_out.transpose() * cache.input;
      if (params_.size() > 1) params_[1].grad += grad_out.colwise().sum();
      return grad_out * params_[0].value;
    }
    case LayerKind::BiasOnly:
      params_[0].grad += grad_out.colwise().sum();
      return grad_out;
    case LayerKind::BatchNorm: {
      Matrix grad_xhat = grad_out;
      if (affine_) {
        params_[0].grad += grad_out.cwiseProduct(cache.x_hat).colwise().sum();
        params_[1].grad += grad_out.colwise().sum();
        grad_xhat = (grad_out.array().rowwise() * params_[0].value.row(0).array()).matrix();
      }
      if (cache.mode == Mode::Eval) {
        return (grad_xhat.array().rowwise() * cache.inv_std.transpose().array()).matrix();
      }
      const double n = static_cast<double>(grad_out.rows());
      const Eigen::RowVectorXd sum_g = grad_xhat.colwise().sum();
      const Eigen::RowVectorXd sum_gx = grad_xhat.cwiseProduct(cache.x_hat).colwise().sum();
      Matrix grad_in = (n * grad_xhat).rowwise() - sum_g;
      grad_in -= (cache.x_hat.array().rowwise() * sum_gx.array()).matrix();
      grad_in = (grad_in.array().rowwise() * (cache.inv_std.transpose().array() / n)).matrix();
      return grad_in;
    }
    case LayerKind::ReLU:
      return (cache.input.array() > 0.0).select(grad_out, 0.0);
    case LayerKind::Tanh:
      return (grad_out.array() * (1.0 - cache.output.array().square())).matrix();
    case LayerKind::L2Norm:
      return normalize_backward(grad_out, cache.input, cache.norms);
  }
  return grad_out;
}

Network::Network(int in_dim, std::string name) : in_dim_(in_dim), name_(std::move(name)), id_(next_network_id()) {}

Network::Network(const Network& other)
    : in_dim_(other.in_dim_), name_(other.name_), layers_(other.layers_), id_(next_network_id()), version_(0) {}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    in_dim_ = other.in_dim_;
    name_ = other.name_;
    layers_ = other.layers_;
    id_ = next_network_id();
    version_ = 0;
  }
  return *this;
}

void Network::add(Layer layer) {
  if (layer.in_dim() != out_dim()) {
    throw Error(ErrorCode::BadDims, "layer input " + std::to_string(layer.in_dim()) +
                                        " does not match network output " + std::to_string(out_dim()));
  }
  layers_.push_back(std::move(layer));
}

ForwardPass Network::forward(const Matrix& x, Mode mode) {
  if (x.cols() != in_dim_) {
    throw Error(ErrorCode::DimensionMismatch,
                name_ + " expects " + std::to_string(in_dim_) + " columns, got " + std::to_string(x.cols()));
  }
  ForwardPass pass;
  pass.tape.network_id = id_;
  pass.tape.version = version_;
  pass.tape.caches.resize(layers_.size());
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) h = layers_[i].forward(h, mode, pass.tape.caches[i]);
  pass.y = std::move(h);
  return pass;
}

Matrix Network::backward(const Tape& tape, const Matrix& grad_y) {
  if (tape.network_id != id_ || tape.version != version_ || tape.caches.size() != layers_.size()) {
    throw Error(ErrorCode::StaleTape, name_ + ": tape was not recorded by the current parameters");
  }
  Matrix g = grad_y;
  for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i].backward(tape.caches[i], g);
  return g;
}

void Network::zero_grad() {
  for (auto& layer : layers_) {
    for (auto& p : layer.params()) p.grad.setZero();
  }
}

std::vector<Param*> Network::params() {
  std::vector<Param*> out;
  for (auto& layer : layers_) {
    for (auto& p : layer.params()) out.push_back(&p);
  }
  return out;
}

std::vector<const Param*> Network::params() const {
  std::vector<const Param*> out;
  for (const auto& layer : layers_) {
    for (const auto& p : layer.params()) out.push_back(&p);
  }
  return out;
}

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (const auto* p : params()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

Network make_encoder(const EncoderConfig& config, Rng& rng) {
  require_positive(config.input_dim, "encoder input");
  require_positive(config.hidden_dim, "encoder hidden");
  require_positive(config.output_dim, "encoder output");
  if (config.hidden_layers < 0) throw Error(ErrorCode::BadDims, "hidden layer count must be non-negative");
  Network net(config.input_dim, "encoder");
  int width = config.input_dim;
  for (int i = 0; i < config.hidden_layers; ++i) {
    net.add(Layer::fully_connected(width, config.hidden_dim, rng));
    net.add(Layer::batch_norm(config.hidden_dim));
    net.add(Layer::relu(config.hidden_dim));
    width = config.hidden_dim;
  }
  net.add(Layer::fully_connected(width, config.output_dim, rng));
  if (config.final_bn) net.add(Layer::batch_norm(config.output_dim, config.final_bn_affine));
  if (config.l2_norm) net.add(Layer::l2_norm(config.output_dim));
  return net;
}

const char* predictor_variant_name(PredictorVariant variant) {
  switch (variant) {
    case PredictorVariant::NonlinearMLP: return "mlp";
    case PredictorVariant::TwoFC: return "two-fc";
    case PredictorVariant::TanhFC: return "tanh-fc";
    case PredictorVariant::BiasOnly: return "bias";
    case PredictorVariant::Identity: return "identity";
  }
  return "unknown";
}

std::optional<PredictorVariant> parse_predictor_variant(const std::string& name) {
  for (auto v : {PredictorVariant::NonlinearMLP, PredictorVariant::TwoFC, PredictorVariant::TanhFC,
                 PredictorVariant::BiasOnly, PredictorVariant::Identity}) {
    if (name == predictor_variant_name(v)) return v;
  }
  return std::nullopt;
}

Network make_predictor(PredictorVariant variant, int dim, int hidden, Rng& rng) {
  require_positive(dim, "predictor dimension");
  Network net(dim, "predictor");
  switch (variant) {
    case PredictorVariant::NonlinearMLP:
      require_positive(hidden, "predictor hidden");
      net.add(Layer::fully_connected(dim, hidden, rng));
      net.add(Layer::batch_norm(hidden));
      net.add(Layer::relu(hidden));
      net.add(Layer::fully_connected(hidden, dim, rng));
      break;
    case PredictorVariant::TwoFC:
      require_positive(hidden, "predictor hidden");
      net.add(Layer::fully_connected(dim, hidden, rng, false));
      net.add(Layer::fully_connected(hidden, dim, rng, false));
      net.add(Layer::bias_only(dim));
      break;
    case PredictorVariant::TanhFC:
      net.add(Layer::fully_connected(dim, dim, rng));
      net.add(Layer::tanh(dim));
      break;
    case PredictorVariant::BiasOnly:
      net.add(Layer::bias_only(dim));
      break;
    case PredictorVariant::Identity:
      break;
  }
  return net;
}

namespace {

void write_values(std::ostream& out, const Matrix& m) {
  char buf[40];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      out << (c ? " " : "") << buf;
    }
    out << '\n';
  }
}

Matrix read_values(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!(in >> m(r, c))) throw Error(ErrorCode::MalformedFile, "checkpoint: truncated parameter values");
    }
  }
  return m;
}

void expect_token(std::istream& in, const std::string& token) {
  std::string got;
  if (!(in >> got) || got != token) {
    throw Error(ErrorCode::MalformedFile, "checkpoint: expected '" + token + "', got '" + got + "'");
  }
}

template <typename T>
T read_field(std::istream& in, const std::string& key) {
  expect_token(in, key);
  T value{};
  if (!(in >> value)) throw Error(ErrorCode::MalformedFile, "checkpoint: missing value for " + key);
  return value;
}

std::optional<LayerKind> parse_layer_kind(const std::string& name) {
  for (auto k : {LayerKind::FullyConnected, LayerKind::BiasOnly, LayerKind::BatchNorm, LayerKind::ReLU,
                 LayerKind::Tanh, LayerKind::L2Norm}) {
    if (name == layer_kind_name(k)) return k;
  }
  return std::nullopt;
}

}  // namespace

void save_checkpoint(std::ostream& out, std::span<const Network* const> networks) {
  out << "siamlab-checkpoint 1\n";
  out << "networks " << networks.size() << '\n';
  for (const Network* net : networks) {
    out << "network " << (net->name().empty() ? "unnamed" : net->name()) << " in " << net->in_dim() << " layers "
        << net->layers().size() << '\n';
    for (const Layer& layer : net->layers()) {
      out << "layer " << layer_kind_name(layer.kind()) << " in " << layer.in_dim() << " out " << layer.out_dim()
          << " params " << layer.params().size() << " affine " << (layer.affine() ? 1 : 0) << '\n';
      for (const Param& p : layer.params()) {
        out << "param " << p.name << ' ' << p.value.rows() << ' ' << p.value.cols() << '\n';
        write_values(out, p.value);
      }
      if (layer.kind() == LayerKind::BatchNorm) {
        out << "running " << layer.running_mean.size() << '\n';
        write_values(out, layer.running_mean.transpose());
        write_values(out, layer.running_var.transpose());
      }
    }
  }
  out << "end\n";
}

std::vector<Network> load_checkpoint(std::istream& in) {
  expect_token(in, "siamlab-checkpoint");
  int version = 0;
  if (!(in >> version) || version != 1) throw Error(ErrorCode::MalformedFile, "checkpoint: unsupported version");
  const auto count = read_field<std::size_t>(in, "networks");
  std::vector<Network> nets;
  Rng scratch(0);
  for (std::size_t n = 0; n < count; ++n) {
    const auto name = read_field<std::string>(in, "network");
    const int in_dim = read_field<int>(in, "in");
    const auto layer_count = read_field<std::size_t>(in, "layers");
    Network net(in_dim, name);
    for (std::size_t l = 0; l < layer_count; ++l) {
      const auto kind_name = read_field<std::string>(in, "layer");
      const auto kind = parse_layer_kind(kind_name);
      if (!kind) throw Error(ErrorCode::MalformedFile, "checkpoint: unknown layer kind " + kind_name);
      const int lin = read_field<int>(in, "in");
      const int lout = read_field<int>(in, "out");
      const auto param_count = read_field<std::size_t>(in, "params");
      const int affine = read_field<int>(in, "affine");
      Layer layer = [&] {
        switch (*kind) {
          case LayerKind::FullyConnected: return Layer::fully_connected(lin, lout, scratch, param_count > 1);
          case LayerKind::BiasOnly: return Layer::bias_only(lin);
          case LayerKind::BatchNorm: return Layer::batch_norm(lin, affine != 0);
          case LayerKind::ReLU: return Layer::relu(lin);
          case LayerKind::Tanh: return Layer::tanh(lin);
          case LayerKind::L2Norm: return Layer::l2_norm(lin);
        }
        throw Error(ErrorCode::MalformedFile, "checkpoint: unknown layer kind");
      }();
      if (layer.params().size() != param_count) {
        throw Error(ErrorCode::MalformedFile, "checkpoint: parameter count mismatch in " + kind_name);
      }
      for (std::size_t p = 0; p < param_count; ++p) {
        const auto pname = read_field<std::string>(in, "param");
        Eigen::Index rows = 0;
        Eigen::Index cols = 0;
        if (!(in >> rows >> cols)) throw Error(ErrorCode::MalformedFile, "checkpoint: missing parameter shape");
        Param* target = layer.find(pname);
        if (!target || target->value.rows() != rows || target->value.cols() != cols) {
          throw Error(ErrorCode::MalformedFile, "checkpoint: unexpected parameter " + pname);
        }
        target->value = read_values(in, rows, cols);
      }
      if (*kind == LayerKind::BatchNorm) {
        const auto dim = read_field<Eigen::Index>(in, "running");
        if (dim != lin) throw Error(ErrorCode::MalformedFile, "checkpoint: running statistics size mismatch");
        layer.running_mean = read_values(in, 1, dim).row(0).transpose();
        layer.running_var = read_values(in, 1, dim).row(0).transpose();
      }
      net.add(std::move(layer));
    }
    nets.push_back(std::move(net));
  }
  expect_token(in, "end");
  return nets;
}

MovingAverageBank::MovingAverageBank(int count, int dim, double m)
    : values(Matrix::Zero(count, dim)), filled(static_cast<std::size_t>(count), false), momentum(m) {
  if (count <= 0 || dim <= 0) throw Error(ErrorCode::BadDims, "moving-average bank needs positive size");
  if (!(m >= 0.0 && m <= 1.0)) throw Error(ErrorCode::InvalidArgument, "moving-average coefficient must be in [0, 1]");
}

Matrix MovingAverageBank::gather(std::span<const int> indices) const {
  Matrix out(static_cast<Eigen::Index>(indices.size()), values.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int id = indices[i];
    if (id < 0 || id >= values.rows()) throw Error(ErrorCode::IndexOutOfRange, "bank index out of range");
    out.row(static_cast<Eigen::Index>(i)) = values.row(id);
  }
  return out;
}

void moving_average_update(MovingAverageBank& bank, std::span<const int> indices, const Matrix& fresh_targets) {
  if (static_cast<Eigen::Index>(indices.size()) != fresh_targets.rows() ||
      fresh_targets.cols() != bank.values.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "moving_average_update: targets do not match indices/bank width");
  }
  for (const int id : indices) {
    if (id < 0 || id >= bank.values.rows()) throw Error(ErrorCode::IndexOutOfRange, "bank index out of range");
  }
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int id = indices[i];
    const auto fresh = fresh_targets.row(static_cast<Eigen::Index>(i));
    if (!bank.filled[static_cast<std::size_t>(id)]) {
      bank.values.row(id) = fresh;
      bank.filled[static_cast<std::size_t>(id)] = true;
    } else {
      bank.values.row(id) = bank.momentum * bank.values.row(id) + (1.0 - bank.momentum) * fresh;
    }
  }
}

Matrix same_batch_eoa_target(std::span<const NormalizedBatch> views) {
  if (views.size() < 2) throw Error(ErrorCode::TooFewViews, "same-batch target needs at least two views");
  Matrix sum = Matrix::Zero(views[0].rows(), views[0].cols());
  for (std::size_t v = 1; v < views.size(); ++v) {
    require_same_shape(views[0].Z, views[v].Z, "same_batch_eoa_target");
    sum += views[v].Z;
  }
  return sum / static_cast<double>(views.size() - 1);
}

InverseStepResult inverse_predictor_step(Network& h, Network& h_inv, const Matrix& z_a, const Matrix& z_b) {
  require_same_shape(z_a, z_b, "inverse_predictor_step");
  if (h.in_dim() != h_inv.in_dim() || h.out_dim() != h_inv.out_dim() || h.layers().size() != h_inv.layers().size()) {
    throw Error(ErrorCode::ShapeMismatch, "inverse predictor must share the predictor architecture");
  }
  const double scale = 2.0 * static_cast<double>(z_a.rows());
  const NormalizedBatch Z_a = l2_normalize(z_a);
  const NormalizedBatch Z_b = l2_normalize(z_b);

  // p = h(z); h(sg z) is numerically the same pass, so one tape serves both and
  // only the encoder-loss gradient is returned on z.
  ForwardPass pa = h.forward(z_a, Mode::Train);
  ForwardPass pb = h.forward(z_b, Mode::Train);
  const NormalizedBatch P_a = l2_normalize(pa.y);
  const NormalizedBatch P_b = l2_normalize(pb.y);

  ForwardPass ia = h_inv.forward(pa.y, Mode::Train);
  ForwardPass ib = h_inv.forward(pb.y, Mode::Train);
  const NormalizedBatch I_a = l2_normalize(ia.y);
  const NormalizedBatch I_b = l2_normalize(ib.y);

  InverseStepResult out;
  out.pred_loss = -(P_a.Z.cwiseProduct(Z_b.Z).sum() + P_b.Z.cwiseProduct(Z_a.Z).sum()) / scale;
  out.inverse_loss = -(I_a.Z.cwiseProduct(Z_a.Z).sum() + I_b.Z.cwiseProduct(Z_b.Z).sum()) / scale;
  out.encoder_loss = -(P_a.Z.cwiseProduct(I_b.Z).sum() + P_b.Z.cwiseProduct(I_a.Z).sum()) / scale;

  // L_inv_pred -> h_inv only.
  h_inv.backward(ia.tape, normalize_backward(-Z_a.Z / scale, ia.y, I_a.raw_norms));
  h_inv.backward(ib.tape, normalize_backward(-Z_b.Z / scale, ib.y, I_b.raw_norms));

  // L_pred -> h only; the input gradient is dropped (sg on z).
  h.backward(pa.tape, normalize_backward(-Z_b.Z / scale, pa.y, P_a.raw_norms));
  h.backward(pb.tape, normalize_backward(-Z_a.Z / scale, pb.y, P_b.raw_norms));

  // L_enc -> h and the encoder.
  out.grad_z_a = h.backward(pa.tape, normalize_backward(-I_b.Z / scale, pa.y, P_a.raw_norms));
  out.grad_z_b = h.backward(pb.tape, normalize_backward(-I_a.Z / scale, pb.y, P_b.raw_norms));
  out.P_a = P_a.Z;
  return out;
}

}  // namespace siamlab
