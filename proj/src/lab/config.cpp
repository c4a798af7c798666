#include "lab/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>

#include "core/errors.hpp"

namespace siamlab {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& want) {
  throw Error(ErrorCode::InvalidOverride, key + ": cannot use '" + value + "' (expected " + want + ")");
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty()) bad_value(key, v, "a number");
  return out;
}

long long to_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty()) bad_value(key, v, "an integer");
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  const long long x = to_integer(key, v);
  if (x < -2147483647LL || x > 2147483647LL) bad_value(key, v, "a 32-bit integer");
  return static_cast<int>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "true or false");
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

const char* source_name(DataSource s) {
  switch (s) {
    case DataSource::Synthetic: return "synthetic";
    case DataSource::Csv: return "csv";
    case DataSource::Cifar: return "cifar";
  }
  return "synthetic";
}

struct Entry {
  const char* key;
  std::function<std::string(const RunSpec&)> get;
  std::function<void(RunSpec&, const std::string&, const std::string&)> set;
};

#define SIAMLAB_DOUBLE(KEY, FIELD)                                                               \
  Entry {                                                                                        \
    KEY, [](const RunSpec& s) { return format_double(s.FIELD); },                                \
        [](RunSpec& s, const std::string& k, const std::string& v) { s.FIELD = to_double(k, v); } \
  }
#define SIAMLAB_INT(KEY, FIELD)                                                               \
  Entry {                                                                                     \
    KEY, [](const RunSpec& s) { return std::to_string(s.FIELD); },                            \
        [](RunSpec& s, const std::string& k, const std::string& v) { s.FIELD = to_int(k, v); } \
  }
#define SIAMLAB_BOOL(KEY, FIELD)                                                               \
  Entry {                                                                                      \
    KEY, [](const RunSpec& s) { return from_bool(s.FIELD); },                                  \
        [](RunSpec& s, const std::string& k, const std::string& v) { s.FIELD = to_bool(k, v); } \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      Entry{"arch.tag", [](const RunSpec& s) { return std::string(arch_tag_name(s.arch.tag)); },
            [](RunSpec& s, const std::string& k, const std::string& v) {
              auto t = parse_arch_tag(v);
              if (!t) bad_value(k, v, "an architecture name");
              s.arch.tag = *t;
            }},
      Entry{"arch.predictor", [](const RunSpec& s) { return std::string(predictor_variant_name(s.arch.predictor)); },
            [](RunSpec& s, const std::string& k, const std::string& v) {
              auto p = parse_predictor_variant(v);
              if (!p) bad_value(k, v, "mlp, two-fc, tanh-fc, bias or identity");
              s.arch.predictor = *p;
            }},
      SIAMLAB_INT("arch.predictor_hidden", arch.predictor_hidden),
      SIAMLAB_INT("arch.n_views", arch.n_views),
      Entry{"arch.symmetric_variant",
            [](const RunSpec& s) { return std::string(symmetric_variant_name(s.arch.symmetric_variant)); },
            [](RunSpec& s, const std::string& k, const std::string& v) {
              auto p = parse_symmetric_variant(v);
              if (!p) bad_value(k, v, "joint, extra or alternating");
              s.arch.symmetric_variant = *p;
            }},
      SIAMLAB_INT("encoder.input_dim", arch.encoder.input_dim),
      SIAMLAB_INT("encoder.hidden_dim", arch.encoder.hidden_dim),
      SIAMLAB_INT("encoder.output_dim", arch.encoder.output_dim),
      SIAMLAB_INT("encoder.hidden_layers", arch.encoder.hidden_layers),
      SIAMLAB_BOOL("encoder.final_bn", arch.encoder.final_bn),
      SIAMLAB_BOOL("encoder.final_bn_affine", arch.encoder.final_bn_affine),
      SIAMLAB_BOOL("encoder.l2_norm", arch.encoder.l2_norm),
      Entry{"loss.kind", [](const RunSpec& s) { return std::string(loss_kind_name(s.arch.loss.kind)); },
            [](RunSpec& s, const std::string& k, const std::string& v) {
              auto p = parse_loss_kind(v);
              if (!p) bad_value(k, v, "a loss name");
              s.arch.loss.kind = *p;
            }},
      SIAMLAB_DOUBLE("loss.temperature", arch.loss.temperature),
      SIAMLAB_BOOL("loss.keep_o_e", arch.loss.surgery.keep_o_e),
      SIAMLAB_BOOL("loss.keep_r_e", arch.loss.surgery.keep_r_e),
      SIAMLAB_BOOL("loss.symmetric", arch.loss.symmetric),
      SIAMLAB_INT("train.steps", train.steps),
      SIAMLAB_INT("train.batch", train.batch),
      SIAMLAB_DOUBLE("train.base_lr", train.base_lr),
      SIAMLAB_DOUBLE("train.momentum", train.momentum),
      SIAMLAB_DOUBLE("train.weight_decay", train.weight_decay),
      SIAMLAB_INT("train.warmup", train.warmup),
      Entry{"train.schedule",
            [](const RunSpec& s) { return std::string(s.train.schedule == Schedule::Cosine ? "cosine" : "constant"); },
            [](RunSpec& s, const std::string& k, const std::string& v) {
              if (v == "cosine") {
                s.train.schedule = Schedule::Cosine;
              } else if (v == "constant") {
                s.train.schedule = Schedule::Constant;
              } else {
                bad_value(k, v, "cosine or constant");
              }
            }},
      Entry{"train.seed", [](const RunSpec& s) { return std::to_string(s.train.seed); },
            [](RunSpec& s, const std::string& k, const std::string& v) {
              const long long x = to_integer(k, v);
              if (x < 0) bad_value(k, v, "a non-negative integer");
              set_seed(s, static_cast<std::uint64_t>(x));
            }},
      SIAMLAB_DOUBLE("train.m_ma", train.m_ma),
      SIAMLAB_DOUBLE("train.probe_lr", train.probe_lr),
      SIAMLAB_INT("train.metric_every", train.metric_every),
      SIAMLAB_BOOL("train.fixed_predictor_lr", train.fixed_predictor_lr),
      SIAMLAB_DOUBLE("train.predictor_lr_scale", train.predictor_lr_scale),
      SIAMLAB_DOUBLE("train.holdout", train.holdout),
      SIAMLAB_DOUBLE("augment.sigma", train.augment.sigma),
      SIAMLAB_DOUBLE("augment.scale_jitter", train.augment.scale_jitter),
      SIAMLAB_DOUBLE("augment.mask_prob", train.augment.mask_prob),
      SIAMLAB_DOUBLE("collapse.m_o", train.thresholds.m_o),
      SIAMLAB_DOUBLE("collapse.std_factor", train.thresholds.std_factor),
      Entry{"data.source", [](const RunSpec& s) { return std::string(source_name(s.data.source)); },
            [](RunSpec& s, const std::string& k, const std::string& v) {
              if (v == "synthetic") {
                s.data.source = DataSource::Synthetic;
              } else if (v == "csv") {
                s.data.source = DataSource::Csv;
              } else if (v == "cifar") {
                s.data.source = DataSource::Cifar;
              } else {
                bad_value(k, v, "synthetic, csv or cifar");
              }
            }},
      Entry{"data.path", [](const RunSpec& s) { return s.data.path; },
            [](RunSpec& s, const std::string&, const std::string& v) { s.data.path = v; }},
      SIAMLAB_INT("data.cifar_subset", data.cifar_subset),
      SIAMLAB_INT("data.num_classes", data.synthetic.num_classes),
      SIAMLAB_INT("data.per_class", data.synthetic.per_class),
      SIAMLAB_INT("data.dim", data.synthetic.dim),
      SIAMLAB_DOUBLE("data.separation", data.synthetic.separation),
      SIAMLAB_DOUBLE("data.spread", data.synthetic.noise.sigma),
  };
  return table;
}

#undef SIAMLAB_DOUBLE
#undef SIAMLAB_INT
#undef SIAMLAB_BOOL

}  // namespace

void set_seed(RunSpec& spec, std::uint64_t seed) {
  spec.train.seed = seed;
  spec.data.synthetic.seed = seed;
}

void apply_setting(RunSpec& spec, const std::string& key, const std::string& value) {
  for (const Entry& e : entries()) {
    if (key == e.key) {
      e.set(spec, key, trim(value));
      return;
    }
  }
  throw Error(ErrorCode::InvalidOverride, "unknown setting '" + key + "'");
}

void apply_settings(RunSpec& spec, const Settings& settings) {
  for (const auto& [k, v] : settings) apply_setting(spec, k, v);
}

Settings describe(const RunSpec& spec) {
  Settings out;
  for (const Entry& e : entries()) out.emplace_back(e.key, e.get(spec));
  return out;
}

std::vector<std::string> setting_keys() {
  std::vector<std::string> out;
  for (const Entry& e : entries()) out.emplace_back(e.key);
  return out;
}

std::pair<std::string, std::string> parse_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw Error(ErrorCode::InvalidOverride, "expected key=value, got '" + text + "'");
  std::string key = trim(text.substr(0, eq));
  if (key.empty()) throw Error(ErrorCode::InvalidOverride, "empty key in '" + text + "'");
  return {key, trim(text.substr(eq + 1))};
}

Settings parse_config(std::istream& in) {
  Settings out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      out.push_back(parse_assignment(line));
    } catch (const Error& e) {
      throw Error(ErrorCode::InvalidOverride, "line " + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

Settings read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config file " + path);
  return parse_config(in);
}

Dataset load_dataset(const DataSpec& spec) {
  switch (spec.source) {
    case DataSource::Synthetic: return synth_generate(spec.synthetic);
    case DataSource::Csv: {
      std::ifstream in(spec.path);
      if (!in) throw Error(ErrorCode::Io, "cannot open dataset " + spec.path);
      return read_dataset_csv(in);
    }
    case DataSource::Cifar:
      return cifar_read(spec.path, spec.cifar_subset > 0 ? std::optional<int>(spec.cifar_subset) : std::nullopt);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown data source");
}

}  // namespace siamlab
