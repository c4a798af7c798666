#include "lab/runner.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "core/errors.hpp"
#include "core/losses.hpp"

namespace siamlab {

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

void write_atomically(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  write_file(tmp, text);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot move " + tmp.string() + " into place: " + ec.message());
}

std::string cell(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return {};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", *v);
  return buf;
}

std::string table_csv(const Table& table) {
  std::ostringstream out;
  for (std::size_t i = 0; i < table.columns.size(); ++i) out << (i ? "," : "") << table.columns[i];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << cell(row[i]);
    out << '\n';
  }
  return out.str();
}

std::string manifest_json(const RunManifest& m, const PresetResult& r) {
  nlohmann::ordered_json j;
  j["preset"] = m.preset;
  j["seed"] = m.seed;
  j["out_dir"] = m.out_dir;
  j["started"] = m.started;
  j["finished"] = m.finished;
  nlohmann::ordered_json overrides = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.overrides) overrides[k] = v;
  j["overrides"] = overrides;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.record.config) config[k] = v;
  j["config"] = config;
  nlohmann::ordered_json artifacts = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.artifacts) artifacts[k] = v;
  j["artifacts"] = artifacts;
  j["verdict"] = {{"collapsed", m.collapsed},
                  {"expectation", m.expectation},
                  {"expectation_held", m.expectation_held},
                  {"summary", m.summary}};
  nlohmann::ordered_json findings = nlohmann::ordered_json::object();
  for (const auto& f : r.findings) findings[f.name] = f.value;
  j["findings"] = findings;
  return j.dump(2) + "\n";
}

double parse_cell(const std::string& text, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::MalformedFile, "line " + std::to_string(line) + ": '" + text + "' is not a number");
  }
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string default_output_root() {
  if (const char* env = std::getenv("SIAMLAB_OUT"); env && *env) return env;
  return "runs";
}

RunSpec resolve_spec(const Preset& preset, std::uint64_t seed, const Settings& config, const Settings& overrides) {
  RunSpec spec = preset.spec;
  set_seed(spec, seed);
  apply_settings(spec, config);
  apply_settings(spec, overrides);
  validate(spec.train);
  wire(spec.arch);
  return spec;
}

RunOutcome run_preset(const RunRequest& request) {
  const Preset& preset = find_preset(request.preset);
  RunSpec spec;
  try {
    spec = resolve_spec(preset, request.seed, request.config, request.overrides);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidArgument || e.code() == ErrorCode::InvalidArchitecture) {
      throw Error(ErrorCode::InvalidOverride, e.what());
    }
    throw;
  }

  RunOutcome out;
  RunManifest& m = out.manifest;
  m.preset = preset.name;
  m.seed = request.seed;
  m.overrides = request.config;
  m.overrides.insert(m.overrides.end(), request.overrides.begin(), request.overrides.end());
  m.expectation = expectation_text(preset.expectation);
  m.started = utc_now();

  out.result = execute(preset, spec);
  m.finished = utc_now();
  m.expectation_held = out.result.expectation_held;
  m.collapsed = out.result.record.collapsed;
  m.summary = out.result.summary;

  fs::path dir = request.out_dir.empty()
                     ? fs::path(default_output_root()) / (preset.name + "-seed" + std::to_string(request.seed))
                     : fs::path(request.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  m.out_dir = dir.string();

  const fs::path csv = dir / "trajectory.csv";
  {
    std::ostringstream text;
    write_trajectory_csv(text, out.result.record.trajectory);
    write_file(csv, text.str());
  }
  m.artifacts.emplace_back("trajectory", csv.string());
  const fs::path svg = dir / "trajectory.svg";
  write_file(svg, render_svg(read_csv_file(csv.string()), {"m_o", "m_r", "std"}));
  m.artifacts.emplace_back("plot", svg.string());
  const fs::path ckpt = dir / "checkpoint.txt";
  write_file(ckpt, out.result.checkpoint);
  m.artifacts.emplace_back("checkpoint", ckpt.string());
  for (const Table& t : out.result.tables) {
    const fs::path p = dir / t.file;
    write_file(p, table_csv(t));
    m.artifacts.emplace_back(fs::path(t.file).stem().string(), p.string());
  }
  write_atomically(dir / "manifest.json", manifest_json(m, out.result));
  return out;
}

std::vector<std::string> sweep_parameters() { return {"tau", "eta", "sigma", "m_ma"}; }

std::vector<SweepRow> sweep(const std::string& preset_name, const std::string& parameter,
                            const std::vector<double>& values, const std::vector<std::uint64_t>& seeds,
                            const Settings& overrides) {
  const Preset& preset = find_preset(preset_name);
  const auto params = sweep_parameters();
  if (std::find(params.begin(), params.end(), parameter) == params.end()) {
    throw Error(ErrorCode::InvalidParameter, "'" + parameter + "' cannot be swept (use tau, eta, sigma or m_ma)");
  }
  if (values.empty()) throw Error(ErrorCode::InvalidParameter, "the value list is empty");
  if (seeds.empty()) throw Error(ErrorCode::InvalidParameter, "the seed list is empty");
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidParameter, "sweep values must be finite");
  }

  std::vector<SweepRow> rows;
  if (parameter == "eta") {
    if (preset.expectation != Expectation::EtaSigns) {
      throw Error(ErrorCode::InvalidParameter, "eta sweeps need a preset that trains SimSiam for the eta probe");
    }
    if (!std::is_sorted(values.begin(), values.end())) {
      throw Error(ErrorCode::InvalidParameter, "the eta grid must be sorted ascending");
    }
    Vector grid(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) grid(static_cast<Eigen::Index>(i)) = values[i];
    for (std::uint64_t seed : seeds) {
      const RunSpec spec = resolve_spec(preset, seed, {}, overrides);
      const PresetResult r = execute(preset, spec);
      const CenterPair& c = *r.centers;
      const EtaSweepResult sp = eta_sweep(c.o_z - c.o_p, c.o_p, grid);
      const EtaSweepResult sz = eta_sweep(c.o_p - c.o_z, c.o_z, grid);
      const int step = r.record.trajectory.empty() ? 0 : r.record.trajectory.back().step;
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (sp.similarities[i]) rows.push_back({values[i], seed, "cossim_o_p", step, *sp.similarities[i]});
        if (sz.similarities[i]) rows.push_back({values[i], seed, "cossim_o_z", step, *sz.similarities[i]});
      }
      if (sp.zero_crossing) rows.push_back({values.front(), seed, "eta_p_crossing", step, *sp.zero_crossing});
      if (sz.zero_crossing) rows.push_back({values.front(), seed, "eta_z_crossing", step, *sz.zero_crossing});
    }
    return rows;
  }

  const std::string key = parameter == "tau" ? "loss.temperature" : parameter == "sigma" ? "augment.sigma" : "train.m_ma";
  for (double value : values) {
    for (std::uint64_t seed : seeds) {
      Settings cell = overrides;
      cell.emplace_back(key, format_double(value));
      RunSpec spec;
      try {
        spec = resolve_spec(preset, seed, {}, cell);
      } catch (const Error& e) {
        throw Error(ErrorCode::InvalidParameter, e.what());
      }
      if (parameter == "tau") {
        // Entropy of lambda on a batch that is identical for every tau: the
        // untrained encoder of this seed on its first batch.
        const Dataset data = load_dataset(spec.data);
        Session fresh(spec.arch, spec.train, data);
        const ViewBatch b = fresh.next_batch();
        const Matrix Z_a = fresh.represent(b.views[0], Mode::Train).Z;
        const Matrix Z_b = fresh.represent(b.views[1], Mode::Train).Z;
        const double h = mean_row_entropy(infonce_decomposition(Z_a, Z_b, value).lambda);
        rows.push_back({value, seed, "entropy_fixed_batch", 0, h});
      }
      const PresetResult r = execute(preset, spec);
      for (const MetricsRecord& m : r.record.trajectory) {
        rows.push_back({value, seed, "loss", m.step, m.loss});
        rows.push_back({value, seed, "std", m.step, m.std});
        rows.push_back({value, seed, "m_o", m.step, m.m_o});
        rows.push_back({value, seed, "m_r", m.step, m.m_r});
        rows.push_back({value, seed, "covariance", m.step, m.covariance});
        if (m.entropy_lambda) rows.push_back({value, seed, "entropy_lambda", m.step, *m.entropy_lambda});
        rows.push_back({value, seed, "probe_acc", m.step, m.probe_acc});
      }
      const int step = r.record.trajectory.empty() ? 0 : r.record.trajectory.back().step;
      rows.push_back({value, seed, "collapsed", step, r.record.collapsed ? 1.0 : 0.0});
    }
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << kSweepHeader << '\n';
  for (const SweepRow& r : rows) {
    out << format_double(r.value) << ',' << r.seed << ',' << r.metric << ',' << r.step << ','
        << cell(r.reading) << '\n';
  }
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw Error(ErrorCode::MissingColumn, "no column named '" + name + "'");
}

CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw Error(ErrorCode::MalformedFile, "missing CSV header");
  if (line.back() == '\r') line.pop_back();
  t.header = split(line);
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.header.size()) {
      throw Error(ErrorCode::MalformedFile, "line " + std::to_string(number) + " has " + std::to_string(cells.size()) +
                                                " cells, header has " + std::to_string(t.header.size()));
    }
    std::vector<std::optional<double>> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      if (c.empty()) {
        row.emplace_back();
      } else {
        row.emplace_back(parse_cell(c, number));
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  return read_csv(in);
}

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 20.0;
constexpr double kBottom = 50.0;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const CsvTable& table, const std::vector<std::string>& metrics) {
  if (table.header.empty()) throw Error(ErrorCode::MissingColumn, "table has no columns");
  if (metrics.empty()) throw Error(ErrorCode::MissingColumn, "no metric requested");
  std::vector<std::size_t> cols;
  for (const auto& m : metrics) cols.push_back(table.column(m));

  double x_lo = INFINITY, x_hi = -INFINITY, y_lo = INFINITY, y_hi = -INFINITY;
  for (const auto& row : table.rows) {
    if (!row[0]) continue;
    for (std::size_t c : cols) {
      if (!row[c] || !std::isfinite(*row[c])) continue;
      x_lo = std::min(x_lo, *row[0]);
      x_hi = std::max(x_hi, *row[0]);
      y_lo = std::min(y_lo, *row[c]);
      y_hi = std::max(y_hi, *row[c]);
    }
  }
  if (!std::isfinite(x_lo)) {
    x_lo = 0.0;
    x_hi = 1.0;
    y_lo = 0.0;
    y_hi = 1.0;
  }
  if (x_hi == x_lo) x_hi = x_lo + 1.0;
  if (y_hi == y_lo) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto sy = [&](double y) { return kTop + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
    << "\" viewBox=\"0 0 " << num(kWidth) << ' ' << num(kHeight) << "\">\n";
  s << "<rect x=\"0\" y=\"0\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight) << "\" fill=\"white\"/>\n";
  s << "<g stroke=\"black\" stroke-width=\"1\">\n";
  s << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop + ph) << "\" x2=\"" << num(kLeft + pw) << "\" y2=\""
    << num(kTop + ph) << "\"/>\n";
  s << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(kLeft) << "\" y2=\""
    << num(kTop + ph) << "\"/>\n";
  s << "</g>\n";
  s << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"black\">\n";
  s << "<text x=\"" << num(kLeft) << "\" y=\"" << num(kTop + ph + 15) << "\" text-anchor=\"start\">" << num(x_lo)
    << "</text>\n";
  s << "<text x=\"" << num(kLeft + pw) << "\" y=\"" << num(kTop + ph + 15) << "\" text-anchor=\"end\">" << num(x_hi)
    << "</text>\n";
  s << "<text x=\"" << num(kLeft - 5) << "\" y=\"" << num(kTop + ph) << "\" text-anchor=\"end\">" << num(y_lo)
    << "</text>\n";
  s << "<text x=\"" << num(kLeft - 5) << "\" y=\"" << num(kTop + 10) << "\" text-anchor=\"end\">" << num(y_hi)
    << "</text>\n";
  s << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kHeight - 12) << "\" text-anchor=\"middle\">"
    << escape(table.header[0]) << "</text>\n";
  std::string y_label;
  for (std::size_t i = 0; i < metrics.size(); ++i) y_label += (i ? ", " : "") + metrics[i];
  s << "<text x=\"15\" y=\"" << num(kTop + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
    << num(kTop + ph / 2) << ")\">" << escape(y_label) << "</text>\n";
  s << "</g>\n";

  for (std::size_t i = 0; i < cols.size(); ++i) {
    const char* color = kColors[i % (sizeof kColors / sizeof kColors[0])];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" data-metric=\"" << escape(metrics[i])
      << "\" points=\"";
    bool first = true;
    for (const auto& row : table.rows) {
      if (!row[0] || !row[cols[i]] || !std::isfinite(*row[cols[i]])) continue;
      s << (first ? "" : " ") << num(sx(*row[0])) << ',' << num(sy(*row[cols[i]]));
      first = false;
    }
    s << "\"/>\n";
  }
  if (cols.size() > 1) {
    s << "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"11\">\n";
    for (std::size_t i = 0; i < cols.size(); ++i) {
      const double y = kTop + 12 + 16.0 * static_cast<double>(i);
      const char* color = kColors[i % (sizeof kColors / sizeof kColors[0])];
      s << "<line x1=\"" << num(kLeft + pw - 120) << "\" y1=\"" << num(y - 4) << "\" x2=\"" << num(kLeft + pw - 100)
        << "\" y2=\"" << num(y - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
      s << "<text x=\"" << num(kLeft + pw - 95) << "\" y=\"" << num(y) << "\">" << escape(metrics[i]) << "</text>\n";
    }
    s << "</g>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string render_svg_file(const std::string& csv_path, const std::vector<std::string>& metrics,
                            const std::string& svg_path) {
  const CsvTable table = read_csv_file(csv_path);
  const std::string svg = render_svg(table, metrics);
  fs::path out = svg_path.empty() ? fs::path(csv_path).replace_extension(".svg") : fs::path(svg_path);
  write_file(out, svg);
  return out.string();
}

}  // namespace siamlab
