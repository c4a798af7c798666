#include "core/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <string>

#include "core/errors.hpp"

namespace siamlab {

void validate(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw Error(ErrorCode::BadSpec, "need at least two classes");
  if (spec.per_class < 1) throw Error(ErrorCode::BadSpec, "need at least one sample per class");
  if (spec.dim < 1) throw Error(ErrorCode::BadSpec, "dimension must be positive");
  if (!(spec.separation >= 0.0 && spec.separation <= 2.0)) {
    throw Error(ErrorCode::BadSpec, "separation of unit-norm means must lie in [0, 2]");
  }
  if (!(spec.noise.sigma >= 0.0) || !std::isfinite(spec.noise.sigma)) {
    throw Error(ErrorCode::BadSpec, "sigma must be non-negative");
  }
  if (!(spec.noise.scale_jitter >= 0.0 && spec.noise.scale_jitter < 1.0)) {
    throw Error(ErrorCode::BadSpec, "scale jitter must lie in [0, 1)");
  }
  if (!(spec.noise.mask_prob >= 0.0 && spec.noise.mask_prob < 1.0)) {
    throw Error(ErrorCode::BadSpec, "mask probability must lie in [0, 1)");
  }
  if (spec.dim == 1 && spec.num_classes > 2) throw Error(ErrorCode::BadSpec, "a line holds at most two unit means");
}

namespace {

Vector random_unit(int dim, Rng& rng) {
  Vector v(dim);
  double norm = 0.0;
  while (norm < 1e-6) {
    for (int i = 0; i < dim; ++i) v(i) = rng.normal();
    norm = v.norm();
  }
  return v / norm;
}

}  // namespace

Dataset synth_generate(const SyntheticSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  Rng mean_rng = rng.fork(1);
  Rng sample_rng = rng.fork(2);

  const int K = spec.num_classes;
  Matrix means(K, spec.dim);
  if (K == 2) {
    const Vector u = random_unit(spec.dim, mean_rng);
    means.row(0) = u.transpose();
    means.row(1) = -u.transpose();
  } else {
    constexpr int kAttempts = 10000;
    for (int k = 0; k < K; ++k) {
      bool placed = false;
      for (int attempt = 0; attempt < kAttempts && !placed; ++attempt) {
        const Vector u = random_unit(spec.dim, mean_rng);
        placed = true;
        for (int j = 0; j < k && placed; ++j) placed = (means.row(j).transpose() - u).norm() >= spec.separation;
        if (placed) means.row(k) = u.transpose();
      }
      if (!placed) throw Error(ErrorCode::BadSpec, "could not place cluster means at the requested separation");
    }
  }

  Dataset ds;
  const int count = K * spec.per_class;
  ds.samples.resize(count, spec.dim);
  ds.labels.resize(static_cast<std::size_t>(count));
  ds.ids.resize(static_cast<std::size_t>(count));
  ds.num_classes = K;
  for (int k = 0; k < K; ++k) {
    for (int s = 0; s < spec.per_class; ++s) {
      const int i = k * spec.per_class + s;
      for (int d = 0; d < spec.dim; ++d) ds.samples(i, d) = means(k, d) + spec.noise.sigma * sample_rng.normal();
      ds.labels[static_cast<std::size_t>(i)] = k;
      ds.ids[static_cast<std::size_t>(i)] = i;
    }
  }
  return ds;
}

Matrix augment(const Matrix& x, const AugmentParams& params, Rng& rng) {
  Matrix out = x;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (params.scale_jitter > 0.0) out.row(i) *= 1.0 + rng.uniform(-params.scale_jitter, params.scale_jitter);
    if (params.sigma > 0.0) {
      for (Eigen::Index d = 0; d < out.cols(); ++d) out(i, d) += params.sigma * rng.normal();
    }
    if (params.mask_prob > 0.0) {
      for (Eigen::Index d = 0; d < out.cols(); ++d) {
        if (rng.bernoulli(params.mask_prob)) out(i, d) = 0.0;
      }
    }
  }
  return out;
}

Split split_ids(const Dataset& ds, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "holdout fraction must lie in [0, 1)");
  }
  std::vector<int> order = ds.ids;
  Rng rng(mix_seed(seed, 0x5917));
  rng.shuffle(order);
  const auto holdout = static_cast<std::size_t>(std::lround(holdout_fraction * static_cast<double>(order.size())));
  Split split;
  split.holdout.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(holdout));
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(holdout), order.end());
  std::sort(split.holdout.begin(), split.holdout.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

Matrix gather_rows(const Matrix& m, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= m.rows()) throw Error(ErrorCode::IndexOutOfRange, "row index out of range");
    out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  }
  return out;
}

BatchIterator::BatchIterator(const Dataset& ds, std::vector<int> pool, int batch, int n_views, AugmentParams augment,
                             Rng rng)
    : ds_(&ds),
      pool_(std::move(pool)),
      batch_(batch),
      n_views_(n_views),
      augment_(augment),
      order_rng_(rng.fork(10)),
      augment_rng_(rng.fork(11)) {
  if (n_views < 2) throw Error(ErrorCode::TooFewViews, "a batch needs at least two views");
  if (batch < 1 || batch > static_cast<int>(pool_.size())) {
    throw Error(ErrorCode::BatchTooLarge, "batch size " + std::to_string(batch) + " exceeds the " +
                                              std::to_string(pool_.size()) + " available samples");
  }
  cursor_ = pool_.size();
}

void BatchIterator::reshuffle() {
  order_rng_.shuffle(pool_);
  cursor_ = 0;
  ++epoch_;
}

ViewBatch BatchIterator::next() {
  if (cursor_ + static_cast<std::size_t>(batch_) > pool_.size()) reshuffle();
  ViewBatch out;
  out.ids.assign(pool_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                 pool_.begin() + static_cast<std::ptrdiff_t>(cursor_ + static_cast<std::size_t>(batch_)));
  cursor_ += static_cast<std::size_t>(batch_);
  out.labels.reserve(out.ids.size());
  for (int id : out.ids) out.labels.push_back(ds_->labels[static_cast<std::size_t>(id)]);
  const Matrix clean = gather_rows(ds_->samples, out.ids);
  out.views.reserve(static_cast<std::size_t>(n_views_));
  for (int v = 0; v < n_views_; ++v) out.views.push_back(augment(clean, augment_, augment_rng_));
  return out;
}

namespace {

constexpr std::size_t kCifarPixels = 3072;

}  // namespace

Dataset cifar_parse(const std::vector<unsigned char>& bytes, std::optional<int> subset, CifarLayout layout) {
  if (bytes.empty()) throw Error(ErrorCode::MalformedFile, "CIFAR file is empty");
  const std::size_t size = bytes.size();
  if (layout == CifarLayout::Auto) {
    const bool fits100 = size % (kCifarPixels + 2) == 0;
    const bool fits10 = size % (kCifarPixels + 1) == 0;
    if (fits100) {
      layout = CifarLayout::Cifar100;
    } else if (fits10) {
      layout = CifarLayout::Cifar10;
    } else {
      throw Error(ErrorCode::TruncatedRecord, "file size " + std::to_string(size) + " is not a whole number of records");
    }
  }
  const std::size_t label_bytes = layout == CifarLayout::Cifar100 ? 2 : 1;
  const std::size_t record = kCifarPixels + label_bytes;
  if (size % record != 0) throw Error(ErrorCode::TruncatedRecord, "last record is incomplete");
  std::size_t count = size / record;
  if (subset) {
    if (*subset < 1 || static_cast<std::size_t>(*subset) > count) {
      throw Error(ErrorCode::InvalidArgument, "subset must lie in [1, " + std::to_string(count) + "]");
    }
    count = static_cast<std::size_t>(*subset);
  }
  const int max_label = layout == CifarLayout::Cifar100 ? 100 : 10;

  Dataset ds;
  ds.num_classes = max_label;
  ds.samples.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(kCifarPixels));
  ds.labels.resize(count);
  ds.ids.resize(count);
  for (std::size_t r = 0; r < count; ++r) {
    const unsigned char* rec = bytes.data() + r * record;
    const int label = rec[label_bytes - 1];
    if (label >= max_label || (label_bytes == 2 && rec[0] >= 20)) {
      throw Error(ErrorCode::MalformedFile, "record " + std::to_string(r) + " has an invalid label");
    }
    ds.labels[r] = label;
    ds.ids[r] = static_cast<int>(r);
    const unsigned char* pixels = rec + label_bytes;
    for (std::size_t p = 0; p < kCifarPixels; ++p) {
      const std::size_t channel = p / 1024;
      ds.samples(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p)) =
          (pixels[p] / 255.0 - kCifarMean[channel]) / kCifarStd[channel];
    }
  }
  return ds;
}

Dataset cifar_read(const std::filesystem::path& path, std::optional<int> subset, CifarLayout layout) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return cifar_parse(bytes, subset, layout);
}

void write_dataset_csv(std::ostream& out, const Dataset& ds) {
  out << "id,label";
  for (int d = 0; d < ds.dim(); ++d) out << ",f" << d;
  out << '\n';
  char buf[40];
  for (int i = 0; i < ds.size(); ++i) {
    out << ds.ids[static_cast<std::size_t>(i)] << ',' << ds.labels[static_cast<std::size_t>(i)];
    for (int d = 0; d < ds.dim(); ++d) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.samples(i, d));
      out << ',' << buf;
    }
    out << '\n';
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::MalformedFile, "line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

}  // namespace

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::MalformedFile, "CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "label") {
    throw Error(ErrorCode::MalformedFile, "CSV header must start with id,label,f0");
  }
  const std::size_t dim = header.size() - 2;
  for (std::size_t d = 0; d < dim; ++d) {
    if (header[d + 2] != "f" + std::to_string(d)) throw Error(ErrorCode::MalformedFile, "unexpected column " + header[d + 2]);
  }
  std::vector<std::vector<double>> rows;
  std::vector<int> ids;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::MalformedFile, "line " + std::to_string(line_no) + ": wrong number of cells");
    }
    const double id = parse_double(cells[0], line_no);
    const double label = parse_double(cells[1], line_no);
    if (id != std::floor(id) || label != std::floor(label) || label < 0) {
      throw Error(ErrorCode::MalformedFile, "line " + std::to_string(line_no) + ": id and label must be integers");
    }
    ids.push_back(static_cast<int>(id));
    labels.push_back(static_cast<int>(label));
    std::vector<double> values(dim);
    for (std::size_t d = 0; d < dim; ++d) values[d] = parse_double(cells[d + 2], line_no);
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw Error(ErrorCode::MalformedFile, "CSV has no rows");

  Dataset ds;
  const auto count = rows.size();
  ds.samples.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  ds.labels.assign(count, -1);
  ds.ids.resize(count);
  std::vector<bool> seen(count, false);
  for (std::size_t r = 0; r < count; ++r) {
    const int id = ids[r];
    if (id < 0 || static_cast<std::size_t>(id) >= count || seen[static_cast<std::size_t>(id)]) {
      throw Error(ErrorCode::MalformedFile, "ids must be unique and dense in [0, count)");
    }
    seen[static_cast<std::size_t>(id)] = true;
    ds.ids[static_cast<std::size_t>(id)] = id;
    ds.labels[static_cast<std::size_t>(id)] = labels[r];
    for (std::size_t d = 0; d < dim; ++d) {
      ds.samples(id, static_cast<Eigen::Index>(d)) = rows[r][d];
    }
  }
  ds.num_classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  return ds;
}

}  // namespace siamlab
