#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "core/linalg.hpp"
#include "core/rng.hpp"

namespace siamlab {

struct AugmentParams {
  double sigma = 0.15;         // additive Gaussian noise
  double scale_jitter = 0.2;   // per-sample scale drawn from 1 +- jitter
  double mask_prob = 0.1;      // per-coordinate zeroing probability
};

/// Gaussian clusters around unit-norm means. The cluster spread reuses
/// noise.sigma, so sigma = 0 gives point masses.
struct SyntheticSpec {
  int num_classes = 10;
  int per_class = 100;
  int dim = 32;
  double separation = 1.0;
  AugmentParams noise;
  std::uint64_t seed = 0;
};

struct Dataset {
  Matrix samples;
  std::vector<int> labels;
  std::vector<int> ids;
  int num_classes = 0;

  int size() const { return static_cast<int>(labels.size()); }
  int dim() const { return static_cast<int>(samples.cols()); }
};

void validate(const SyntheticSpec& spec);
Dataset synth_generate(const SyntheticSpec& spec);

/// Scale jitter, then additive noise, then coordinate masking.
Matrix augment(const Matrix& x, const AugmentParams& params, Rng& rng);

/// Deterministic train/held-out split of the ids.
struct Split {
  std::vector<int> train;
  std::vector<int> holdout;
};
Split split_ids(const Dataset& ds, double holdout_fraction, std::uint64_t seed);

Matrix gather_rows(const Matrix& m, const std::vector<int>& rows);

/// One batch of n_views augmented views of the same samples.
struct ViewBatch {
  std::vector<int> ids;
  std::vector<int> labels;
  std::vector<Matrix> views;
};

/// Epoch-shuffled batches over a subset of ids; the short tail of an epoch
/// is dropped.
class BatchIterator {
 public:
  BatchIterator(const Dataset& ds, std::vector<int> pool, int batch, int n_views, AugmentParams augment, Rng rng);

  ViewBatch next();
  int epoch() const { return epoch_; }

 private:
  void reshuffle();

  const Dataset* ds_;
  std::vector<int> pool_;
  int batch_;
  int n_views_;
  AugmentParams augment_;
  Rng order_rng_;
  Rng augment_rng_;
  std::size_t cursor_ = 0;
  int epoch_ = -1;
};

enum class CifarLayout { Auto, Cifar10, Cifar100 };

inline constexpr double kCifarMean[3] = {0.4914, 0.4822, 0.4465};
inline constexpr double kCifarStd[3] = {0.247, 0.243, 0.261};

/// Reads a CIFAR binary batch file. CIFAR-100 records use the fine label.
Dataset cifar_read(const std::filesystem::path& path, std::optional<int> subset = std::nullopt,
                   CifarLayout layout = CifarLayout::Auto);
Dataset cifar_parse(const std::vector<unsigned char>& bytes, std::optional<int> subset = std::nullopt,
                    CifarLayout layout = CifarLayout::Auto);

/// CSV with header id,label,f0..f{D-1}.
void write_dataset_csv(std::ostream& out, const Dataset& ds);
Dataset read_dataset_csv(std::istream& in);

}  // namespace siamlab
