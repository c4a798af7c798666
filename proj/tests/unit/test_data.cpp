#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "core/data.hpp"
#include "core/errors.hpp"
#include "core/rng.hpp"
#include "oracles.hpp"

using namespace siamlab;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::InvalidArgument;
}

std::vector<unsigned char> cifar_bytes(int records, int label_bytes, oracle::Gen& gen, std::vector<int>& labels) {
  std::vector<unsigned char> out;
  for (int r = 0; r < records; ++r) {
    const int label = gen.between(0, label_bytes == 2 ? 99 : 9);
    labels.push_back(label);
    if (label_bytes == 2) out.push_back(static_cast<unsigned char>(label / 5));
    out.push_back(static_cast<unsigned char>(label));
    for (int p = 0; p < 3072; ++p) out.push_back(static_cast<unsigned char>(gen.between(0, 255)));
  }
  return out;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("rng streams are reproducible, forks are independent") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
      const auto x = a.next_u64();
      CHECK(x == b.next_u64());
      CHECK(x != c.next_u64());
    }
    Rng u(7);
    double lo = 1.0, hi = 0.0, sum = 0.0;
    for (int i = 0; i < 20000; ++i) {
      const double v = u.uniform();
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
    }
    CHECK(lo >= 0.0);
    CHECK(hi < 1.0);
    CHECK(sum / 20000.0 == doctest::Approx(0.5).epsilon(0.02));
    Rng n(8);
    double m1 = 0.0, m2 = 0.0;
    for (int i = 0; i < 20000; ++i) {
      const double v = n.normal();
      m1 += v;
      m2 += v * v;
    }
    CHECK(std::abs(m1 / 20000.0) < 0.03);
    CHECK(m2 / 20000.0 == doctest::Approx(1.0).epsilon(0.03));
    CHECK(Rng(1).fork(0).next_u64() != Rng(1).fork(1).next_u64());
    CHECK(Rng(1).fork(3).next_u64() == Rng(1).fork(3).next_u64());
  }

  TEST_CASE("synthetic clusters: shape, labels, separation, determinism") {
    SyntheticSpec spec;
    spec.num_classes = 6;
    spec.per_class = 20;
    spec.dim = 8;
    spec.separation = 1.0;
    spec.noise.sigma = 0.0;
    spec.seed = 3;
    const Dataset d = synth_generate(spec);
    CHECK(d.size() == 120);
    CHECK(d.dim() == 8);
    CHECK(d.num_classes == 6);
    std::vector<Vector> means;
    for (int k = 0; k < 6; ++k) {
      const Vector m = d.samples.row(k * 20).transpose();
      CHECK(m.norm() == doctest::Approx(1.0));
      for (int s = 0; s < 20; ++s) CHECK(d.labels[static_cast<std::size_t>(k * 20 + s)] == k);
      for (const Vector& other : means) CHECK((other - m).norm() >= 1.0);
      means.push_back(m);
    }
    const Dataset again = synth_generate(spec);
    CHECK(again.samples == d.samples);
    spec.seed = 4;
    CHECK(synth_generate(spec).samples != d.samples);
  }

  TEST_CASE("synthetic spec validation") {
    SyntheticSpec s;
    s.num_classes = 1;
    CHECK(code_of([&] { synth_generate(s); }) == ErrorCode::BadSpec);
    s = {};
    s.separation = 2.5;
    CHECK(code_of([&] { synth_generate(s); }) == ErrorCode::BadSpec);
    s = {};
    s.noise.sigma = -1.0;
    CHECK(code_of([&] { synth_generate(s); }) == ErrorCode::BadSpec);
    s = {};
    s.dim = 2;
    s.num_classes = 40;
    s.separation = 1.9;
    CHECK(code_of([&] { synth_generate(s); }) == ErrorCode::BadSpec);
  }

  TEST_CASE("augmentation: identity with all knobs off, seeded otherwise, mask rate") {
    oracle::Gen gen(50);
    const Matrix x = gen.gaussian(40, 30);
    Rng r0(1);
    CHECK(augment(x, AugmentParams{0.0, 0.0, 0.0}, r0) == x);
    Rng r1(2), r2(2);
    const AugmentParams p{0.2, 0.3, 0.25};
    const Matrix a = augment(x, p, r1);
    CHECK(a == augment(x, p, r2));
    CHECK(a != augment(x, p, r1));
    Rng r3(3);
    const Matrix masked = augment(Matrix::Ones(200, 50), AugmentParams{0.0, 0.0, 0.25}, r3);
    const double zero_rate = (masked.array() == 0.0).cast<double>().mean();
    CHECK(zero_rate == doctest::Approx(0.25).epsilon(0.05));
    Rng r4(4);
    const Matrix jittered = augment(Matrix::Ones(100, 3), AugmentParams{0.0, 0.2, 0.0}, r4);
    CHECK(jittered.minCoeff() >= 0.8);
    CHECK(jittered.maxCoeff() <= 1.2);
  }

  TEST_CASE("split: disjoint, complete, seeded") {
    SyntheticSpec spec;
    const Dataset d = synth_generate(spec);
    const Split s = split_ids(d, 0.25, 9);
    std::set<int> all(s.train.begin(), s.train.end());
    for (int id : s.holdout) CHECK(all.insert(id).second);
    CHECK(static_cast<int>(all.size()) == d.size());
    CHECK(s.holdout.size() == 250);
    CHECK(split_ids(d, 0.25, 9).holdout == s.holdout);
    CHECK(split_ids(d, 0.25, 10).holdout != s.holdout);
    CHECK_THROWS_AS(split_ids(d, 1.0, 1), Error);
  }

  TEST_CASE("batch iterator: an epoch visits each pool id once, views share labels") {
    SyntheticSpec spec;
    spec.per_class = 10;
    const Dataset d = synth_generate(spec);
    std::vector<int> pool;
    for (int i = 0; i < d.size(); i += 2) pool.push_back(i);
    BatchIterator it(d, pool, 10, 3, AugmentParams{}, Rng(4));
    std::multiset<int> seen;
    for (int b = 0; b < 5; ++b) {
      const ViewBatch vb = it.next();
      CHECK(vb.views.size() == 3);
      for (std::size_t k = 0; k < vb.ids.size(); ++k) {
        seen.insert(vb.ids[k]);
        CHECK(vb.labels[k] == d.labels[static_cast<std::size_t>(vb.ids[k])]);
      }
    }
    CHECK(seen.size() == pool.size());
    for (int id : pool) CHECK(seen.count(id) == 1);
    CHECK(it.epoch() == 0);
    it.next();
    CHECK(it.epoch() == 1);
  }

  TEST_CASE("CIFAR-10 and CIFAR-100 records decode with per-channel normalization") {
    oracle::Gen gen(51);
    for (int label_bytes : {1, 2}) {
      std::vector<int> labels;
      const auto bytes = cifar_bytes(3, label_bytes, gen, labels);
      const Dataset d = cifar_parse(bytes);
      REQUIRE(d.size() == 3);
      CHECK(d.num_classes == (label_bytes == 2 ? 100 : 10));
      CHECK(d.labels == labels);
      for (int r = 0; r < 3; ++r) {
        for (int p : {0, 1023, 1024, 2047, 2048, 3071}) {
          const int c = p / 1024;
          const double raw = bytes[static_cast<std::size_t>(r * (3072 + label_bytes) + label_bytes + p)] / 255.0;
          CHECK(d.samples(r, p) == doctest::Approx((raw - kCifarMean[c]) / kCifarStd[c]).epsilon(1e-12));
        }
      }
      CHECK(cifar_parse(bytes, 2).size() == 2);
    }
  }

  TEST_CASE("CIFAR errors") {
    oracle::Gen gen(52);
    std::vector<int> labels;
    auto bytes = cifar_bytes(2, 1, gen, labels);
    bytes.resize(bytes.size() - 5);
    CHECK(code_of([&] { cifar_parse(bytes, std::nullopt, CifarLayout::Cifar10); }) == ErrorCode::TruncatedRecord);
    CHECK(code_of([&] { cifar_parse({}); }) == ErrorCode::MalformedFile);
    std::vector<unsigned char> bad(3073, 0);
    bad[0] = 12;
    CHECK(code_of([&] { cifar_parse(bad, std::nullopt, CifarLayout::Cifar10); }) == ErrorCode::MalformedFile);
    CHECK(code_of([&] { cifar_read("/nonexistent/cifar.bin"); }) == ErrorCode::Io);
    labels.clear();
    const auto good = cifar_bytes(2, 1, gen, labels);
    CHECK(code_of([&] { cifar_parse(good, 3, CifarLayout::Cifar10); }) == ErrorCode::InvalidArgument);
  }

  TEST_CASE("CIFAR file read") {
    oracle::Gen gen(53);
    std::vector<int> labels;
    const auto bytes = cifar_bytes(4, 1, gen, labels);
    const auto path = std::filesystem::temp_directory_path() / "siamlab_cifar_test.bin";
    {
      std::ofstream out(path, std::ios::binary);
      out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    const Dataset d = cifar_read(path);
    std::filesystem::remove(path);
    CHECK(d.labels == labels);
  }

  TEST_CASE("dataset CSV round trip is exact; malformed input is rejected") {
    SyntheticSpec spec;
    spec.per_class = 4;
    const Dataset d = synth_generate(spec);
    std::stringstream buf;
    write_dataset_csv(buf, d);
    const Dataset back = read_dataset_csv(buf);
    CHECK(back.samples == d.samples);
    CHECK(back.labels == d.labels);
    CHECK(back.ids == d.ids);
    std::istringstream ragged("id,label,f0,f1\n0,1,0.5\n");
    CHECK(code_of([&] { read_dataset_csv(ragged); }) == ErrorCode::MalformedFile);
    std::istringstream text("id,label,f0\n0,1,abc\n");
    CHECK(code_of([&] { read_dataset_csv(text); }) == ErrorCode::MalformedFile);
  }
}
