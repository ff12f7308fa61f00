#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "decorr/data.hpp"
#include "decorr/diagnostics.hpp"
#include "decorr/errors.hpp"
#include "doctest.h"

using namespace decorr;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("decorr_test_" + name);
}

CifarRecord solid_record(std::uint8_t label, std::uint8_t value) {
  return {label, std::vector<std::uint8_t>(kCifarImageBytes, value)};
}

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::vector<std::vector<double>> class_means(const Dataset& ds) {
  std::vector<std::vector<double>> means(static_cast<std::size_t>(ds.class_count), std::vector<double>(ds.dim()));
  std::vector<double> counts(means.size());
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const auto c = static_cast<std::size_t>(ds.labels[n]);
    counts[c] += 1;
    for (std::size_t d = 0; d < ds.dim(); ++d) means[c][d] += ds.samples(n, d);
  }
  for (std::size_t c = 0; c < means.size(); ++c)
    for (double& v : means[c]) v /= counts[c];
  return means;
}

}  // namespace

TEST_CASE("synthetic clusters") {
  const Dataset single = make_synthetic_clusters(1, 50, 4, 6.0, 1);
  CHECK(single.size() == 50);
  for (int l : single.labels) CHECK(l == 0);

  // With zero separation the blob centres coincide, so empirical class means
  // differ only by sampling noise (std 1 / sqrt(2000) per coordinate).
  const Dataset merged = make_synthetic_clusters(3, 2000, 4, 0.0, 2);
  const auto means = class_means(merged);
  for (std::size_t a = 0; a < means.size(); ++a)
    for (std::size_t b = a + 1; b < means.size(); ++b) CHECK(distance(means[a], means[b]) < 0.25);

  const Dataset separated = make_synthetic_clusters(10, 2000, 32, 6.0, 3);
  const auto sep_means = class_means(separated);
  for (std::size_t a = 0; a < sep_means.size(); ++a)
    for (std::size_t b = a + 1; b < sep_means.size(); ++b) CHECK(distance(sep_means[a], sep_means[b]) > 5.5);

  const Dataset again = make_synthetic_clusters(10, 2000, 32, 6.0, 3);
  CHECK(again.samples == separated.samples);
  CHECK(again.labels == separated.labels);
  CHECK_FALSE(make_synthetic_clusters(10, 2000, 32, 6.0, 4).samples == separated.samples);

  // More classes than dimensions still respects the separation.
  const Dataset crowded = make_synthetic_clusters(12, 1500, 3, 4.0, 5);
  const auto crowded_means = class_means(crowded);
  for (std::size_t a = 0; a < crowded_means.size(); ++a)
    for (std::size_t b = a + 1; b < crowded_means.size(); ++b) CHECK(distance(crowded_means[a], crowded_means[b]) > 3.6);

  CHECK_THROWS_AS(make_synthetic_clusters(0, 5, 2, 1.0, 1), ConfigError);
}

TEST_CASE("separated clusters are easy for kNN on raw features") {
  const Dataset ds = make_synthetic_clusters(10, 100, 32, 6.0, 7);
  const auto [train, test] = split_per_class(ds, 20);
  CHECK(train.size() == 800);
  CHECK(test.size() == 200);
  std::vector<std::size_t> all_train(train.size()), all_test(test.size());
  std::iota(all_train.begin(), all_train.end(), std::size_t{0});
  std::iota(all_test.begin(), all_test.end(), std::size_t{0});
  const double acc = knn_eval(train.columns(all_train), train.labels, test.columns(all_test), test.labels, 5);
  CHECK(acc > 0.95);
}

TEST_CASE("dataset validation") {
  Dataset ds = make_synthetic_clusters(2, 3, 2, 1.0, 1);
  CHECK_NOTHROW(ds.validate());
  ds.labels[0] = 2;
  CHECK_THROWS_AS(ds.validate(), ConfigError);
  ds.labels[0] = 0;
  ds.samples(0, 0) = std::nan("");
  CHECK_THROWS_AS(ds.validate(), ConfigError);
}

TEST_CASE("CIFAR-10 binary ingestion") {
  const auto path = temp_file("cifar_two.bin");
  std::vector<CifarRecord> records = {solid_record(3, 255), solid_record(7, 0)};
  write_cifar10_records(path, records);
  CHECK(std::filesystem::file_size(path) == 2 * kCifarRecordBytes);

  const std::vector<std::filesystem::path> paths = {path};
  const Dataset raw = load_cifar10_binary(paths, false);
  CHECK(raw.size() == 2);
  CHECK(raw.dim() == kCifarImageBytes);
  CHECK(raw.labels == std::vector<int>{3, 7});
  for (double v : raw.samples.row(0)) CHECK(v == 1.0);
  for (double v : raw.samples.row(1)) CHECK(v == 0.0);

  const Dataset normalized = load_cifar10_binary(paths, true);
  CHECK(normalized.samples(0, 0) == doctest::Approx(1.0));
  CHECK(normalized.samples(1, 0) == doctest::Approx(-1.0));

  // Round trip: a fixture with distinct bytes per plane is read back exactly.
  std::vector<CifarRecord> fixture(3);
  std::mt19937_64 rng(9);
  for (std::size_t r = 0; r < fixture.size(); ++r) {
    fixture[r].label = static_cast<std::uint8_t>(r * 4);
    fixture[r].pixels.resize(kCifarImageBytes);
    for (auto& p : fixture[r].pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
  }
  const auto fixture_path = temp_file("cifar_three.bin");
  write_cifar10_records(fixture_path, fixture);
  const auto back = read_cifar10_records(fixture_path);
  REQUIRE(back.size() == 3);
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(back[r].label == fixture[r].label);
    CHECK(back[r].pixels == fixture[r].pixels);
  }
  const std::vector<std::filesystem::path> fixture_paths = {fixture_path};
  const Dataset loaded = load_cifar10_binary(fixture_paths, false);
  CHECK(loaded.samples(2, 1024) == fixture[2].pixels[1024] / 255.0);  // first green byte

  const auto short_path = temp_file("cifar_short.bin");
  {
    std::ofstream out(short_path, std::ios::binary);
    const std::string bytes(kCifarImageBytes, '\0');
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(read_cifar10_records(short_path), FormatError);

  const auto bad_label = temp_file("cifar_label.bin");
  std::vector<CifarRecord> labelled = {solid_record(1, 5), solid_record(10, 5)};
  write_cifar10_records(bad_label, labelled);
  try {
    read_cifar10_records(bad_label);
    FAIL("label 10 accepted");
  } catch (const FormatError& e) {
    CHECK(e.offset() == kCifarRecordBytes);
  }

  for (const auto& p : {path, fixture_path, short_path, bad_label}) std::filesystem::remove(p);
}

TEST_CASE("identity policy reproduces the raw samples") {
  const Dataset ds = make_synthetic_clusters(3, 10, 5, 2.0, 11);
  std::mt19937_64 rng(12);
  const PositivePairBatch batch = sample_positive_pairs(ds, AugmentationPolicy::identity(), 8, rng);
  CHECK(batch.view1 == batch.view2);
  CHECK(batch.view1 == ds.columns(batch.source));
  CHECK(std::set<std::size_t>(batch.source.begin(), batch.source.end()).size() == 8);

  CHECK_THROWS_AS(sample_positive_pairs(ds, AugmentationPolicy::identity(), 31, rng), SamplingError);
}

TEST_CASE("pair sampling is deterministic and shape preserving") {
  const Dataset ds = make_synthetic_clusters(3, 20, 6, 2.0, 13);
  AugmentationPolicy policy;
  policy.scale_min = 0.8;
  policy.scale_max = 1.2;
  policy.dropout_p = 0.1;
  policy.noise_std = 0.3;
  std::mt19937_64 a(14), b(14);
  for (int step = 0; step < 3; ++step) {
    const auto pa = sample_positive_pairs(ds, policy, 16, a);
    const auto pb = sample_positive_pairs(ds, policy, 16, b);
    CHECK(pa.view1 == pb.view1);
    CHECK(pa.view2 == pb.view2);
    CHECK(pa.source == pb.source);
    CHECK(pa.view1.rows() == 6);
    CHECK(pa.view1.cols() == 16);
    CHECK_FALSE(pa.view1 == pa.view2);
  }
}

TEST_CASE("independent noise doubles the per-coordinate variance of the view difference") {
  const Dataset ds = make_synthetic_clusters(2, 200, 8, 3.0, 15);
  AugmentationPolicy policy;
  policy.noise_std = 0.5;
  std::mt19937_64 rng(16);
  double sum = 0.0;
  std::size_t count = 0;
  for (int draw = 0; draw < 200; ++draw) {
    const auto batch = sample_positive_pairs(ds, policy, 100, rng);
    for (std::size_t i = 0; i < batch.view1.size(); ++i) {
      const double d = batch.view1.data()[i] - batch.view2.data()[i];
      sum += d * d;
      ++count;
    }
  }
  const double expected = 2 * 0.5 * 0.5;
  CHECK(std::abs(sum / static_cast<double>(count) - expected) < 0.05 * expected);
}

TEST_CASE("image augmentations") {
  std::vector<double> img(kCifarImageBytes);
  std::mt19937_64 fill(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : img) v = u(fill);

  AugmentationPolicy none = AugmentationPolicy::image_defaults();
  none.crop_min = none.crop_max = 1.0;
  none.crop_ratio_min = none.crop_ratio_max = 1.0;
  none.flip_p = none.color_p = none.gray_p = none.blur_p = 0.0;
  std::mt19937_64 rng(18);
  const auto same = augment(img, none, rng);
  REQUIRE(same.size() == img.size());
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(same[i] == doctest::Approx(img[i]).epsilon(1e-12));

  AugmentationPolicy flip = none;
  flip.flip_p = 1.0;
  const auto flipped = augment(img, flip, rng);
  CHECK(flipped[0] == doctest::Approx(img[31]));
  CHECK(flipped[2 * 1024 + 5 * 32 + 3] == doctest::Approx(img[2 * 1024 + 5 * 32 + 28]));

  AugmentationPolicy gray = none;
  gray.gray_p = 1.0;
  const auto grey = augment(img, gray, rng);
  for (std::size_t i = 0; i < 1024; ++i) {
    CHECK(grey[i] == doctest::Approx(grey[1024 + i]));
    CHECK(grey[i] == doctest::Approx(grey[2048 + i]));
  }

  AugmentationPolicy full = AugmentationPolicy::image_defaults();
  full.blur_p = 0.5;
  CHECK_NOTHROW(full.validate());
  std::mt19937_64 r1(19), r2(19);
  const auto a = augment(img, full, r1);
  const auto b = augment(img, full, r2);
  CHECK(a == b);
  CHECK(a.size() == img.size());
  for (double v : a) CHECK(std::isfinite(v));

  CHECK_THROWS_AS(augment(std::vector<double>(10), full, r1), DimensionError);
}

TEST_CASE("augmentation policy validation") {
  AugmentationPolicy p;
  p.dropout_p = 1.5;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = AugmentationPolicy{};
  p.scale_min = 2.0;
  p.scale_max = 1.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = AugmentationPolicy::image_defaults();
  p.crop_min = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}
