#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "decorr/linalg.hpp"
#include "decorr/ssl.hpp"

namespace decorr {

/// N samples stored one per row, with integer class labels.
struct Dataset {
  Matrix samples;  // N x input_dim
  std::vector<int> labels;
  int class_count = 0;

  std::size_t size() const noexcept { return samples.rows(); }
  std::size_t dim() const noexcept { return samples.cols(); }

  /// Selected samples as the columns of a dim x B batch.
  Matrix columns(std::span<const std::size_t> indices) const;

  void validate() const;
};

/// Isotropic Gaussian blobs (std `blob_std`) whose class means are pairwise at
/// least `separation` apart. Deterministic in `seed`.
Dataset make_synthetic_clusters(int class_count, std::size_t per_class, std::size_t dim,
                                double separation, std::uint64_t seed, double blob_std = 1.0);

/// Moves the first `test_per_class` samples of every class into a test set.
std::pair<Dataset, Dataset> split_per_class(const Dataset& ds, std::size_t test_per_class);

// --------------------------------------------------------------- CIFAR-10

inline constexpr std::size_t kCifarImageBytes = 3072;
inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarSide = 32;

struct CifarRecord {
  std::uint8_t label = 0;
  std::vector<std::uint8_t> pixels;  // 1024 R, 1024 G, 1024 B, row-major
};

std::vector<CifarRecord> read_cifar10_records(const std::filesystem::path& path);
void write_cifar10_records(const std::filesystem::path& path, std::span<const CifarRecord> records);

/// Concatenates the files; pixels are scaled to [0, 1] and, when `normalize`
/// is set, standardized per channel with the loaded set's own statistics.
Dataset load_cifar10_binary(std::span<const std::filesystem::path> paths, bool normalize = true);

// ----------------------------------------------------------- augmentation

struct AugmentationPolicy {
  enum class Kind { vector, image };
  Kind kind = Kind::vector;

  // Vector transforms, applied in this order.
  double scale_min = 1.0;
  double scale_max = 1.0;
  double dropout_p = 0.0;
  double noise_std = 0.0;

  // Image transforms (3 x 32 x 32, channel-major).
  double crop_min = 0.2;
  double crop_max = 1.0;
  double crop_ratio_min = 3.0 / 4.0;  // aspect-ratio range of the crop window
  double crop_ratio_max = 4.0 / 3.0;
  double flip_p = 0.5;
  double color_p = 0.8;
  double color_strength = 0.4;
  double gray_p = 0.2;
  double blur_p = 0.0;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;

  static AugmentationPolicy identity();
  /// Scale in [0.8, 1.2], 10% coordinate dropout, noise std 0.5.
  static AugmentationPolicy vector_defaults();
  static AugmentationPolicy image_defaults();
  void validate() const;
};

std::vector<double> augment(std::span<const double> sample, const AugmentationPolicy& policy,
                            std::mt19937_64& rng);

/// Two independent augmentations of each listed sample.
PositivePairBatch make_positive_pairs(const Dataset& ds, const AugmentationPolicy& policy,
                                      std::span<const std::size_t> indices, std::mt19937_64& rng);

/// Draws `batch_size` distinct samples and augments each twice.
PositivePairBatch sample_positive_pairs(const Dataset& ds, const AugmentationPolicy& policy,
                                        std::size_t batch_size, std::mt19937_64& rng);

/// Uniform index draw in [0, n) without relying on library distributions.
std::size_t draw_index(std::size_t n, std::mt19937_64& rng);

/// A shuffled 0..n-1 order (Fisher-Yates on draw_index).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng);

}  // namespace decorr
