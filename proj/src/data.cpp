#include "decorr/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>

#include "decorr/errors.hpp"

namespace decorr {

namespace {

constexpr std::size_t kPlane = kCifarSide * kCifarSide;

// Orthonormal rows via Gram-Schmidt on Gaussian draws.
std::vector<std::vector<double>> random_orthonormal(std::size_t count, std::size_t dim,
                                                    std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> basis;
  while (basis.size() < count) {
    std::vector<double> v(dim);
    for (double& x : v) x = normal(rng);
    for (const auto& b : basis) {
      const double dot = std::inner_product(v.begin(), v.end(), b.begin(), 0.0);
      for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * b[i];
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm < 1e-6) continue;
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  return basis;
}

double min_pairwise_distance(const std::vector<std::vector<double>>& points) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < points[i].size(); ++k) {
        d += (points[i][k] - points[j][k]) * (points[i][k] - points[j][k]);
      }
      best = std::min(best, std::sqrt(d));
    }
  }
  return best;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool coin(std::mt19937_64& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string("augmentation: ") + name + " must lie in [0, 1]");
}

// ---- image helpers on 3 x 32 x 32 channel-major buffers

double bilinear(std::span<const double> plane, double y, double x) {
  const double side = static_cast<double>(kCifarSide);
  y = std::clamp(y, 0.0, side - 1.0);
  x = std::clamp(x, 0.0, side - 1.0);
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, kCifarSide - 1);
  const std::size_t x1 = std::min(x0 + 1, kCifarSide - 1);
  const double fy = y - static_cast<double>(y0);
  const double fx = x - static_cast<double>(x0);
  const double top = plane[y0 * kCifarSide + x0] * (1 - fx) + plane[y0 * kCifarSide + x1] * fx;
  const double bottom = plane[y1 * kCifarSide + x0] * (1 - fx) + plane[y1 * kCifarSide + x1] * fx;
  return top * (1 - fy) + bottom * fy;
}

void random_resized_crop(std::vector<double>& img, const AugmentationPolicy& p, std::mt19937_64& rng) {
  const double side = static_cast<double>(kCifarSide);
  const double area = uniform(rng, p.crop_min, p.crop_max) * side * side;
  const double log_ratio = uniform(rng, std::log(p.crop_ratio_min), std::log(p.crop_ratio_max));
  const double ratio = std::exp(log_ratio);
  const double w = std::clamp(std::sqrt(area * ratio), 1.0, side);
  const double h = std::clamp(std::sqrt(area / ratio), 1.0, side);
  const double top = uniform(rng, 0.0, side - h);
  const double left = uniform(rng, 0.0, side - w);

  std::vector<double> out(img.size());
  for (std::size_t c = 0; c < 3; ++c) {
    std::span<const double> plane(img.data() + c * kPlane, kPlane);
    for (std::size_t r = 0; r < kCifarSide; ++r) {
      // Pixel centers of the output grid mapped into the crop window.
      const double sy = top + (static_cast<double>(r) + 0.5) * h / side - 0.5;
      for (std::size_t q = 0; q < kCifarSide; ++q) {
        const double sx = left + (static_cast<double>(q) + 0.5) * w / side - 0.5;
        out[c * kPlane + r * kCifarSide + q] = bilinear(plane, sy, sx);
      }
    }
  }
  img = std::move(out);
}

void horizontal_flip(std::vector<double>& img) {
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t r = 0; r < kCifarSide; ++r) {
      auto first = img.begin() + static_cast<std::ptrdiff_t>(c * kPlane + r * kCifarSide);
      std::reverse(first, first + static_cast<std::ptrdiff_t>(kCifarSide));
    }
  }
}

void color_jitter(std::vector<double>& img, double strength, std::mt19937_64& rng) {
  for (std::size_t c = 0; c < 3; ++c) {
    const double gain = uniform(rng, 1.0 - strength, 1.0 + strength);
    const double shift = uniform(rng, -strength, strength);
    for (std::size_t i = 0; i < kPlane; ++i) img[c * kPlane + i] = img[c * kPlane + i] * gain + shift;
  }
}

void grayscale(std::vector<double>& img) {
  for (std::size_t i = 0; i < kPlane; ++i) {
    const double y = 0.299 * img[i] + 0.587 * img[kPlane + i] + 0.114 * img[2 * kPlane + i];
    img[i] = img[kPlane + i] = img[2 * kPlane + i] = y;
  }
}

void gaussian_blur(std::vector<double>& img, double sigma) {
  constexpr int kRadius = 3;
  std::array<double, 2 * kRadius + 1> kernel{};
  double total = 0.0;
  for (int k = -kRadius; k <= kRadius; ++k) {
    kernel[k + kRadius] = std::exp(-0.5 * k * k / (sigma * sigma));
    total += kernel[k + kRadius];
  }
  for (double& k : kernel) k /= total;

  const int side = static_cast<int>(kCifarSide);
  std::vector<double> tmp(img.size());
  for (int c = 0; c < 3; ++c) {
    double* plane = img.data() + c * kPlane;
    double* scratch = tmp.data() + c * kPlane;
    for (int r = 0; r < side; ++r)
      for (int q = 0; q < side; ++q) {
        double s = 0.0;
        for (int k = -kRadius; k <= kRadius; ++k) s += kernel[k + kRadius] * plane[r * side + std::clamp(q + k, 0, side - 1)];
        scratch[r * side + q] = s;
      }
    for (int r = 0; r < side; ++r)
      for (int q = 0; q < side; ++q) {
        double s = 0.0;
        for (int k = -kRadius; k <= kRadius; ++k) s += kernel[k + kRadius] * scratch[std::clamp(r + k, 0, side - 1) * side + q];
        plane[r * side + q] = s;
      }
  }
}

}  // namespace

// ---------------------------------------------------------------- dataset

Matrix Dataset::columns(std::span<const std::size_t> indices) const {
  Matrix out(dim(), indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    if (indices[b] >= size()) throw SamplingError("sample index out of range");
    auto row = samples.row(indices[b]);
    for (std::size_t d = 0; d < row.size(); ++d) out(d, b) = row[d];
  }
  return out;
}

void Dataset::validate() const {
  if (size() == 0) throw ConfigError("dataset is empty");
  if (labels.size() != size()) throw ConfigError("dataset: label count differs from sample count");
  for (int l : labels) {
    if (l < 0 || l >= class_count) throw ConfigError("dataset: label outside [0, class_count)");
  }
  if (!samples.all_finite()) throw ConfigError("dataset: non-finite sample value");
}

Dataset make_synthetic_clusters(int class_count, std::size_t per_class, std::size_t dim,
                                double separation, std::uint64_t seed, double blob_std) {
  if (class_count <= 0 || per_class == 0 || dim == 0) {
    throw ConfigError("make_synthetic_clusters: counts must be positive");
  }
  std::mt19937_64 rng(seed);
  const auto classes = static_cast<std::size_t>(class_count);

  std::vector<std::vector<double>> means;
  if (classes <= dim) {
    // Scaled orthonormal directions sit exactly `separation` apart.
    means = random_orthonormal(classes, dim, rng);
    for (auto& m : means)
      for (double& v : m) v *= separation / std::sqrt(2.0);
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    means.assign(classes, std::vector<double>(dim));
    for (auto& m : means)
      for (double& v : m) v = normal(rng);
    const double current = min_pairwise_distance(means);
    const double factor = current > 0.0 ? separation / current : 0.0;
    for (auto& m : means)
      for (double& v : m) v *= factor;
  }
  if (classes == 1 || separation == 0.0) {
    for (auto& m : means) std::fill(m.begin(), m.end(), 0.0);
  }

  Dataset ds{Matrix(classes * per_class, dim), std::vector<int>(classes * per_class), class_count};
  std::normal_distribution<double> noise(0.0, blob_std);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::size_t n = c * per_class + i;
      ds.labels[n] = static_cast<int>(c);
      auto row = ds.samples.row(n);
      for (std::size_t d = 0; d < dim; ++d) row[d] = means[c][d] + noise(rng);
    }
  }
  return ds;
}

std::pair<Dataset, Dataset> split_per_class(const Dataset& ds, std::size_t test_per_class) {
  std::vector<std::size_t> seen(static_cast<std::size_t>(ds.class_count), 0);
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t n = 0; n < ds.size(); ++n) {
    auto& count = seen[static_cast<std::size_t>(ds.labels[n])];
    (count++ < test_per_class ? test_idx : train_idx).push_back(n);
  }
  auto gather = [&](const std::vector<std::size_t>& idx) {
    Dataset out{Matrix(idx.size(), ds.dim()), {}, ds.class_count};
    out.labels.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto src = ds.samples.row(idx[i]);
      std::copy(src.begin(), src.end(), out.samples.row(i).begin());
      out.labels.push_back(ds.labels[idx[i]]);
    }
    return out;
  };
  return {gather(train_idx), gather(test_idx)};
}

// ---------------------------------------------------------------- CIFAR-10

std::vector<CifarRecord> read_cifar10_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty()) throw FormatError(path.string() + ": empty file", 0);
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError(path.string() + ": length " + std::to_string(bytes.size()) +
                          " is not a multiple of 3073 (truncated record)",
                      bytes.size() - bytes.size() % kCifarRecordBytes);
  }
  std::vector<CifarRecord> records(bytes.size() / kCifarRecordBytes);
  for (std::size_t r = 0; r < records.size(); ++r) {
    const std::size_t offset = r * kCifarRecordBytes;
    const auto label = static_cast<std::uint8_t>(bytes[offset]);
    if (label >= 10) throw FormatError(path.string() + ": label " + std::to_string(label) + " >= 10", offset);
    records[r].label = label;
    records[r].pixels.resize(kCifarImageBytes);
    for (std::size_t i = 0; i < kCifarImageBytes; ++i) {
      records[r].pixels[i] = static_cast<std::uint8_t>(bytes[offset + 1 + i]);
    }
  }
  return records;
}

void write_cifar10_records(const std::filesystem::path& path, std::span<const CifarRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (const CifarRecord& r : records) {
    if (r.pixels.size() != kCifarImageBytes) throw DimensionError("CIFAR record must hold 3072 pixel bytes");
    out.put(static_cast<char>(r.label));
    out.write(reinterpret_cast<const char*>(r.pixels.data()), static_cast<std::streamsize>(r.pixels.size()));
  }
}

Dataset load_cifar10_binary(std::span<const std::filesystem::path> paths, bool normalize) {
  std::vector<CifarRecord> records;
  for (const auto& p : paths) {
    auto part = read_cifar10_records(p);
    records.insert(records.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  if (records.empty()) throw FormatError("no CIFAR-10 files given", 0);

  Dataset ds{Matrix(records.size(), kCifarImageBytes), std::vector<int>(records.size()), 10};
  for (std::size_t n = 0; n < records.size(); ++n) {
    ds.labels[n] = records[n].label;
    auto row = ds.samples.row(n);
    for (std::size_t i = 0; i < kCifarImageBytes; ++i) row[i] = records[n].pixels[i] / 255.0;
  }
  if (normalize) {
    for (std::size_t c = 0; c < 3; ++c) {
      double sum = 0.0, sq = 0.0;
      for (std::size_t n = 0; n < ds.size(); ++n) {
        auto row = ds.samples.row(n);
        for (std::size_t i = 0; i < kPlane; ++i) {
          sum += row[c * kPlane + i];
          sq += row[c * kPlane + i] * row[c * kPlane + i];
        }
      }
      const double count = static_cast<double>(ds.size() * kPlane);
      const double mean = sum / count;
      const double var = std::max(0.0, sq / count - mean * mean);
      const double inv = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
      for (std::size_t n = 0; n < ds.size(); ++n) {
        auto row = ds.samples.row(n);
        for (std::size_t i = 0; i < kPlane; ++i) row[c * kPlane + i] = (row[c * kPlane + i] - mean) * inv;
      }
    }
  }
  return ds;
}

// ------------------------------------------------------------ augmentation

AugmentationPolicy AugmentationPolicy::identity() {
  AugmentationPolicy p;
  p.kind = Kind::vector;
  return p;
}

AugmentationPolicy AugmentationPolicy::vector_defaults() {
  AugmentationPolicy p;
  p.scale_min = 0.8;
  p.scale_max = 1.2;
  p.dropout_p = 0.1;
  p.noise_std = 0.5;
  return p;
}

AugmentationPolicy AugmentationPolicy::image_defaults() {
  AugmentationPolicy p;
  p.kind = Kind::image;
  return p;
}

void AugmentationPolicy::validate() const {
  if (!(scale_min > 0.0 && scale_min <= scale_max)) throw ConfigError("augmentation: need 0 < scale_min <= scale_max");
  if (!(noise_std >= 0.0)) throw ConfigError("augmentation: noise_std must be non-negative");
  check_probability(dropout_p, "dropout_p");
  check_probability(flip_p, "flip_p");
  check_probability(color_p, "color_p");
  check_probability(gray_p, "gray_p");
  check_probability(blur_p, "blur_p");
  if (!(crop_min > 0.0 && crop_min <= crop_max && crop_max <= 1.0)) {
    throw ConfigError("augmentation: need 0 < crop_min <= crop_max <= 1");
  }
  if (!(crop_ratio_min > 0.0 && crop_ratio_min <= crop_ratio_max)) {
    throw ConfigError("augmentation: need 0 < crop_ratio_min <= crop_ratio_max");
  }
  if (!(color_strength >= 0.0)) throw ConfigError("augmentation: color_strength must be non-negative");
  if (!(blur_sigma_min > 0.0 && blur_sigma_min <= blur_sigma_max)) {
    throw ConfigError("augmentation: need 0 < blur_sigma_min <= blur_sigma_max");
  }
}

std::vector<double> augment(std::span<const double> sample, const AugmentationPolicy& policy,
                            std::mt19937_64& rng) {
  std::vector<double> out(sample.begin(), sample.end());
  if (policy.kind == AugmentationPolicy::Kind::vector) {
    const double s = uniform(rng, policy.scale_min, policy.scale_max);
    if (s != 1.0)
      for (double& v : out) v *= s;
    if (policy.dropout_p > 0.0)
      for (double& v : out)
        if (coin(rng, policy.dropout_p)) v = 0.0;
    if (policy.noise_std > 0.0) {
      std::normal_distribution<double> noise(0.0, policy.noise_std);
      for (double& v : out) v += noise(rng);
    }
    return out;
  }

  if (out.size() != kCifarImageBytes) throw DimensionError("image augmentation expects 3x32x32 samples");
  random_resized_crop(out, policy, rng);
  if (coin(rng, policy.flip_p)) horizontal_flip(out);
  if (coin(rng, policy.color_p)) color_jitter(out, policy.color_strength, rng);
  if (coin(rng, policy.gray_p)) grayscale(out);
  if (coin(rng, policy.blur_p)) gaussian_blur(out, uniform(rng, policy.blur_sigma_min, policy.blur_sigma_max));
  return out;
}

PositivePairBatch make_positive_pairs(const Dataset& ds, const AugmentationPolicy& policy,
                                      std::span<const std::size_t> indices, std::mt19937_64& rng) {
  PositivePairBatch batch{Matrix(ds.dim(), indices.size()), Matrix(ds.dim(), indices.size()),
                          std::vector<std::size_t>(indices.begin(), indices.end())};
  for (std::size_t b = 0; b < indices.size(); ++b) {
    if (indices[b] >= ds.size()) throw SamplingError("sample index out of range");
    auto source = ds.samples.row(indices[b]);
    const auto v1 = augment(source, policy, rng);
    const auto v2 = augment(source, policy, rng);
    for (std::size_t d = 0; d < ds.dim(); ++d) {
      batch.view1(d, b) = v1[d];
      batch.view2(d, b) = v2[d];
    }
  }
  return batch;
}

std::size_t draw_index(std::size_t n, std::mt19937_64& rng) {
  return static_cast<std::size_t>(rng() % n);
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[draw_index(i, rng)]);
  return order;
}

PositivePairBatch sample_positive_pairs(const Dataset& ds, const AugmentationPolicy& policy,
                                        std::size_t batch_size, std::mt19937_64& rng) {
  if (batch_size > ds.size()) {
    throw SamplingError("batch size " + std::to_string(batch_size) + " exceeds dataset size " +
                        std::to_string(ds.size()));
  }
  // Partial Fisher-Yates: the first batch_size slots are a uniform draw without replacement.
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < batch_size; ++i) {
    std::swap(order[i], order[i + draw_index(ds.size() - i, rng)]);
  }
  order.resize(batch_size);
  return make_positive_pairs(ds, policy, order, rng);
}

}  // namespace decorr
