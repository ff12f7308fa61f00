#include "decorr/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "decorr/errors.hpp"

namespace decorr {

namespace {

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()));
  }
}

Matrix row_sums(const Matrix& m) {
  Matrix out(m.rows(), 1);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    out(i, 0) = std::accumulate(r.begin(), r.end(), 0.0);
  }
  return out;
}

Matrix copy_rows(const Matrix& x, std::size_t first, std::size_t count) {
  Matrix out(count, x.cols());
  for (std::size_t i = 0; i < count; ++i) {
    auto src = x.row(first + i);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

void paste_rows(Matrix& dst, const Matrix& src, std::size_t first) {
  for (std::size_t i = 0; i < src.rows(); ++i) {
    auto s = src.row(i);
    std::copy(s.begin(), s.end(), dst.row(first + i).begin());
  }
}

}  // namespace

// ----------------------------------------------------------------- linear

LinearForward linear_forward(const Matrix& x, const Matrix& weight, const Matrix& bias) {
  require_shape(bias, weight.rows(), 1, "linear_forward bias");
  if (x.rows() != weight.cols()) {
    throw DimensionError("linear_forward: input has " + std::to_string(x.rows()) +
                         " rows, weight expects " + std::to_string(weight.cols()));
  }
  Matrix y = matmul(weight, x);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    for (double& v : y.row(i)) v += bias(i, 0);
  }
  return {std::move(y), LinearCache{x}};
}

LinearGrads linear_backward(const LinearCache& cache, const Matrix& weight, const Matrix& dy) {
  require_shape(dy, weight.rows(), cache.input.cols(), "linear_backward dy");
  return {matmul(transpose(weight), dy), matmul(dy, transpose(cache.input)), row_sums(dy)};
}

// ------------------------------------------------------------------- relu

ReluForward relu_forward(const Matrix& x) {
  Matrix y = x;
  for (double& v : y.data()) v = std::max(0.0, v);
  return {std::move(y), ReluCache{x}};
}

Matrix relu_backward(const ReluCache& cache, const Matrix& dy) {
  require_shape(dy, cache.input.rows(), cache.input.cols(), "relu_backward dy");
  Matrix dx = dy;
  auto in = cache.input.data();
  auto d = dx.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (in[i] <= 0.0) d[i] = 0.0;
  }
  return dx;
}

// --------------------------------------------------------------------- bn

void BNConfig::validate() const {
  if (!(epsilon >= 0.0)) throw DimensionError("BNConfig: epsilon must be non-negative");
  if (!(running_momentum >= 0.0 && running_momentum <= 1.0)) {
    throw DimensionError("BNConfig: running_momentum must lie in [0, 1]");
  }
}

BNState BNState::init(std::size_t dim) {
  return {Matrix(dim, 1, 1.0), Matrix(dim, 1, 0.0), Matrix(dim, 1, 0.0), Matrix(dim, 1, 1.0)};
}

BNForward bn_forward(const Matrix& x, const BNConfig& cfg, Mode mode, BNState& state) {
  cfg.validate();
  const std::size_t dim = x.rows();
  const std::size_t batch = x.cols();
  require_shape(state.running_mean, dim, 1, "bn_forward running_mean");
  if (mode == Mode::train && batch < 2) throw DimensionError("bn_forward: train mode needs B >= 2");

  BNCache cache;
  cache.mode = mode;
  cache.affine = cfg.affine;
  cache.normalized = Matrix(dim, batch);
  cache.inv_std = Matrix(dim, 1);

  // Running statistics are only touched once every row has passed the variance check.
  std::vector<double> batch_mean(dim), batch_var(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    auto row = x.row(d);
    double mean = 0.0;
    double var = 0.0;
    if (mode == Mode::train) {
      mean = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(batch);
      for (double v : row) var += (v - mean) * (v - mean);
      var /= static_cast<double>(batch);
    } else {
      mean = state.running_mean(d, 0);
      var = state.running_var(d, 0);
    }
    if (cfg.epsilon == 0.0 && var < kMinVariance) throw DegenerateVariance(d, var);
    batch_mean[d] = mean;
    batch_var[d] = var;

    const double inv_std = 1.0 / std::sqrt(var + cfg.epsilon);
    cache.inv_std(d, 0) = inv_std;
    auto out = cache.normalized.row(d);
    for (std::size_t b = 0; b < batch; ++b) out[b] = (row[b] - mean) * inv_std;
  }

  if (mode == Mode::train) {
    const double m = cfg.running_momentum;
    for (std::size_t d = 0; d < dim; ++d) {
      state.running_mean(d, 0) = m * state.running_mean(d, 0) + (1.0 - m) * batch_mean[d];
      state.running_var(d, 0) = m * state.running_var(d, 0) + (1.0 - m) * batch_var[d];
    }
  }

  Matrix y = cache.normalized;
  if (cfg.affine) {
    require_shape(state.gamma, dim, 1, "bn_forward gamma");
    cache.gamma = state.gamma;
    for (std::size_t d = 0; d < dim; ++d) {
      for (double& v : y.row(d)) v = v * state.gamma(d, 0) + state.beta(d, 0);
    }
  }
  return {std::move(y), std::move(cache)};
}

BNGrads bn_backward(const BNCache& cache, const Matrix& dy) {
  const std::size_t dim = cache.normalized.rows();
  const std::size_t batch = cache.normalized.cols();
  require_shape(dy, dim, batch, "bn_backward dy");

  BNGrads grads;
  Matrix dnorm = dy;
  if (cache.affine) {
    grads.dgamma = Matrix(dim, 1);
    grads.dbeta = Matrix(dim, 1);
    for (std::size_t d = 0; d < dim; ++d) {
      auto g = dy.row(d);
      auto n = cache.normalized.row(d);
      double dgamma = 0.0;
      double dbeta = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        dgamma += g[b] * n[b];
        dbeta += g[b];
      }
      grads.dgamma(d, 0) = dgamma;
      grads.dbeta(d, 0) = dbeta;
      for (double& v : dnorm.row(d)) v *= cache.gamma(d, 0);
    }
  }

  grads.dx = Matrix(dim, batch);
  for (std::size_t d = 0; d < dim; ++d) {
    const double inv_std = cache.inv_std(d, 0);
    auto g = dnorm.row(d);
    auto out = grads.dx.row(d);
    if (cache.mode == Mode::eval) {
      for (std::size_t b = 0; b < batch; ++b) out[b] = g[b] * inv_std;
      continue;
    }
    auto n = cache.normalized.row(d);
    double mean_g = 0.0;
    double mean_gn = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      mean_g += g[b];
      mean_gn += g[b] * n[b];
    }
    mean_g /= static_cast<double>(batch);
    mean_gn /= static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b) out[b] = inv_std * (g[b] - mean_g - n[b] * mean_gn);
  }
  return grads;
}

// -------------------------------------------------------------------- zca

namespace {

// Q diag(l)^{-1/2} Q^T of a symmetric Gram matrix, after the relative rank check.
Matrix inverse_sqrt(const Matrix& sigma, double eig_floor, std::size_t group, EigenDecomposition& eig) {
  eig = sym_eig(sigma);
  const double largest = eig.eigenvalues.front();
  const double smallest = eig.eigenvalues.back();
  if (!(largest > 0.0) || !(smallest > eig_floor * largest)) {
    throw RankDeficient(largest > 0.0 ? smallest / largest : 0.0, group);
  }
  const std::size_t n = sigma.rows();
  Matrix scaled = eig.eigenvectors;
  for (std::size_t k = 0; k < n; ++k) {
    const double s = 1.0 / std::sqrt(eig.eigenvalues[k]);
    for (std::size_t i = 0; i < n; ++i) scaled(i, k) *= s;
  }
  return matmul(scaled, transpose(eig.eigenvectors));
}

}  // namespace

ZcaForward zca_forward(const Matrix& x, double eig_floor, std::size_t group) {
  if (x.rows() == 0) throw DimensionError("zca_forward: empty input");
  ZcaCache cache;
  cache.centered = center_rows(x);
  EigenDecomposition eig;
  cache.whitening = inverse_sqrt(gram(cache.centered), eig_floor, group, eig);
  cache.eigenvalues = std::move(eig.eigenvalues);
  cache.eigenvectors = std::move(eig.eigenvectors);

  Matrix y = matmul(cache.whitening, cache.centered);
  return {std::move(y), std::move(cache)};
}

// Gradient through W = f(S) with f(l) = l^{-1/2} uses the divided differences
// K_ij = (f(l_i) - f(l_j)) / (l_i - l_j) = -1 / (s_i s_j (s_i + s_j)), s = sqrt(l),
// which stays finite for repeated eigenvalues.
Matrix zca_backward(const ZcaCache& cache, const Matrix& dy) {
  const Matrix& xc = cache.centered;
  require_shape(dy, xc.rows(), xc.cols(), "zca_backward dy");
  const std::size_t n = xc.rows();
  const Matrix& q = cache.eigenvectors;

  const Matrix g_w = matmul(dy, transpose(xc));
  Matrix m = matmul(transpose(q), matmul(g_w, q));
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = std::sqrt(cache.eigenvalues[i]);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m(i, j) *= -1.0 / (s[i] * s[j] * (s[i] + s[j]));
  }
  const Matrix g_sigma = matmul(q, matmul(m, transpose(q)));
  const Matrix g_sym = add(g_sigma, transpose(g_sigma));

  Matrix g_xc = add(matmul(transpose(cache.whitening), dy), matmul(g_sym, xc));
  return center_rows(g_xc);
}

// ------------------------------------------------------------ permutation

Permutation::Permutation(std::vector<std::size_t> forward)
    : forward_(std::move(forward)), inverse_(forward_.size(), forward_.size()) {
  for (std::size_t i = 0; i < forward_.size(); ++i) {
    const std::size_t src = forward_[i];
    if (src >= forward_.size() || inverse_[src] != forward_.size()) {
      throw DimensionError("Permutation: not a bijection");
    }
    inverse_[src] = i;
  }
}

Permutation Permutation::identity(std::size_t n) {
  std::vector<std::size_t> f(n);
  std::iota(f.begin(), f.end(), std::size_t{0});
  return Permutation(std::move(f));
}

Permutation Permutation::random(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> f(n);
  std::iota(f.begin(), f.end(), std::size_t{0});
  // Fisher-Yates with an explicit index draw keeps the sequence independent of
  // the standard library's shuffle implementation.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(f[i - 1], f[j]);
  }
  return Permutation(std::move(f));
}

bool Permutation::is_identity() const noexcept {
  for (std::size_t i = 0; i < forward_.size(); ++i) {
    if (forward_[i] != i) return false;
  }
  return true;
}

Matrix Permutation::apply_rows(const Matrix& x) const {
  if (x.rows() != size()) throw DimensionError("Permutation: row count mismatch");
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < size(); ++i) {
    auto src = x.row(forward_[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix Permutation::apply_inverse_rows(const Matrix& x) const {
  if (x.rows() != size()) throw DimensionError("Permutation: row count mismatch");
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < size(); ++i) {
    auto src = x.row(i);
    std::copy(src.begin(), src.end(), out.row(forward_[i]).begin());
  }
  return out;
}

// -------------------------------------------------------------------- dbn

void DBNConfig::validate(std::size_t dim) const {
  if (group_size == 0) throw DimensionError("DBNConfig: group_size must be >= 1");
  if (!(eig_floor > 0.0)) throw DimensionError("DBNConfig: eig_floor must be positive");
  if (dim % group_size != 0) {
    throw DimensionError("DBNConfig: dimension " + std::to_string(dim) +
                         " is not divisible by group size " + std::to_string(group_size));
  }
}

DBNForward dbn_forward(const Matrix& x, const DBNConfig& cfg) {
  return dbn_forward(x, cfg, Permutation::identity(x.rows()));
}

DBNForward dbn_forward(const Matrix& x, const DBNConfig& cfg, const Permutation& perm) {
  // Batches smaller than G + 1 surface as RankDeficient from the group ZCA.
  cfg.validate(x.rows());
  const Matrix permuted = perm.apply_rows(x);
  Matrix y(x.rows(), x.cols());
  DBNCache cache;
  cache.mode = Mode::train;
  cache.permutation = perm;
  const std::size_t group_count = x.rows() / cfg.group_size;
  cache.groups.reserve(group_count);
  for (std::size_t g = 0; g < group_count; ++g) {
    auto [out, zc] = zca_forward(copy_rows(permuted, g * cfg.group_size, cfg.group_size),
                                 cfg.eig_floor, g);
    paste_rows(y, out, g * cfg.group_size);
    cache.groups.push_back(std::move(zc));
  }
  return {perm.apply_inverse_rows(y), std::move(cache)};
}

DBNForward shuffled_dbn_forward(const Matrix& x, const DBNConfig& cfg, std::mt19937_64& rng) {
  return dbn_forward(x, cfg, Permutation::random(x.rows(), rng));
}

Matrix dbn_backward(const DBNCache& cache, const Matrix& dy) {
  if (cache.mode == Mode::eval) return matmul(transpose(cache.transform), dy);
  if (dy.rows() != cache.permutation.size()) throw DimensionError("dbn_backward: row count mismatch");
  const Matrix permuted = cache.permutation.apply_rows(dy);
  Matrix dx(dy.rows(), dy.cols());
  std::size_t first = 0;
  for (const ZcaCache& zc : cache.groups) {
    const std::size_t g = zc.centered.rows();
    if (zc.centered.cols() != dy.cols()) throw DimensionError("dbn_backward: batch size mismatch");
    paste_rows(dx, zca_backward(zc, copy_rows(permuted, first, g)), first);
    first += g;
  }
  return cache.permutation.apply_inverse_rows(dx);
}

Matrix dbn_transform(const DBNCache& cache, std::size_t dim) {
  if (cache.mode == Mode::eval) return cache.transform;
  Matrix t(dim, dim);
  const auto& src = cache.permutation.forward();
  std::size_t first = 0;
  for (const ZcaCache& zc : cache.groups) {
    const std::size_t g = zc.whitening.rows();
    for (std::size_t i = 0; i < g; ++i) {
      for (std::size_t j = 0; j < g; ++j) t(src[first + i], src[first + j]) = zc.whitening(i, j);
    }
    first += g;
  }
  return t;
}

DBNRunning DBNRunning::init(std::size_t dim) { return {Matrix(dim, 1), Matrix::identity(dim)}; }

void DBNRunning::update(const Matrix& batch_mean, const Matrix& batch_gram, double momentum) {
  mean = add(scale(mean, momentum), scale(batch_mean, 1.0 - momentum));
  gram = add(scale(gram, momentum), scale(batch_gram, 1.0 - momentum));
}

Matrix dbn_running_transform(const DBNRunning& running, const DBNConfig& cfg, const Permutation& perm) {
  const std::size_t dim = running.gram.rows();
  require_shape(running.gram, dim, dim, "dbn_running_transform gram");
  if (perm.size() != dim) throw DimensionError("dbn_running_transform: permutation size mismatch");
  cfg.validate(dim);
  const std::size_t g = cfg.group_size;
  const auto& src = perm.forward();
  Matrix t(dim, dim);
  for (std::size_t first = 0; first < dim; first += g) {
    Matrix block(g, g);
    for (std::size_t i = 0; i < g; ++i)
      for (std::size_t j = 0; j < g; ++j) block(i, j) = running.gram(src[first + i], src[first + j]);
    EigenDecomposition eig;
    const Matrix w = inverse_sqrt(block, cfg.eig_floor, first / g, eig);
    for (std::size_t i = 0; i < g; ++i)
      for (std::size_t j = 0; j < g; ++j) t(src[first + i], src[first + j]) = w(i, j);
  }
  return t;
}

DBNForward dbn_eval_forward(const Matrix& x, const DBNRunning& running, const DBNConfig& cfg,
                            const Permutation& perm) {
  require_shape(running.mean, x.rows(), 1, "dbn_eval_forward mean");
  Matrix shifted = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (double& v : shifted.row(i)) v -= running.mean(i, 0);
  }
  DBNCache cache;
  cache.mode = Mode::eval;
  cache.permutation = perm;
  cache.transform = dbn_running_transform(running, cfg, perm);
  Matrix y = matmul(cache.transform, shifted);
  return {std::move(y), std::move(cache)};
}

}  // namespace decorr
