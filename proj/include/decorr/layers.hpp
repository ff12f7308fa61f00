#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "decorr/linalg.hpp"

namespace decorr {

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// Linear: y = W x + b, with b broadcast over the batch columns.

struct LinearCache {
  Matrix input;
};

struct LinearForward {
  Matrix output;
  LinearCache cache;
};

struct LinearGrads {
  Matrix dx;
  Matrix dweight;
  Matrix dbias;  // D_out x 1
};

LinearForward linear_forward(const Matrix& x, const Matrix& weight, const Matrix& bias);
LinearGrads linear_backward(const LinearCache& cache, const Matrix& weight, const Matrix& dy);

// ---------------------------------------------------------------------------
// ReLU

struct ReluCache {
  Matrix input;
};

struct ReluForward {
  Matrix output;
  ReluCache cache;
};

ReluForward relu_forward(const Matrix& x);
Matrix relu_backward(const ReluCache& cache, const Matrix& dy);

// ---------------------------------------------------------------------------
// Batch normalization over the columns of a D x B batch, population variance.

struct BNConfig {
  double epsilon = 0.0;
  bool affine = false;
  double running_momentum = 0.9;  // weight kept on the old running estimate

  void validate() const;
};

/// Learnable affine parameters and running statistics, all D x 1.
struct BNState {
  Matrix gamma;
  Matrix beta;
  Matrix running_mean;
  Matrix running_var;

  static BNState init(std::size_t dim);
};

struct BNCache {
  Mode mode = Mode::train;
  bool affine = false;
  Matrix normalized;  // pre-affine output
  Matrix inv_std;     // D x 1
  Matrix gamma;       // copy when affine
};

struct BNForward {
  Matrix output;
  BNCache cache;
};

struct BNGrads {
  Matrix dx;
  Matrix dgamma;  // empty unless affine
  Matrix dbeta;
};

/// Rows with variance below this are rejected when epsilon is zero.
inline constexpr double kMinVariance = 1e-24;

/// Train mode normalizes by batch statistics and folds them into the running
/// estimates of `state`; eval mode uses the running estimates.
BNForward bn_forward(const Matrix& x, const BNConfig& cfg, Mode mode, BNState& state);
BNGrads bn_backward(const BNCache& cache, const Matrix& dy);

// ---------------------------------------------------------------------------
// ZCA whitening: Y = Q diag(lambda)^{-1/2} Q^T Xc with Xc = X - rowmean(X)
// and lambda, Q the eigenpairs of the unnormalized Gram Xc Xc^T, so that
// Y Y^T = I.

inline constexpr double kDefaultEigFloor = 1e-7;

struct ZcaCache {
  Matrix centered;
  std::vector<double> eigenvalues;
  Matrix eigenvectors;
  Matrix whitening;  // Q diag(lambda)^{-1/2} Q^T
};

struct ZcaForward {
  Matrix output;
  ZcaCache cache;
};

/// Throws RankDeficient when the smallest eigenvalue of the Gram matrix is not
/// above `eig_floor` times the largest. `group` only labels the error.
ZcaForward zca_forward(const Matrix& x, double eig_floor = kDefaultEigFloor, std::size_t group = 0);
Matrix zca_backward(const ZcaCache& cache, const Matrix& dy);

// ---------------------------------------------------------------------------
// Row permutations for Shuffled-DBN.

class Permutation {
 public:
  Permutation() = default;
  /// `forward[i]` is the source row that lands at position i.
  explicit Permutation(std::vector<std::size_t> forward);

  static Permutation identity(std::size_t n);
  static Permutation random(std::size_t n, std::mt19937_64& rng);

  std::size_t size() const noexcept { return forward_.size(); }
  const std::vector<std::size_t>& forward() const noexcept { return forward_; }
  const std::vector<std::size_t>& inverse() const noexcept { return inverse_; }
  bool is_identity() const noexcept;

  Matrix apply_rows(const Matrix& x) const;
  Matrix apply_inverse_rows(const Matrix& x) const;

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<std::size_t> forward_;
  std::vector<std::size_t> inverse_;
};

// ---------------------------------------------------------------------------
// Decorrelated BN: ZCA applied to consecutive groups of G rows, optionally
// after a random row permutation (Shuffled-DBN).

struct DBNConfig {
  std::size_t group_size = 1;
  double eig_floor = kDefaultEigFloor;
  bool shuffle = false;
  std::uint64_t rng_seed = 0;
  double running_momentum = 0.9;

  void validate(std::size_t dim) const;
};

struct DBNCache {
  Mode mode = Mode::train;
  Permutation permutation;
  std::vector<ZcaCache> groups;
  Matrix transform;  // eval mode only
};

struct DBNForward {
  Matrix output;
  DBNCache cache;
};

/// Plain DBN in train mode (identity permutation).
DBNForward dbn_forward(const Matrix& x, const DBNConfig& cfg);

/// DBN on rows permuted by `perm`, with the permutation undone on the output.
DBNForward dbn_forward(const Matrix& x, const DBNConfig& cfg, const Permutation& perm);

/// Draws a fresh permutation from `rng` and runs the permuted DBN.
DBNForward shuffled_dbn_forward(const Matrix& x, const DBNConfig& cfg, std::mt19937_64& rng);

Matrix dbn_backward(const DBNCache& cache, const Matrix& dy);
inline Matrix shuffled_dbn_backward(const DBNCache& cache, const Matrix& dy) {
  return dbn_backward(cache, dy);
}

/// The full D x D whitening matrix in original row order represented by a
/// train-mode cache (block diagonal up to the permutation).
Matrix dbn_transform(const DBNCache& cache, std::size_t dim);

/// Running statistics for eval-mode DBN: exponential moving averages of the
/// batch mean and of the full D x D centered Gram matrix.
struct DBNRunning {
  Matrix mean;  // D x 1
  Matrix gram;  // D x D

  static DBNRunning init(std::size_t dim);
  void update(const Matrix& batch_mean, const Matrix& batch_gram, double momentum);
};

/// The grouped whitening transform of the running Gram under `perm`, in the
/// original coordinates. Throws RankDeficient like the train-mode forward.
Matrix dbn_running_transform(const DBNRunning& running, const DBNConfig& cfg, const Permutation& perm);

/// Eval-mode DBN: y = dbn_running_transform(...) (x - mean).
DBNForward dbn_eval_forward(const Matrix& x, const DBNRunning& running, const DBNConfig& cfg,
                            const Permutation& perm);

}  // namespace decorr
