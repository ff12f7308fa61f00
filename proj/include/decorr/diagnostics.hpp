#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "decorr/linalg.hpp"

namespace decorr {

inline constexpr double kDefaultVarFloor = 1e-12;
inline constexpr double kDefaultRankTol = 1e-3;

struct FeatureStd {
  std::vector<double> per_dim;
  double mean = 0.0;
};

/// Population standard deviation of every row of a D x B batch.
FeatureStd feature_std(const Matrix& z);

struct CorrelationStrength {
  double avg_corr = 0.0;
  std::size_t excluded_dims = 0;
};

/// Mean |off-diagonal| Pearson correlation among rows whose variance is at
/// least `var_floor`; the other rows are excluded and counted. Throws
/// InsufficientVariance when fewer than two rows remain.
CorrelationStrength avg_corr(const Matrix& z, double var_floor = kDefaultVarFloor);

/// Singular values of the row-centered batch above rel_tol times the largest.
std::size_t effective_rank(const Matrix& z, double rel_tol = kDefaultRankTol);

/// k-nearest-neighbour accuracy, Euclidean distance, features as columns.
/// Neighbours are ranked by (distance, label); a vote tie goes to the class
/// holding the nearest neighbour, then to the lowest class id.
double knn_eval(const Matrix& train_feats, std::span<const int> train_labels, const Matrix& test_feats,
                std::span<const int> test_labels, std::size_t k);

struct ProbeConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

/// Softmax regression trained by SGD on frozen, train-standardized features;
/// returns top-1 accuracy on the evaluation set.
double linear_probe(const Matrix& train_feats, std::span<const int> train_labels, const Matrix& eval_feats,
                    std::span<const int> eval_labels, const ProbeConfig& cfg = {});

struct CollapseReport {
  std::vector<double> per_dim_std;
  double mean_std = 0.0;
  std::optional<double> avg_corr;  // empty when fewer than two dims carry variance
  std::size_t effective_rank = 0;
  std::size_t excluded_dims = 0;
  double loss = 0.0;
};

CollapseReport collapse_report(const Matrix& z, double loss, double var_floor = kDefaultVarFloor,
                               double rank_tol = kDefaultRankTol);

/// "epoch,loss,mean_std,avg_corr,effective_rank,excluded_dims,knn_acc"
std::string metrics_csv_header();
std::string metrics_csv_row(std::size_t epoch, const CollapseReport& report, double knn_acc);

}  // namespace decorr
