#include "decorr/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

#include "decorr/errors.hpp"

namespace decorr {

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void require_batch(const Matrix& z, const char* op) {
  if (z.cols() < 2) throw DimensionError(std::string(op) + ": needs at least two samples");
}

}  // namespace

FeatureStd feature_std(const Matrix& z) {
  require_batch(z, "feature_std");
  FeatureStd out{std::vector<double>(z.rows()), 0.0};
  const Matrix centered = center_rows(z);
  for (std::size_t d = 0; d < z.rows(); ++d) {
    double sq = 0.0;
    for (double v : centered.row(d)) sq += v * v;
    out.per_dim[d] = std::sqrt(sq / static_cast<double>(z.cols()));
  }
  if (!out.per_dim.empty()) {
    out.mean = std::accumulate(out.per_dim.begin(), out.per_dim.end(), 0.0) /
               static_cast<double>(out.per_dim.size());
  }
  return out;
}

CorrelationStrength avg_corr(const Matrix& z, double var_floor) {
  require_batch(z, "avg_corr");
  const Matrix centered = center_rows(z);
  const double batch = static_cast<double>(z.cols());
  std::vector<std::size_t> usable;
  std::vector<double> norms;
  for (std::size_t d = 0; d < z.rows(); ++d) {
    double sq = 0.0;
    for (double v : centered.row(d)) sq += v * v;
    if (sq / batch >= var_floor) {
      usable.push_back(d);
      norms.push_back(std::sqrt(sq));
    }
  }
  CorrelationStrength out{0.0, z.rows() - usable.size()};
  if (usable.size() < 2) {
    throw InsufficientVariance("avg_corr: only " + std::to_string(usable.size()) +
                               " dimension(s) above the variance floor");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < usable.size(); ++i) {
    auto a = centered.row(usable[i]);
    for (std::size_t j = i + 1; j < usable.size(); ++j) {
      auto b = centered.row(usable[j]);
      const double dot = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
      total += std::min(1.0, std::abs(dot) / (norms[i] * norms[j]));
    }
  }
  const double pairs = static_cast<double>(usable.size() * (usable.size() - 1) / 2);
  out.avg_corr = total / pairs;
  return out;
}

std::size_t effective_rank(const Matrix& z, double rel_tol) {
  if (z.rows() == 0 || z.cols() == 0) return 0;
  const auto sv = singular_values(center_rows(z));
  if (sv.empty() || !(sv.front() > 0.0)) return 0;
  return static_cast<std::size_t>(
      std::count_if(sv.begin(), sv.end(), [&](double s) { return s > rel_tol * sv.front(); }));
}

double knn_eval(const Matrix& train_feats, std::span<const int> train_labels, const Matrix& test_feats,
                std::span<const int> test_labels, std::size_t k) {
  const std::size_t n_train = train_feats.cols();
  const std::size_t n_test = test_feats.cols();
  if (n_train == 0 || n_test == 0) throw EvalError("knn_eval: empty train or test set");
  if (train_labels.size() != n_train || test_labels.size() != n_test) {
    throw EvalError("knn_eval: label count differs from feature count");
  }
  if (train_feats.rows() != test_feats.rows()) throw EvalError("knn_eval: feature dimensions differ");
  if (k == 0 || k > n_train) throw EvalError("knn_eval: k must lie in [1, train count]");

  const Matrix train_t = transpose(train_feats);  // one sample per row
  const Matrix test_t = transpose(test_feats);
  const int classes = *std::max_element(train_labels.begin(), train_labels.end()) + 1;

  struct Neighbour {
    double dist;
    int label;
  };
  auto closer = [](const Neighbour& a, const Neighbour& b) {
    return a.dist != b.dist ? a.dist < b.dist : a.label < b.label;
  };

  std::vector<Neighbour> all(n_train);
  std::vector<int> votes(static_cast<std::size_t>(classes));
  std::vector<double> nearest(static_cast<std::size_t>(classes));
  std::size_t correct = 0;
  for (std::size_t q = 0; q < n_test; ++q) {
    auto query = test_t.row(q);
    for (std::size_t i = 0; i < n_train; ++i) {
      auto ref = train_t.row(i);
      double d = 0.0;
      for (std::size_t f = 0; f < query.size(); ++f) d += (query[f] - ref[f]) * (query[f] - ref[f]);
      all[i] = {d, train_labels[i]};
    }
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), closer);
    std::fill(votes.begin(), votes.end(), 0);
    std::fill(nearest.begin(), nearest.end(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < k; ++i) {
      const auto c = static_cast<std::size_t>(all[i].label);
      ++votes[c];
      nearest[c] = std::min(nearest[c], all[i].dist);
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < votes.size(); ++c) {
      if (votes[c] > votes[best] || (votes[c] == votes[best] && nearest[c] < nearest[best])) best = c;
    }
    if (static_cast<int>(best) == test_labels[q]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n_test);
}

double linear_probe(const Matrix& train_feats, std::span<const int> train_labels, const Matrix& eval_feats,
                    std::span<const int> eval_labels, const ProbeConfig& cfg) {
  const std::size_t dim = train_feats.rows();
  const std::size_t n_train = train_feats.cols();
  const std::size_t n_eval = eval_feats.cols();
  if (n_train == 0 || n_eval == 0) throw EvalError("linear_probe: empty train or eval set");
  if (train_labels.size() != n_train || eval_labels.size() != n_eval) {
    throw EvalError("linear_probe: label count differs from feature count");
  }
  if (eval_feats.rows() != dim) throw EvalError("linear_probe: feature dimensions differ");
  const int max_label = std::max(*std::max_element(train_labels.begin(), train_labels.end()),
                                 *std::max_element(eval_labels.begin(), eval_labels.end()));
  const auto classes = static_cast<std::size_t>(max_label + 1);

  // Standardize with training statistics; dimensions without variance become 0.
  const Matrix mean = row_means(train_feats);
  const FeatureStd sd = n_train >= 2 ? feature_std(train_feats) : FeatureStd{std::vector<double>(dim, 0.0), 0.0};
  auto standardize = [&](const Matrix& f) {
    Matrix out(f.cols(), dim);  // one sample per row
    for (std::size_t d = 0; d < dim; ++d) {
      const double inv = sd.per_dim[d] > 1e-12 ? 1.0 / sd.per_dim[d] : 0.0;
      for (std::size_t n = 0; n < f.cols(); ++n) out(n, d) = (f(d, n) - mean(d, 0)) * inv;
    }
    return out;
  };
  const Matrix xs = standardize(train_feats);
  const Matrix xe = standardize(eval_feats);

  Matrix w(classes, dim), vw(classes, dim);
  std::vector<double> bias(classes, 0.0), vb(classes, 0.0);
  std::vector<double> logits(classes), prob(classes);
  Matrix gw(classes, dim);
  std::vector<double> gb(classes);
  std::mt19937_64 rng(cfg.seed);
  const std::size_t batch = std::max<std::size_t>(1, std::min(cfg.batch_size, n_train));

  auto compute_logits = [&](std::span<const double> x) {
    for (std::size_t c = 0; c < classes; ++c) {
      auto wr = w.row(c);
      logits[c] = bias[c] + std::inner_product(wr.begin(), wr.end(), x.begin(), 0.0);
    }
  };

  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n_train; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    for (std::size_t start = 0; start < n_train; start += batch) {
      const std::size_t end = std::min(n_train, start + batch);
      gw.fill(0.0);
      std::fill(gb.begin(), gb.end(), 0.0);
      for (std::size_t s = start; s < end; ++s) {
        auto x = xs.row(order[s]);
        compute_logits(x);
        const double top = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (std::size_t c = 0; c < classes; ++c) z += (prob[c] = std::exp(logits[c] - top));
        for (std::size_t c = 0; c < classes; ++c) {
          const double g = prob[c] / z - (static_cast<int>(c) == train_labels[order[s]] ? 1.0 : 0.0);
          gb[c] += g;
          auto gr = gw.row(c);
          for (std::size_t d = 0; d < dim; ++d) gr[d] += g * x[d];
        }
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t d = 0; d < dim; ++d) {
          vw(c, d) = cfg.momentum * vw(c, d) + gw(c, d) * inv + cfg.weight_decay * w(c, d);
          w(c, d) -= cfg.lr * vw(c, d);
        }
        vb[c] = cfg.momentum * vb[c] + gb[c] * inv;
        bias[c] -= cfg.lr * vb[c];
      }
    }
  }

  std::size_t correct = 0;
  for (std::size_t n = 0; n < n_eval; ++n) {
    compute_logits(xe.row(n));
    const auto pred = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (pred == eval_labels[n]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n_eval);
}

CollapseReport collapse_report(const Matrix& z, double loss, double var_floor, double rank_tol) {
  CollapseReport report;
  FeatureStd sd = feature_std(z);
  report.per_dim_std = std::move(sd.per_dim);
  report.mean_std = sd.mean;
  try {
    const CorrelationStrength c = avg_corr(z, var_floor);
    report.avg_corr = c.avg_corr;
    report.excluded_dims = c.excluded_dims;
  } catch (const InsufficientVariance&) {
    report.excluded_dims = static_cast<std::size_t>(
        std::count_if(report.per_dim_std.begin(), report.per_dim_std.end(),
                      [&](double s) { return s * s < var_floor; }));
  }
  report.effective_rank = effective_rank(z, rank_tol);
  report.loss = loss;
  return report;
}

std::string metrics_csv_header() {
  return "epoch,loss,mean_std,avg_corr,effective_rank,excluded_dims,knn_acc";
}

std::string metrics_csv_row(std::size_t epoch, const CollapseReport& r, double knn_acc) {
  return std::to_string(epoch) + "," + fmt(r.loss) + "," + fmt(r.mean_std) + "," +
         fmt(r.avg_corr.value_or(std::nan(""))) + "," + std::to_string(r.effective_rank) + "," +
         std::to_string(r.excluded_dims) + "," + fmt(knn_acc);
}

}  // namespace decorr
