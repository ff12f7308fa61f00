#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "decorr/linalg.hpp"
#include "decorr/model.hpp"

namespace decorr {

enum class ObjectiveKind { squared_error, cosine_similarity };

std::string to_string(ObjectiveKind kind);
ObjectiveKind objective_from_string(const std::string& name);

/// Two augmented views of the same B source samples, column-aligned.
struct PositivePairBatch {
  Matrix view1;  // D_in x B
  Matrix view2;  // D_in x B
  std::vector<std::size_t> source;
};

/// A batch-mean pair function with its gradients for both arguments.
struct PairValue {
  double value = 0.0;
  Matrix dz1;
  Matrix dz2;
};

/// Mean over columns of ||z1_b - z2_b||^2; gradients 2 (z1 - z2) / B and its negation.
PairValue se_loss(const Matrix& z1, const Matrix& z2);

/// Mean over columns of the cosine similarity z1_b . z2_b / (|z1_b| |z2_b|), with
/// the gradient of that similarity. Throws ZeroNormError on a zero column.
PairValue cos_loss(const Matrix& z1, const Matrix& z2);

/// The minimized objective: se_loss as is, or 1 - mean cosine similarity.
PairValue objective(ObjectiveKind kind, const Matrix& z1, const Matrix& z2);

struct SgdParams {
  double lr = 0.0;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

struct StepResult {
  double loss = 0.0;
  bool collapsed = false;
  std::string collapse_reason;
};

/// One step of the two-view framework: encode both views with the shared
/// network, backpropagate the objective through both branches, then update.
/// Shuffled whitening layers draw one permutation per step, shared by both
/// views. A DegenerateVariance or RankDeficient failure during the forward
/// pass, or a zero output column under the cosine objective, is reported as a
/// collapse and leaves the parameters untouched. Gradients are multiplied by
/// `loss_scale`; the returned loss is unscaled.
StepResult train_step(Network& net, const PositivePairBatch& batch, ObjectiveKind kind,
                      const SgdParams& sgd, double loss_scale = 1.0);

}  // namespace decorr
