#include "decorr/ssl.hpp"

#include <cmath>

#include "decorr/errors.hpp"

namespace decorr {

namespace {

void require_pair(const Matrix& z1, const Matrix& z2, const char* op) {
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols()) {
    throw DimensionError(std::string(op) + ": views differ in shape");
  }
  if (z1.cols() == 0) throw DimensionError(std::string(op) + ": empty batch");
}

}  // namespace

std::string to_string(ObjectiveKind kind) {
  return kind == ObjectiveKind::squared_error ? "squared_error" : "cosine";
}

ObjectiveKind objective_from_string(const std::string& name) {
  if (name == "squared_error" || name == "se") return ObjectiveKind::squared_error;
  if (name == "cosine" || name == "cosine_similarity" || name == "cos") {
    return ObjectiveKind::cosine_similarity;
  }
  throw ConfigError("unknown objective '" + name + "'");
}

PairValue se_loss(const Matrix& z1, const Matrix& z2) {
  require_pair(z1, z2, "se_loss");
  const double batch = static_cast<double>(z1.cols());
  PairValue out{0.0, Matrix(z1.rows(), z1.cols()), Matrix(z1.rows(), z1.cols())};
  auto a = z1.data();
  auto b = z2.data();
  auto g1 = out.dz1.data();
  auto g2 = out.dz2.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    out.value += diff * diff;
    g1[i] = 2.0 * diff / batch;
    g2[i] = -g1[i];
  }
  out.value /= batch;
  return out;
}

PairValue cos_loss(const Matrix& z1, const Matrix& z2) {
  require_pair(z1, z2, "cos_loss");
  const std::size_t dim = z1.rows();
  const std::size_t batch = z1.cols();
  PairValue out{0.0, Matrix(dim, batch), Matrix(dim, batch)};
  for (std::size_t b = 0; b < batch; ++b) {
    double n1 = 0.0, n2 = 0.0, dot = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      n1 += z1(d, b) * z1(d, b);
      n2 += z2(d, b) * z2(d, b);
      dot += z1(d, b) * z2(d, b);
    }
    if (n1 == 0.0 || n2 == 0.0) throw ZeroNormError("cos_loss: zero-norm column " + std::to_string(b));
    const double norm1 = std::sqrt(n1);
    const double norm2 = std::sqrt(n2);
    const double cosine = dot / (norm1 * norm2);
    out.value += cosine;
    // d cos / d z1 = z2 / (|z1||z2|) - cos z1 / |z1|^2, symmetric for z2.
    for (std::size_t d = 0; d < dim; ++d) {
      out.dz1(d, b) = (z2(d, b) / (norm1 * norm2) - cosine * z1(d, b) / n1) / static_cast<double>(batch);
      out.dz2(d, b) = (z1(d, b) / (norm1 * norm2) - cosine * z2(d, b) / n2) / static_cast<double>(batch);
    }
  }
  out.value /= static_cast<double>(batch);
  return out;
}

PairValue objective(ObjectiveKind kind, const Matrix& z1, const Matrix& z2) {
  if (kind == ObjectiveKind::squared_error) return se_loss(z1, z2);
  PairValue sim = cos_loss(z1, z2);
  return {1.0 - sim.value, scale(sim.dz1, -1.0), scale(sim.dz2, -1.0)};
}

StepResult train_step(Network& net, const PositivePairBatch& batch, ObjectiveKind kind,
                      const SgdParams& sgd, double loss_scale) {
  net.set_mode(Mode::train);
  net.resample_permutations();
  NetworkForward f1, f2;
  try {
    f1 = forward(net, batch.view1);
    f2 = forward(net, batch.view2);
  } catch (const DegenerateVariance& e) {
    return {0.0, true, e.what()};
  } catch (const RankDeficient& e) {
    return {0.0, true, e.what()};
  }
  PairValue loss;
  try {
    loss = objective(kind, f1.output, f2.output);
  } catch (const ZeroNormError& e) {
    return {0.0, true, e.what()};
  }
  if (loss_scale != 1.0) {
    loss.dz1 = scale(loss.dz1, loss_scale);
    loss.dz2 = scale(loss.dz2, loss_scale);
  }
  net.zero_grad();
  backward(net, f1.caches, loss.dz1);
  backward(net, f2.caches, loss.dz2);
  sgd_step(net, sgd.lr, sgd.momentum, sgd.weight_decay);
  return {loss.value, false, {}};
}

}  // namespace decorr
