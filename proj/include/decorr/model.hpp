#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "decorr/layers.hpp"
#include "decorr/linalg.hpp"

namespace decorr {

struct LinearLayer {
  Matrix weight;  // out x in
  Matrix bias;    // out x 1
  Matrix dweight, dbias;
  Matrix vweight, vbias;  // momentum buffers
};

struct ReluLayer {
  std::size_t dim = 0;
};

struct BatchNormLayer {
  BNConfig config;
  BNState state;
  Matrix dgamma, dbeta;
  Matrix vgamma, vbeta;
};

/// DBN, or Shuffled-DBN when `config.shuffle` is set. The layer owns the
/// generator seeded from `config.rng_seed`; `permutation` is the one applied
/// by train-mode forwards until the next resample, and eval mode reuses it.
struct WhiteningLayer {
  DBNConfig config;
  DBNRunning running;
  Permutation permutation;
  std::mt19937_64 rng;
};

using Layer = std::variant<LinearLayer, ReluLayer, BatchNormLayer, WhiteningLayer>;
using LayerCache = std::variant<LinearCache, ReluCache, BNCache, DBNCache>;

/// Non-owning view of one parameter tensor with its gradient and velocity.
struct ParamRef {
  Matrix* value;
  Matrix* grad;
  Matrix* velocity;
};

/// Normalization appended to the projector output.
struct NormSpec {
  enum class Kind { none, bn, dbn, shuffled_dbn };
  Kind kind = Kind::none;
  BNConfig bn;
  DBNConfig dbn;
};

std::string to_string(NormSpec::Kind kind);
NormSpec::Kind norm_kind_from_string(const std::string& name);

class Network {
 public:
  explicit Network(std::size_t input_dim = 0) : input_dim_(input_dim), output_dim_(input_dim) {}

  /// input -> [Linear -> BN -> ReLU] per hidden size -> Linear -> final norm.
  /// Weights are U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
  static Network mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                     std::size_t output_dim, const BNConfig& hidden_bn, const NormSpec& final_norm,
                     std::uint64_t seed);

  void add_linear(std::size_t out, std::mt19937_64& rng);
  void add_relu();
  void add_batch_norm(const BNConfig& cfg);
  void add_whitening(const DBNConfig& cfg);

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t output_dim() const noexcept { return output_dim_; }
  Mode mode() const noexcept { return mode_; }
  void set_mode(Mode mode) noexcept { mode_ = mode; }

  std::vector<Layer>& layers() noexcept { return layers_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  std::vector<ParamRef> parameters();
  std::size_t parameter_count() const;
  void zero_grad();

  /// Draws the next permutation for every shuffled whitening layer.
  void resample_permutations();

  /// A copy holding only the first `count` layers.
  Network prefix(std::size_t count) const;

 private:
  std::size_t input_dim_;
  std::size_t output_dim_;
  Mode mode_ = Mode::train;
  std::vector<Layer> layers_;
};

struct NetworkForward {
  Matrix output;
  std::vector<LayerCache> caches;
};

/// Runs every layer in order. Train mode updates running statistics.
NetworkForward forward(Network& net, const Matrix& x);

/// Reverse-mode pass; parameter gradients are accumulated, not overwritten,
/// so both views of a positive pair can share one set of gradients.
Matrix backward(Network& net, const std::vector<LayerCache>& caches, const Matrix& dy);

/// v <- momentum v + (grad + weight_decay param); param <- param - lr v; grad <- 0.
void sgd_step(Network& net, double lr, double momentum, double weight_decay);

struct TrainConfig {
  double base_lr = 0.05;
  std::size_t batch_size = 256;
  std::size_t epochs = 50;
  std::size_t warmup_epochs = 5;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;

  /// base_lr * batch_size / 256.
  double effective_lr() const noexcept;
  void validate() const;
};

/// Linear warmup from 0 to the effective rate, then half-cosine decay to 0.
double lr_at(std::size_t step, const TrainConfig& cfg, std::size_t steps_per_epoch);

}  // namespace decorr
