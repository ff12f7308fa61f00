#include "decorr/model.hpp"

#include <cmath>
#include <numbers>
#include <type_traits>

#include "decorr/errors.hpp"

namespace decorr {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void accumulate(Matrix& into, const Matrix& grad) {
  if (into.rows() != grad.rows() || into.cols() != grad.cols()) {
    into = grad;
    return;
  }
  auto dst = into.data();
  auto src = grad.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

std::string to_string(NormSpec::Kind kind) {
  switch (kind) {
    case NormSpec::Kind::none: return "none";
    case NormSpec::Kind::bn: return "bn";
    case NormSpec::Kind::dbn: return "dbn";
    case NormSpec::Kind::shuffled_dbn: return "shuffled_dbn";
  }
  return "none";
}

NormSpec::Kind norm_kind_from_string(const std::string& name) {
  if (name == "none") return NormSpec::Kind::none;
  if (name == "bn") return NormSpec::Kind::bn;
  if (name == "dbn") return NormSpec::Kind::dbn;
  if (name == "shuffled_dbn") return NormSpec::Kind::shuffled_dbn;
  throw ConfigError("unknown normalization variant '" + name + "'");
}

Network Network::mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                     std::size_t output_dim, const BNConfig& hidden_bn, const NormSpec& final_norm,
                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Network net(input_dim);
  for (std::size_t width : hidden) {
    net.add_linear(width, rng);
    net.add_batch_norm(hidden_bn);
    net.add_relu();
  }
  net.add_linear(output_dim, rng);
  switch (final_norm.kind) {
    case NormSpec::Kind::none: break;
    case NormSpec::Kind::bn: net.add_batch_norm(final_norm.bn); break;
    case NormSpec::Kind::dbn: {
      DBNConfig cfg = final_norm.dbn;
      cfg.shuffle = false;
      net.add_whitening(cfg);
      break;
    }
    case NormSpec::Kind::shuffled_dbn: {
      DBNConfig cfg = final_norm.dbn;
      cfg.shuffle = true;
      net.add_whitening(cfg);
      break;
    }
  }
  return net;
}

void Network::add_linear(std::size_t out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(output_dim_));
  std::uniform_real_distribution<double> dist(-bound, bound);
  LinearLayer layer;
  layer.weight = Matrix(out, output_dim_);
  for (double& v : layer.weight.data()) v = dist(rng);
  layer.bias = Matrix(out, 1);
  layer.dweight = Matrix(out, output_dim_);
  layer.dbias = Matrix(out, 1);
  layer.vweight = Matrix(out, output_dim_);
  layer.vbias = Matrix(out, 1);
  layers_.emplace_back(std::move(layer));
  output_dim_ = out;
}

void Network::add_relu() { layers_.emplace_back(ReluLayer{output_dim_}); }

void Network::add_batch_norm(const BNConfig& cfg) {
  cfg.validate();
  const std::size_t d = output_dim_;
  layers_.emplace_back(BatchNormLayer{cfg, BNState::init(d), Matrix(d, 1), Matrix(d, 1),
                                      Matrix(d, 1), Matrix(d, 1)});
}

void Network::add_whitening(const DBNConfig& cfg) {
  cfg.validate(output_dim_);
  layers_.emplace_back(WhiteningLayer{cfg, DBNRunning::init(output_dim_),
                                      Permutation::identity(output_dim_),
                                      std::mt19937_64(cfg.rng_seed)});
}

std::vector<ParamRef> Network::parameters() {
  std::vector<ParamRef> out;
  for (Layer& layer : layers_) {
    if (auto* lin = std::get_if<LinearLayer>(&layer)) {
      out.push_back({&lin->weight, &lin->dweight, &lin->vweight});
      out.push_back({&lin->bias, &lin->dbias, &lin->vbias});
    } else if (auto* bn = std::get_if<BatchNormLayer>(&layer); bn && bn->config.affine) {
      out.push_back({&bn->state.gamma, &bn->dgamma, &bn->vgamma});
      out.push_back({&bn->state.beta, &bn->dbeta, &bn->vbeta});
    }
  }
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t count = 0;
  for (const Layer& layer : layers_) {
    if (const auto* lin = std::get_if<LinearLayer>(&layer)) {
      count += lin->weight.size() + lin->bias.size();
    } else if (const auto* bn = std::get_if<BatchNormLayer>(&layer); bn && bn->config.affine) {
      count += bn->state.gamma.size() + bn->state.beta.size();
    }
  }
  return count;
}

void Network::zero_grad() {
  for (ParamRef p : parameters()) p.grad->fill(0.0);
}

void Network::resample_permutations() {
  for (Layer& layer : layers_) {
    if (auto* w = std::get_if<WhiteningLayer>(&layer); w && w->config.shuffle) {
      w->permutation = Permutation::random(w->permutation.size(), w->rng);
    }
  }
}

Network Network::prefix(std::size_t count) const {
  if (count > layers_.size()) throw DimensionError("prefix: network has fewer layers");
  Network out(input_dim_);
  out.mode_ = mode_;
  out.layers_.assign(layers_.begin(), layers_.begin() + static_cast<std::ptrdiff_t>(count));
  for (const Layer& layer : out.layers_) {
    if (const auto* lin = std::get_if<LinearLayer>(&layer)) out.output_dim_ = lin->weight.rows();
  }
  return out;
}

NetworkForward forward(Network& net, const Matrix& x) {
  if (x.rows() != net.input_dim()) {
    throw DimensionError("forward: input has " + std::to_string(x.rows()) + " rows, network expects " +
                         std::to_string(net.input_dim()));
  }
  const Mode mode = net.mode();
  NetworkForward result{x, {}};
  result.caches.reserve(net.layers().size());
  for (Layer& layer : net.layers()) {
    std::visit(
        overloaded{
            [&](LinearLayer& l) {
              auto f = linear_forward(result.output, l.weight, l.bias);
              result.output = std::move(f.output);
              result.caches.emplace_back(std::move(f.cache));
            },
            [&](ReluLayer&) {
              auto f = relu_forward(result.output);
              result.output = std::move(f.output);
              result.caches.emplace_back(std::move(f.cache));
            },
            [&](BatchNormLayer& l) {
              auto f = bn_forward(result.output, l.config, mode, l.state);
              result.output = std::move(f.output);
              result.caches.emplace_back(std::move(f.cache));
            },
            [&](WhiteningLayer& l) {
              if (mode == Mode::train) {
                const Matrix mean = row_means(result.output);
                const Matrix batch_gram = gram(center_rows(result.output));
                auto f = dbn_forward(result.output, l.config, l.permutation);
                l.running.update(mean, batch_gram, l.config.running_momentum);
                result.output = std::move(f.output);
                result.caches.emplace_back(std::move(f.cache));
              } else {
                auto f = dbn_eval_forward(result.output, l.running, l.config, l.permutation);
                result.output = std::move(f.output);
                result.caches.emplace_back(std::move(f.cache));
              }
            },
        },
        layer);
  }
  return result;
}

Matrix backward(Network& net, const std::vector<LayerCache>& caches, const Matrix& dy) {
  auto& layers = net.layers();
  if (caches.size() != layers.size()) {
    throw CacheError("backward: " + std::to_string(caches.size()) + " caches for " +
                     std::to_string(layers.size()) + " layers");
  }
  if (dy.rows() != net.output_dim()) throw DimensionError("backward: upstream gradient has wrong row count");

  Matrix grad = dy;
  for (std::size_t i = layers.size(); i-- > 0;) {
    const LayerCache& cache = caches[i];
    std::visit(
        overloaded{
            [&](LinearLayer& l) {
              const auto* c = std::get_if<LinearCache>(&cache);
              if (!c) throw CacheError("backward: layer " + std::to_string(i) + " expected a linear cache");
              auto g = linear_backward(*c, l.weight, grad);
              accumulate(l.dweight, g.dweight);
              accumulate(l.dbias, g.dbias);
              grad = std::move(g.dx);
            },
            [&](ReluLayer&) {
              const auto* c = std::get_if<ReluCache>(&cache);
              if (!c) throw CacheError("backward: layer " + std::to_string(i) + " expected a relu cache");
              grad = relu_backward(*c, grad);
            },
            [&](BatchNormLayer& l) {
              const auto* c = std::get_if<BNCache>(&cache);
              if (!c) throw CacheError("backward: layer " + std::to_string(i) + " expected a bn cache");
              auto g = bn_backward(*c, grad);
              if (l.config.affine) {
                accumulate(l.dgamma, g.dgamma);
                accumulate(l.dbeta, g.dbeta);
              }
              grad = std::move(g.dx);
            },
            [&](WhiteningLayer&) {
              const auto* c = std::get_if<DBNCache>(&cache);
              if (!c) throw CacheError("backward: layer " + std::to_string(i) + " expected a dbn cache");
              grad = dbn_backward(*c, grad);
            },
        },
        layers[i]);
  }
  return grad;
}

void sgd_step(Network& net, double lr, double momentum, double weight_decay) {
  for (ParamRef p : net.parameters()) {
    auto value = p.value->data();
    auto grad = p.grad->data();
    auto vel = p.velocity->data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      vel[i] = momentum * vel[i] + (grad[i] + weight_decay * value[i]);
      value[i] -= lr * vel[i];
      grad[i] = 0.0;
    }
  }
}

double TrainConfig::effective_lr() const noexcept {
  return base_lr * static_cast<double>(batch_size) / 256.0;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (warmup_epochs > epochs) throw ConfigError("train.warmup_epochs exceeds train.epochs");
  if (!(base_lr >= 0.0)) throw ConfigError("train.base_lr must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be non-negative");
}

double lr_at(std::size_t step, const TrainConfig& cfg, std::size_t steps_per_epoch) {
  const double peak = cfg.effective_lr();
  const std::size_t warmup = cfg.warmup_epochs * steps_per_epoch;
  const std::size_t total = cfg.epochs * steps_per_epoch;
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (total <= warmup) return peak;
  const double t = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(t, 1.0)));
}

}  // namespace decorr
