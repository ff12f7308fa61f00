#include <cmath>
#include <filesystem>
#include <random>

#include "decorr/checkpoint.hpp"
#include "decorr/errors.hpp"
#include "decorr/model.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace decorr;
using decorr::testing::inner;
using decorr::testing::max_abs_diff;
using decorr::testing::random_matrix;
using decorr::testing::relative_error;

namespace {

Network small_net(NormSpec::Kind tail, std::uint64_t seed = 3) {
  NormSpec spec;
  spec.kind = tail;
  spec.bn = BNConfig{0.0, false, 0.9};
  spec.dbn = DBNConfig{2, kDefaultEigFloor, false, seed + 100};
  return Network::mlp(5, {6, 6}, 4, BNConfig{1e-5, true, 0.9}, spec, seed);
}

// Central differences of <dy, net(x)> with respect to parameter `p`.
Matrix numeric_param_gradient(const Network& base, std::size_t p, const Matrix& x, const Matrix& dy) {
  Network probe = base;
  Matrix& value = *probe.parameters()[p].value;
  Matrix grad(value.rows(), value.cols());
  const double h = 1e-5;
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double orig = value.data()[i];
    value.data()[i] = orig + h;
    const double up = inner(dy, forward(probe, x).output);
    value.data()[i] = orig - h;
    const double down = inner(dy, forward(probe, x).output);
    value.data()[i] = orig;
    grad.data()[i] = (up - down) / (2 * h);
  }
  return grad;
}

}  // namespace

TEST_CASE("forward reductions") {
  std::mt19937_64 rng(1);
  const Matrix x = random_matrix(3, 4, rng);
  Network empty(3);
  CHECK(forward(empty, x).output == x);

  Network single(3);
  single.add_linear(3, rng);
  auto& lin = std::get<LinearLayer>(single.layers()[0]);
  lin.weight = Matrix::identity(3);
  CHECK(forward(single, x).output == x);

  Network two(3);
  two.add_linear(5, rng);
  two.add_relu();
  const auto& l0 = std::get<LinearLayer>(two.layers()[0]);
  const Matrix manual = relu_forward(linear_forward(x, l0.weight, l0.bias).output).output;
  CHECK(forward(two, x).output == manual);

  CHECK_THROWS_AS(forward(two, random_matrix(4, 4, rng)), DimensionError);
}

TEST_CASE("mlp layout and initialization") {
  const Network net = small_net(NormSpec::Kind::dbn);
  REQUIRE(net.layers().size() == 8);
  CHECK(std::holds_alternative<LinearLayer>(net.layers()[0]));
  CHECK(std::holds_alternative<BatchNormLayer>(net.layers()[1]));
  CHECK(std::holds_alternative<ReluLayer>(net.layers()[2]));
  CHECK(std::holds_alternative<WhiteningLayer>(net.layers()[7]));
  CHECK(net.output_dim() == 4);
  const auto& first = std::get<LinearLayer>(net.layers()[0]);
  const double bound = 1.0 / std::sqrt(5.0);
  for (double w : first.weight.data()) CHECK(std::abs(w) <= bound);
  CHECK(first.bias == Matrix(6, 1));
  CHECK(small_net(NormSpec::Kind::dbn).layers().size() == net.layers().size());

  NormSpec bad;
  bad.kind = NormSpec::Kind::dbn;
  bad.dbn.group_size = 3;
  CHECK_THROWS_AS(Network::mlp(5, {6}, 4, BNConfig{}, bad, 1), DimensionError);
}

TEST_CASE("backward basics") {
  std::mt19937_64 rng(2);
  Network net = small_net(NormSpec::Kind::bn);
  const Matrix x = random_matrix(5, 10, rng);
  const auto f = forward(net, x);
  net.zero_grad();
  backward(net, f.caches, Matrix(4, 10));
  for (ParamRef p : net.parameters()) CHECK(decorr::testing::max_abs(*p.grad) == 0.0);

  Network one(5);
  one.add_linear(3, rng);
  const auto f1 = forward(one, x);
  const Matrix dy = random_matrix(3, 10, rng);
  const Matrix dx = backward(one, f1.caches, dy);
  const auto& l = std::get<LinearLayer>(one.layers()[0]);
  const auto expected = linear_backward(std::get<LinearCache>(f1.caches[0]), l.weight, dy);
  CHECK(dx == expected.dx);
  CHECK(l.dweight == expected.dweight);
  CHECK(l.dbias == expected.dbias);

  std::vector<LayerCache> wrong = f.caches;
  wrong.pop_back();
  CHECK_THROWS_AS(backward(net, wrong, Matrix(4, 10)), CacheError);
  std::vector<LayerCache> swapped = f.caches;
  std::swap(swapped[0], swapped[1]);
  CHECK_THROWS_AS(backward(net, swapped, Matrix(4, 10)), CacheError);
}

TEST_CASE("gradients accumulate across backward calls") {
  std::mt19937_64 rng(4);
  Network net = small_net(NormSpec::Kind::none);
  const Matrix x = random_matrix(5, 8, rng);
  const Matrix dy = random_matrix(4, 8, rng);
  net.zero_grad();
  const auto f = forward(net, x);
  backward(net, f.caches, dy);
  const Matrix once = *net.parameters()[0].grad;
  backward(net, f.caches, dy);
  CHECK(max_abs_diff(*net.parameters()[0].grad, scale(once, 2.0)) < 1e-12);
}

TEST_CASE("end-to-end gradient check for every normalization tail") {
  for (auto tail : {NormSpec::Kind::none, NormSpec::Kind::bn, NormSpec::Kind::dbn, NormSpec::Kind::shuffled_dbn}) {
    CAPTURE(to_string(tail));
    std::mt19937_64 rng(10 + static_cast<int>(tail));
    for (int trial = 0; trial < 3; ++trial) {
      Network net = small_net(tail, 20 + trial);
      net.resample_permutations();
      const Matrix x = random_matrix(5, 12, rng);
      const Matrix dy = random_matrix(4, 12, rng);
      net.zero_grad();
      const auto f = forward(net, x);
      const Matrix dx = backward(net, f.caches, dy);

      Network probe = net;
      const Matrix numeric_dx = decorr::testing::numeric_vjp(
          [&](const Matrix& p) { return forward(probe, p).output; }, x, dy);
      CHECK(relative_error(dx, numeric_dx) < 1e-5);

      const auto params = net.parameters();
      for (std::size_t p = 0; p < params.size(); ++p) {
        CAPTURE(p);
        const Matrix numeric = numeric_param_gradient(net, p, x, dy);
        if (decorr::testing::max_abs(numeric) < 1e-8) {
          // A bias feeding a BN layer is cancelled by centering; its exact gradient
          // is zero, where a relative error is meaningless.
          CHECK(decorr::testing::max_abs(*params[p].grad) < 1e-12);
        } else {
          CHECK(relative_error(*params[p].grad, numeric) < 1e-5);
        }
      }
    }
  }
}

TEST_CASE("eval mode is repeatable") {
  std::mt19937_64 rng(5);
  Network net = small_net(NormSpec::Kind::shuffled_dbn);
  for (int i = 0; i < 3; ++i) {
    net.resample_permutations();
    forward(net, random_matrix(5, 16, rng));
  }
  net.set_mode(Mode::eval);
  const Matrix x = random_matrix(5, 7, rng);
  CHECK(forward(net, x).output == forward(net, x).output);
}

TEST_CASE("sgd step") {
  std::mt19937_64 rng(6);
  Network net(1);
  net.add_linear(1, rng);
  auto& lin = std::get<LinearLayer>(net.layers()[0]);

  lin.weight(0, 0) = 1.0;
  sgd_step(net, 0.1, 0.9, 0.0);
  CHECK(lin.weight(0, 0) == 1.0);

  // v1 = 0.5 + 0.1 * 1 = 0.6, p1 = 0.94; v2 = 0.9 * 0.6 + 0.5 + 0.1 * 0.94 = 1.134, p2 = 0.8266.
  lin.dweight(0, 0) = 0.5;
  sgd_step(net, 0.1, 0.9, 0.1);
  CHECK(lin.weight(0, 0) == doctest::Approx(0.94).epsilon(1e-14));
  CHECK(lin.dweight(0, 0) == 0.0);
  lin.dweight(0, 0) = 0.5;
  sgd_step(net, 0.1, 0.9, 0.1);
  CHECK(lin.weight(0, 0) == doctest::Approx(0.8266).epsilon(1e-14));

  Network decay(1);
  decay.add_linear(1, rng);
  auto& d = std::get<LinearLayer>(decay.layers()[0]);
  d.weight(0, 0) = -2.0;
  double previous = 2.0;
  for (int i = 0; i < 5; ++i) {
    sgd_step(decay, 0.1, 0.9, 0.05);
    CHECK(std::abs(d.weight(0, 0)) < previous);
    previous = std::abs(d.weight(0, 0));
  }
}

TEST_CASE("sgd without momentum is gradient descent on a quadratic") {
  std::mt19937_64 rng(7);
  Network net(1);
  net.add_linear(1, rng);
  auto& lin = std::get<LinearLayer>(net.layers()[0]);
  const double target = 1.5, lr = 0.2, w0 = -3.0;
  lin.weight(0, 0) = w0;
  for (int t = 1; t <= 25; ++t) {
    lin.dweight(0, 0) = lin.weight(0, 0) - target;  // f(w) = (w - c)^2 / 2
    sgd_step(net, lr, 0.0, 0.0);
    CHECK(lin.weight(0, 0) == doctest::Approx(target + std::pow(1 - lr, t) * (w0 - target)).epsilon(1e-12));
  }
}

TEST_CASE("learning-rate schedule") {
  TrainConfig cfg;
  cfg.base_lr = 0.05;
  cfg.batch_size = 512;
  cfg.epochs = 100;
  cfg.warmup_epochs = 5;
  const std::size_t spe = 10;
  CHECK(cfg.effective_lr() == doctest::Approx(0.1));
  CHECK(lr_at(0, cfg, spe) == 0.0);
  CHECK(lr_at(25, cfg, spe) == doctest::Approx(0.05));
  CHECK(lr_at(50, cfg, spe) == doctest::Approx(0.1).epsilon(1e-15));
  // Continuity at the junction: the last warmup step approaches the peak linearly.
  CHECK(std::abs(lr_at(50, cfg, spe) - cfg.effective_lr()) < 1e-12);
  const double left = cfg.effective_lr() * 49.999999999999 / 50.0;
  CHECK(std::abs(left - lr_at(50, cfg, spe)) < 1e-12);
  CHECK(lr_at(999, cfg, spe) < cfg.effective_lr() * 1e-3);
  CHECK(lr_at(999, cfg, spe) > 0.0);
  for (std::size_t s = 51; s < 1000; ++s) CHECK(lr_at(s, cfg, spe) < lr_at(s - 1, cfg, spe));

  TrainConfig bad = cfg;
  bad.warmup_epochs = 101;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("checkpoint round trip is bit-faithful") {
  std::mt19937_64 rng(8);
  Network net = small_net(NormSpec::Kind::shuffled_dbn);
  for (int i = 0; i < 3; ++i) {
    net.resample_permutations();
    const auto f = forward(net, random_matrix(5, 16, rng));
    backward(net, f.caches, random_matrix(4, 16, rng));
    sgd_step(net, 0.05, 0.9, 1e-4);
  }
  const auto path = std::filesystem::temp_directory_path() / "decorr_test_checkpoint.json";
  save_checkpoint(path, net, {{"epoch", 3}});
  Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.metadata["epoch"] == 3);

  auto a = net.parameters();
  auto b = loaded.network.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(*a[i].value == *b[i].value);
    CHECK(*a[i].velocity == *b[i].velocity);
  }
  const auto& wa = std::get<WhiteningLayer>(net.layers().back());
  const auto& wb = std::get<WhiteningLayer>(loaded.network.layers().back());
  CHECK(wa.running.gram == wb.running.gram);
  CHECK(wa.running.mean == wb.running.mean);
  CHECK(wa.permutation == wb.permutation);
  CHECK(wa.rng == wb.rng);

  // Continuing from the checkpoint reproduces the original trajectory.
  const Matrix x = random_matrix(5, 16, rng);
  net.resample_permutations();
  loaded.network.resample_permutations();
  CHECK(forward(net, x).output == forward(loaded.network, x).output);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(load_checkpoint(std::filesystem::temp_directory_path() / "missing_decorr.json"), CheckpointError);
}
