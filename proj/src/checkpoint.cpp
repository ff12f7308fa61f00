#include "decorr/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "decorr/errors.hpp"

namespace decorr {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()},
          {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

Matrix matrix_from_json(const json& j) {
  return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

std::mt19937_64 rng_from_state(const std::string& state) {
  std::mt19937_64 rng;
  std::istringstream in(state);
  in >> rng;
  if (!in) throw CheckpointError("checkpoint: malformed generator state");
  return rng;
}

json layer_to_json(const Layer& layer) {
  if (const auto* l = std::get_if<LinearLayer>(&layer)) {
    return {{"type", "linear"},
            {"weight", matrix_to_json(l->weight)},
            {"bias", matrix_to_json(l->bias)},
            {"vweight", matrix_to_json(l->vweight)},
            {"vbias", matrix_to_json(l->vbias)}};
  }
  if (const auto* l = std::get_if<ReluLayer>(&layer)) return {{"type", "relu"}, {"dim", l->dim}};
  if (const auto* l = std::get_if<BatchNormLayer>(&layer)) {
    return {{"type", "bn"},
            {"epsilon", l->config.epsilon},
            {"affine", l->config.affine},
            {"running_momentum", l->config.running_momentum},
            {"gamma", matrix_to_json(l->state.gamma)},
            {"beta", matrix_to_json(l->state.beta)},
            {"running_mean", matrix_to_json(l->state.running_mean)},
            {"running_var", matrix_to_json(l->state.running_var)},
            {"vgamma", matrix_to_json(l->vgamma)},
            {"vbeta", matrix_to_json(l->vbeta)}};
  }
  const auto& w = std::get<WhiteningLayer>(layer);
  return {{"type", "whitening"},
          {"group_size", w.config.group_size},
          {"eig_floor", w.config.eig_floor},
          {"shuffle", w.config.shuffle},
          {"rng_seed", w.config.rng_seed},
          {"running_momentum", w.config.running_momentum},
          {"running_mean", matrix_to_json(w.running.mean)},
          {"running_gram", matrix_to_json(w.running.gram)},
          {"permutation", w.permutation.forward()},
          {"rng_state", rng_state(w.rng)}};
}

}  // namespace

json network_to_json(const Network& net) {
  json layers = json::array();
  for (const Layer& layer : net.layers()) layers.push_back(layer_to_json(layer));
  return {{"input_dim", net.input_dim()},
          {"mode", net.mode() == Mode::train ? "train" : "eval"},
          {"layers", std::move(layers)}};
}

Network network_from_json(const json& j) {
  try {
    Network net(j.at("input_dim").get<std::size_t>());
    std::mt19937_64 scratch(0);
    for (const json& l : j.at("layers")) {
      const std::string type = l.at("type").get<std::string>();
      if (type == "linear") {
        const Matrix weight = matrix_from_json(l.at("weight"));
        if (weight.cols() != net.output_dim()) throw CheckpointError("checkpoint: linear layer shape mismatch");
        net.add_linear(weight.rows(), scratch);
        auto& layer = std::get<LinearLayer>(net.layers().back());
        layer.weight = weight;
        layer.bias = matrix_from_json(l.at("bias"));
        layer.vweight = matrix_from_json(l.at("vweight"));
        layer.vbias = matrix_from_json(l.at("vbias"));
      } else if (type == "relu") {
        net.add_relu();
      } else if (type == "bn") {
        net.add_batch_norm(BNConfig{l.at("epsilon").get<double>(), l.at("affine").get<bool>(),
                                    l.at("running_momentum").get<double>()});
        auto& layer = std::get<BatchNormLayer>(net.layers().back());
        layer.state.gamma = matrix_from_json(l.at("gamma"));
        layer.state.beta = matrix_from_json(l.at("beta"));
        layer.state.running_mean = matrix_from_json(l.at("running_mean"));
        layer.state.running_var = matrix_from_json(l.at("running_var"));
        layer.vgamma = matrix_from_json(l.at("vgamma"));
        layer.vbeta = matrix_from_json(l.at("vbeta"));
      } else if (type == "whitening") {
        DBNConfig cfg;
        cfg.group_size = l.at("group_size").get<std::size_t>();
        cfg.eig_floor = l.at("eig_floor").get<double>();
        cfg.shuffle = l.at("shuffle").get<bool>();
        cfg.rng_seed = l.at("rng_seed").get<std::uint64_t>();
        cfg.running_momentum = l.at("running_momentum").get<double>();
        net.add_whitening(cfg);
        auto& layer = std::get<WhiteningLayer>(net.layers().back());
        layer.running.mean = matrix_from_json(l.at("running_mean"));
        layer.running.gram = matrix_from_json(l.at("running_gram"));
        layer.permutation = Permutation(l.at("permutation").get<std::vector<std::size_t>>());
        layer.rng = rng_from_state(l.at("rng_state").get<std::string>());
      } else {
        throw CheckpointError("checkpoint: unknown layer type '" + type + "'");
      }
    }
    net.set_mode(j.at("mode").get<std::string>() == "eval" ? Mode::eval : Mode::train);
    return net;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  } catch (const DimensionError& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << contents;
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const Network& net, const json& metadata) {
  json j = {{"format", "decorr-checkpoint"},
            {"version", kCheckpointVersion},
            {"network", network_to_json(net)},
            {"metadata", metadata}};
  write_file_atomic(path, j.dump());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "decorr-checkpoint") throw CheckpointError("not a decorr checkpoint: " + path.string());
  if (j.value("version", 0) != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version in " + path.string());
  }
  return {network_from_json(j.at("network")), j.value("metadata", json::object())};
}

}  // namespace decorr
