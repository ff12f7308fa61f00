#include "decorr/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "decorr/checkpoint.hpp"
#include "decorr/errors.hpp"

namespace decorr {

namespace {

// ------------------------------------------------------- value conversion

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  }
  return v;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "off" || text == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    const auto last = item.find_last_not_of(" \t");
    if (first != std::string::npos) out.push_back(item.substr(first, last - first + 1));
  }
  return out;
}

template <class T>
std::string join_list(const std::vector<T>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_same_v<T, std::filesystem::path>) {
      out += items[i].string();
    } else {
      out += std::to_string(items[i]);
    }
  }
  return out;
}

// Every configuration key with its reader and writer.
struct Field {
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

Field real(const std::string& key, double& v) {
  return {key, [&v, key](const std::string& t) { v = parse_double(key, t); }, [&v] { return format_double(v); }};
}

Field count(const std::string& key, std::size_t& v) {
  return {key, [&v, key](const std::string& t) { v = static_cast<std::size_t>(parse_unsigned(key, t)); },
          [&v] { return std::to_string(v); }};
}

Field flag(const std::string& key, bool& v) {
  return {key, [&v, key](const std::string& t) { v = parse_bool(key, t); },
          [&v] { return std::string(v ? "true" : "false"); }};
}

Field text(const std::string& key, std::string& v) {
  return {key, [&v](const std::string& t) { v = t; }, [&v] { return v; }};
}

Field paths(const std::string& key, std::vector<std::filesystem::path>& v) {
  return {key,
          [&v](const std::string& t) {
            v.clear();
            for (const auto& item : split_list(t)) v.emplace_back(item);
          },
          [&v] { return join_list(v); }};
}

std::vector<Field> fields(ExperimentConfig& c) {
  std::vector<Field> f;
  f.push_back({"seed", [&c](const std::string& t) { c.seed = parse_unsigned("seed", t); },
               [&c] { return std::to_string(c.seed); }});
  f.push_back({"output.dir", [&c](const std::string& t) { c.out_dir = t; }, [&c] { return c.out_dir.string(); }});

  f.push_back(text("data.source", c.data.source));
  f.push_back({"data.classes",
               [&c](const std::string& t) { c.data.classes = static_cast<int>(parse_unsigned("data.classes", t)); },
               [&c] { return std::to_string(c.data.classes); }});
  f.push_back(count("data.per_class", c.data.per_class));
  f.push_back(count("data.test_per_class", c.data.test_per_class));
  f.push_back(count("data.dim", c.data.dim));
  f.push_back(real("data.separation", c.data.separation));
  f.push_back(real("data.blob_std", c.data.blob_std));
  f.push_back(paths("data.train_files", c.data.train_files));
  f.push_back(paths("data.test_files", c.data.test_files));
  f.push_back(count("data.limit", c.data.limit));

  f.push_back({"augment.kind",
               [&c](const std::string& t) {
                 if (t == "vector") c.augment.kind = AugmentationPolicy::Kind::vector;
                 else if (t == "image") c.augment.kind = AugmentationPolicy::Kind::image;
                 else throw ConfigError("augment.kind: expected vector or image, got '" + t + "'");
               },
               [&c] { return std::string(c.augment.kind == AugmentationPolicy::Kind::image ? "image" : "vector"); }});
  f.push_back(real("augment.scale_min", c.augment.scale_min));
  f.push_back(real("augment.scale_max", c.augment.scale_max));
  f.push_back(real("augment.dropout_p", c.augment.dropout_p));
  f.push_back(real("augment.noise_std", c.augment.noise_std));
  f.push_back(real("augment.crop_min", c.augment.crop_min));
  f.push_back(real("augment.crop_max", c.augment.crop_max));
  f.push_back(real("augment.crop_ratio_min", c.augment.crop_ratio_min));
  f.push_back(real("augment.crop_ratio_max", c.augment.crop_ratio_max));
  f.push_back(real("augment.flip_p", c.augment.flip_p));
  f.push_back(real("augment.color_p", c.augment.color_p));
  f.push_back(real("augment.color_strength", c.augment.color_strength));
  f.push_back(real("augment.gray_p", c.augment.gray_p));
  f.push_back(real("augment.blur_p", c.augment.blur_p));
  f.push_back(real("augment.blur_sigma_min", c.augment.blur_sigma_min));
  f.push_back(real("augment.blur_sigma_max", c.augment.blur_sigma_max));

  f.push_back({"model.hidden",
               [&c](const std::string& t) {
                 c.model.hidden.clear();
                 for (const auto& item : split_list(t)) {
                   c.model.hidden.push_back(static_cast<std::size_t>(parse_unsigned("model.hidden", item)));
                 }
               },
               [&c] { return join_list(c.model.hidden); }});
  f.push_back(count("model.output_dim", c.model.output_dim));
  f.push_back(real("model.hidden_epsilon", c.model.hidden_epsilon));
  f.push_back(flag("model.hidden_affine", c.model.hidden_affine));
  f.push_back(text("model.norm", c.model.norm));
  f.push_back(real("model.epsilon", c.model.epsilon));
  f.push_back(flag("model.affine", c.model.affine));
  f.push_back(count("model.group_size", c.model.group_size));
  f.push_back(real("model.eig_floor", c.model.eig_floor));

  f.push_back({"train.objective", [&c](const std::string& t) { c.objective = objective_from_string(t); },
               [&c] { return to_string(c.objective); }});
  f.push_back(real("train.base_lr", c.train.base_lr));
  f.push_back(count("train.batch_size", c.train.batch_size));
  f.push_back(count("train.epochs", c.train.epochs));
  f.push_back(count("train.warmup_epochs", c.train.warmup_epochs));
  f.push_back(real("train.momentum", c.train.momentum));
  f.push_back(real("train.weight_decay", c.train.weight_decay));
  f.push_back({"train.loss_scale",
               [&c](const std::string& t) {
                 if (t == "auto") c.loss_scale.reset();
                 else c.loss_scale = parse_double("train.loss_scale", t);
               },
               [&c] { return c.loss_scale ? format_double(*c.loss_scale) : std::string("auto"); }});

  f.push_back(count("diag.cadence", c.diag.cadence));
  f.push_back(count("diag.batch", c.diag.batch));
  f.push_back(count("diag.knn_k", c.diag.knn_k));
  f.push_back(text("diag.features", c.diag.features));
  f.push_back(real("diag.var_floor", c.diag.var_floor));
  f.push_back(real("diag.rank_tol", c.diag.rank_tol));
  return f;
}

// ------------------------------------------------------------- evaluation

Matrix eval_output(const Network& net, const Matrix& x) {
  Network copy = net;
  copy.set_mode(Mode::eval);
  return forward(copy, x).output;
}

Matrix all_columns(const Dataset& ds) {
  return transpose(ds.samples);
}

CollapseReport nan_report(std::size_t dim, double loss) {
  CollapseReport r;
  r.per_dim_std.assign(dim, std::nan(""));
  r.mean_std = std::nan("");
  r.loss = loss;
  return r;
}

std::string scatter_csv(const Matrix& projection, const std::vector<int>& labels) {
  std::string out = "x,y,label\n";
  for (std::size_t b = 0; b < projection.cols(); ++b) {
    out += format_double(projection(0, b)) + "," + format_double(projection(1, b)) + "," +
           std::to_string(labels[b]) + "\n";
  }
  return out;
}

}  // namespace

// ----------------------------------------------------------- config files

ConfigMap read_config_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  ConfigMap map;
  if (path.extension() == ".json") {
    // A run's final_report.json carries the resolved configuration.
    std::ifstream in(path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
    const nlohmann::json& cfg = j.contains("config") ? j["config"] : j;
    if (!cfg.is_object()) throw ConfigError(path.string() + ": no config object");
    for (const auto& [key, value] : cfg.items()) {
      map[key] = value.is_string() ? value.get<std::string>() : value.dump();
    }
    return map;
  }
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      map[name] = node.data();
      continue;
    }
    for (const auto& [key, leaf] : node) map[name + "." + key] = leaf.data();
  }
  return map;
}

void apply_override(ConfigMap& map, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  map[assignment.substr(0, eq)] = assignment.substr(eq + 1);
}

ExperimentConfig ExperimentConfig::from_map(const ConfigMap& map) {
  ExperimentConfig cfg;
  auto table = fields(cfg);
  for (const auto& [key, value] : map) {
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw ConfigError("unknown configuration key '" + key + "'");
    it->set(value);
  }
  cfg.train.seed = cfg.seed;
  return cfg;
}

double ExperimentConfig::resolved_loss_scale() const {
  if (loss_scale) return *loss_scale;
  const bool whitening = model.norm == "dbn" || model.norm == "shuffled_dbn" || model.norm == "zca";
  return whitening && objective == ObjectiveKind::squared_error ? static_cast<double>(train.batch_size) : 1.0;
}

ConfigMap ExperimentConfig::to_map() const {
  ExperimentConfig copy = *this;
  ConfigMap map;
  for (const Field& f : fields(copy)) map[f.key] = f.get();
  return map;
}

void ExperimentConfig::validate() const {
  if (data.source == "synthetic") {
    if (data.classes < 1 || data.per_class == 0 || data.dim == 0) {
      throw ConfigError("data: classes, per_class and dim must be positive");
    }
    if (data.test_per_class >= data.per_class) throw ConfigError("data.test_per_class must be below per_class");
    if (!(data.separation >= 0.0) || !(data.blob_std > 0.0)) {
      throw ConfigError("data: separation must be >= 0 and blob_std > 0");
    }
  } else if (data.source == "cifar10") {
    if (data.train_files.empty() || data.test_files.empty()) {
      throw ConfigError("data: cifar10 needs train_files and test_files");
    }
    for (const auto& list : {data.train_files, data.test_files}) {
      for (const auto& p : list) {
        if (!std::filesystem::exists(p)) throw ConfigError("data: file not found: " + p.string());
      }
    }
  } else {
    throw ConfigError("data.source: expected synthetic or cifar10, got '" + data.source + "'");
  }
  augment.validate();
  if (augment.kind == AugmentationPolicy::Kind::image && data.source != "cifar10") {
    throw ConfigError("augment.kind = image needs cifar10 data");
  }

  if (model.output_dim == 0) throw ConfigError("model.output_dim must be positive");
  for (std::size_t h : model.hidden) {
    if (h == 0) throw ConfigError("model.hidden widths must be positive");
  }
  if (!(model.epsilon >= 0.0) || !(model.hidden_epsilon >= 0.0)) throw ConfigError("model: epsilon must be >= 0");
  if (!(model.eig_floor >= 0.0 && model.eig_floor < 1.0)) throw ConfigError("model.eig_floor must lie in [0, 1)");
  static const std::vector<std::string> norms = {"none", "bn", "dbn", "shuffled_dbn", "zca"};
  if (std::find(norms.begin(), norms.end(), model.norm) == norms.end()) {
    throw ConfigError("model.norm: unknown variant '" + model.norm + "'");
  }
  const bool whitening = model.norm == "dbn" || model.norm == "shuffled_dbn" || model.norm == "zca";
  const std::size_t group = model.norm == "zca" ? model.output_dim : model.group_size;
  if (whitening) {
    if (group == 0 || model.output_dim % group != 0) {
      throw ConfigError("model.group_size " + std::to_string(group) + " does not divide output_dim " +
                        std::to_string(model.output_dim));
    }
    if (train.batch_size < group + 1) {
      throw ConfigError("train.batch_size must be at least group_size + 1 to whiten a group");
    }
  }
  if (train.batch_size < 2) throw ConfigError("train.batch_size must be at least 2");
  train.validate();

  if (loss_scale && !(*loss_scale > 0.0)) throw ConfigError("train.loss_scale must be positive or auto");
  if (diag.cadence == 0) throw ConfigError("diag.cadence must be positive");
  if (diag.batch < 2) throw ConfigError("diag.batch must be at least 2");
  if (diag.knn_k == 0) throw ConfigError("diag.knn_k must be positive");
  if (diag.features != "representation" && diag.features != "projection") {
    throw ConfigError("diag.features: expected representation or projection");
  }
  if (out_dir.empty()) throw ConfigError("output.dir must be set");
}

// ----------------------------------------------------------------- pieces

std::uint64_t derive_seed(std::uint64_t seed, const std::string& stream) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char ch : stream) h = (h ^ ch) * 1099511628211ULL;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

DataSplit load_data(const ExperimentConfig& cfg) {
  DataSplit split;
  if (cfg.data.source == "synthetic") {
    const Dataset all = make_synthetic_clusters(cfg.data.classes, cfg.data.per_class, cfg.data.dim,
                                                cfg.data.separation, derive_seed(cfg.seed, "data"),
                                                cfg.data.blob_std);
    auto [train, test] = split_per_class(all, cfg.data.test_per_class);
    split = {std::move(train), std::move(test)};
  } else {
    split.train = load_cifar10_binary(cfg.data.train_files);
    split.test = load_cifar10_binary(cfg.data.test_files);
  }
  if (cfg.data.limit > 0 && cfg.data.limit < split.train.size()) {
    Dataset cut{Matrix(cfg.data.limit, split.train.dim()), {}, split.train.class_count};
    for (std::size_t n = 0; n < cfg.data.limit; ++n) {
      std::copy(split.train.samples.row(n).begin(), split.train.samples.row(n).end(), cut.samples.row(n).begin());
      cut.labels.push_back(split.train.labels[n]);
    }
    split.train = std::move(cut);
  }
  split.train.validate();
  split.test.validate();
  return split;
}

Network build_network(const ExperimentConfig& cfg, std::size_t input_dim) {
  const ModelSpec& m = cfg.model;
  NormSpec spec;
  spec.bn = BNConfig{m.epsilon, m.affine, 0.9};
  spec.dbn = DBNConfig{m.group_size, m.eig_floor, false, derive_seed(cfg.seed, "permutation")};
  if (m.norm == "zca") {
    spec.kind = NormSpec::Kind::dbn;
    spec.dbn.group_size = m.output_dim;
  } else {
    spec.kind = norm_kind_from_string(m.norm);
  }
  return Network::mlp(input_dim, m.hidden, m.output_dim, BNConfig{m.hidden_epsilon, m.hidden_affine, 0.9}, spec,
                      derive_seed(cfg.seed, "init"));
}

Matrix extract_features(const Network& net, const Matrix& x, const std::string& tap) {
  if (tap == "projection") return eval_output(net, x);
  if (tap != "representation") throw ConfigError("unknown feature tap '" + tap + "'");
  const auto& layers = net.layers();
  std::size_t end = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (std::holds_alternative<ReluLayer>(layers[i])) end = i + 1;
  }
  if (end == 0) return x;
  return eval_output(net.prefix(end), x);
}

DiagnosticProbe make_diagnostic_probe(const ExperimentConfig& cfg, const Dataset& train) {
  std::mt19937_64 rng(derive_seed(cfg.seed, "diagnostics"));
  std::vector<std::size_t> idx = shuffled_indices(train.size(), rng);
  idx.resize(std::min(cfg.diag.batch, train.size()));
  DiagnosticProbe probe;
  probe.inputs = train.columns(idx);
  for (std::size_t i : idx) probe.labels.push_back(train.labels[i]);
  probe.pairs = make_positive_pairs(train, cfg.augment, idx, rng);
  return probe;
}

Evaluation evaluate(const Network& net, const ExperimentConfig& cfg, const DataSplit& data,
                    const DiagnosticProbe& probe) {
  Evaluation ev;
  double loss = std::nan("");
  try {
    const Matrix z1 = eval_output(net, probe.pairs.view1);
    const Matrix z2 = eval_output(net, probe.pairs.view2);
    loss = objective(cfg.objective, z1, z2).value;
  } catch (const Error&) {
    // Degenerate outputs (zero columns under the cosine objective) have no loss.
  }
  try {
    ev.projection = eval_output(net, probe.pairs.view1);
  } catch (const Error&) {
    ev.projection = Matrix(net.output_dim(), probe.inputs.cols(), std::nan(""));
  }
  ev.report = ev.projection.all_finite()
                  ? collapse_report(ev.projection, loss, cfg.diag.var_floor, cfg.diag.rank_tol)
                  : nan_report(net.output_dim(), loss);

  ev.knn_acc = std::nan("");
  try {
    const Matrix train_f = extract_features(net, all_columns(data.train), cfg.diag.features);
    const Matrix test_f = extract_features(net, all_columns(data.test), cfg.diag.features);
    if (train_f.all_finite() && test_f.all_finite()) {
      ev.knn_acc = knn_eval(train_f, data.train.labels, test_f, data.test.labels,
                            std::min(cfg.diag.knn_k, data.train.size()));
    }
  } catch (const Error&) {
  }
  return ev;
}

nlohmann::json report_to_json(const CollapseReport& r, double knn_acc) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json per_dim = nlohmann::json::array();
  for (double s : r.per_dim_std) per_dim.push_back(num(s));
  return {{"loss", num(r.loss)},
          {"mean_std", num(r.mean_std)},
          {"per_dim_std", per_dim},
          {"avg_corr", r.avg_corr ? num(*r.avg_corr) : nlohmann::json(nullptr)},
          {"effective_rank", r.effective_rank},
          {"excluded_dims", r.excluded_dims},
          {"knn_acc", num(knn_acc)}};
}

// --------------------------------------------------------------- training

RunResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const DataSplit data = load_data(cfg);
  const std::size_t n = data.train.size();
  if (cfg.train.batch_size > n) {
    throw ConfigError("train.batch_size " + std::to_string(cfg.train.batch_size) + " exceeds the " +
                      std::to_string(n) + " training samples");
  }

  Network net = build_network(cfg, data.train.dim());
  const DiagnosticProbe probe = make_diagnostic_probe(cfg, data.train);
  std::mt19937_64 rng(derive_seed(cfg.seed, "sampling"));
  const std::size_t batch = cfg.train.batch_size;
  const std::size_t steps_per_epoch = n / batch;
  const double loss_scale = cfg.resolved_loss_scale();

  std::filesystem::create_directories(cfg.out_dir);
  const ConfigMap echo = cfg.to_map();
  std::string metrics = metrics_csv_header() + "\n";

  RunResult result;
  result.out_dir = cfg.out_dir;
  result.status = "completed";
  auto record = [&](std::size_t epoch) {
    const Evaluation ev = evaluate(net, cfg, data, probe);
    metrics += metrics_csv_row(epoch, ev.report, ev.knn_acc) + "\n";
    write_file_atomic(cfg.out_dir / "metrics.csv", metrics);
  };

  record(0);
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    const std::vector<std::size_t> order = shuffled_indices(n, rng);
    for (std::size_t s = 0; s < steps_per_epoch; ++s, ++step) {
      const std::span<const std::size_t> idx(order.data() + s * batch, batch);
      const PositivePairBatch pairs = make_positive_pairs(data.train, cfg.augment, idx, rng);
      const SgdParams sgd{lr_at(step, cfg.train, steps_per_epoch), cfg.train.momentum, cfg.train.weight_decay};
      StepResult r = train_step(net, pairs, cfg.objective, sgd, loss_scale);
      if (!r.collapsed && !std::isfinite(r.loss)) {
        r.collapsed = true;
        r.collapse_reason = "non-finite loss";
      }
      if (r.collapsed) {
        result.status = "collapsed";
        result.collapse_reason = r.collapse_reason;
        break;
      }
    }
    if (result.status == "collapsed") break;
    result.epochs_completed = epoch;
    if (epoch % cfg.diag.cadence == 0) record(epoch);
  }

  result.final = evaluate(net, cfg, data, probe);
  if (cfg.model.output_dim == 2) {
    write_file_atomic(cfg.out_dir / "scatter.csv", scatter_csv(result.final.projection, probe.labels));
  }
  nlohmann::json meta = {{"config", echo},
                         {"epochs_completed", result.epochs_completed},
                         {"status", result.status}};
  save_checkpoint(cfg.out_dir / "checkpoint.json", net, meta);

  nlohmann::json report = {{"status", result.status},
                           {"collapse_reason", result.collapse_reason},
                           {"epochs_completed", result.epochs_completed},
                           {"seed", cfg.seed},
                           {"final", report_to_json(result.final.report, result.final.knn_acc)},
                           {"config", echo}};
  write_file_atomic(cfg.out_dir / "final_report.json", report.dump(2) + "\n");
  return result;
}

std::vector<RunResult> run_sweep(const ConfigMap& base, const std::string& axis,
                                 const std::vector<std::string>& values, const std::filesystem::path& out_dir) {
  static const std::map<std::string, std::string> keys = {
      {"group_size", "model.group_size"}, {"output_dim", "model.output_dim"}, {"batch_size", "train.batch_size"},
      {"objective", "train.objective"},   {"epsilon", "model.epsilon"},       {"affine", "model.affine"}};
  const auto key = keys.find(axis);
  if (key == keys.end()) throw ConfigError("unknown sweep axis '" + axis + "'");
  if (values.empty()) throw ConfigError("sweep needs at least one value");

  // Every configuration is validated before any run starts.
  std::vector<ExperimentConfig> configs;
  for (const std::string& value : values) {
    ConfigMap map = base;
    map[key->second] = value;
    map["output.dir"] = (out_dir / (axis + "=" + value)).string();
    configs.push_back(ExperimentConfig::from_map(map));
    configs.back().validate();
  }

  std::vector<RunResult> results;
  std::string summary = axis + ",status,epochs_completed,loss,mean_std,avg_corr,effective_rank,excluded_dims,knn_acc\n";
  for (std::size_t i = 0; i < configs.size(); ++i) {
    results.push_back(run_experiment(configs[i]));
    const RunResult& r = results.back();
    const std::string row = metrics_csv_row(r.epochs_completed, r.final.report, r.final.knn_acc);
    summary += values[i] + "," + r.status + "," + row + "\n";
  }
  std::filesystem::create_directories(out_dir);
  write_file_atomic(out_dir / "summary.csv", summary);
  return results;
}

LoadedRun load_run(const std::filesystem::path& checkpoint, const std::optional<ConfigMap>& overrides) {
  Checkpoint ck = load_checkpoint(checkpoint);
  if (!ck.metadata.contains("config") || !ck.metadata["config"].is_object()) {
    throw CheckpointError(checkpoint.string() + ": no configuration recorded");
  }
  ConfigMap map;
  for (const auto& [k, v] : ck.metadata["config"].items()) map[k] = v.get<std::string>();
  if (overrides) {
    for (const auto& [k, v] : *overrides) map[k] = v;
  }
  LoadedRun run{std::move(ck.network), ExperimentConfig::from_map(map)};
  return run;
}

}  // namespace decorr
