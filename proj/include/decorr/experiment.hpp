#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "decorr/data.hpp"
#include "decorr/diagnostics.hpp"
#include "decorr/model.hpp"
#include "decorr/ssl.hpp"
#include "json.hpp"

namespace decorr {

/// Flat "section.key" -> value view of an INI file. Top-level keys (such as
/// `seed`) have no section prefix.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap read_config_file(const std::filesystem::path& path);
/// Applies one "key=value" override.
void apply_override(ConfigMap& map, const std::string& assignment);

struct DataSpec {
  std::string source = "synthetic";  // synthetic | cifar10
  int classes = 10;
  std::size_t per_class = 200;
  std::size_t test_per_class = 40;
  std::size_t dim = 32;
  double separation = 6.0;
  double blob_std = 1.0;
  std::vector<std::filesystem::path> train_files;  // cifar10
  std::vector<std::filesystem::path> test_files;
  std::size_t limit = 0;  // keep at most this many training samples (0 = all)
};

struct ModelSpec {
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t output_dim = 2;
  double hidden_epsilon = 1e-5;
  bool hidden_affine = true;
  std::string norm = "bn";  // none | bn | dbn | shuffled_dbn | zca (dbn with one group)
  double epsilon = 0.0;
  bool affine = false;
  std::size_t group_size = 2;
  double eig_floor = kDefaultEigFloor;
};

struct DiagSpec {
  std::size_t cadence = 5;
  std::size_t batch = 512;
  std::size_t knn_k = 5;
  std::string features = "representation";  // representation | projection
  double var_floor = kDefaultVarFloor;
  double rank_tol = kDefaultRankTol;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DataSpec data;
  AugmentationPolicy augment = AugmentationPolicy::vector_defaults();
  ModelSpec model;
  ObjectiveKind objective = ObjectiveKind::squared_error;
  TrainConfig train;
  /// Gradient multiplier for the objective; empty means automatic: the batch
  /// size for squared error on a whitened output (whose rows have norm 1, so
  /// per-sample variance 1/B), otherwise 1.
  std::optional<double> loss_scale;
  DiagSpec diag;
  std::filesystem::path out_dir = "runs/default";

  /// Parses every key; unknown keys and malformed values throw ConfigError.
  static ExperimentConfig from_map(const ConfigMap& map);
  double resolved_loss_scale() const;
  /// The complete resolved configuration, every key present.
  ConfigMap to_map() const;
  /// Cross-field checks; throws ConfigError.
  void validate() const;
};

/// The sub-seed for one named stream of randomness, derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& stream);

struct DataSplit {
  Dataset train;
  Dataset test;
};
DataSplit load_data(const ExperimentConfig& cfg);

Network build_network(const ExperimentConfig& cfg, std::size_t input_dim);

/// Features for evaluation, one sample per column, computed in eval mode from
/// either the last hidden block ("representation") or the network output.
Matrix extract_features(const Network& net, const Matrix& x, const std::string& tap);

/// The fixed diagnostic probe of a run: a deterministic subset of the training
/// set and one augmented pair batch over it.
struct DiagnosticProbe {
  Matrix inputs;  // D_in x n
  std::vector<int> labels;
  PositivePairBatch pairs;
};
DiagnosticProbe make_diagnostic_probe(const ExperimentConfig& cfg, const Dataset& train);

struct Evaluation {
  CollapseReport report;
  double knn_acc = 0.0;
  Matrix projection;  // eval-mode network output over the probe's first views
};
/// Eval-mode collapse report over the probe's first views (the distribution the
/// running statistics track) and kNN accuracy on clean samples. The loss is the
/// objective on the probe's pair batch.
Evaluation evaluate(const Network& net, const ExperimentConfig& cfg, const DataSplit& data,
                    const DiagnosticProbe& probe);

nlohmann::json report_to_json(const CollapseReport& report, double knn_acc);

struct RunResult {
  std::string status;  // completed | collapsed
  std::string collapse_reason;
  std::size_t epochs_completed = 0;
  Evaluation final;
  std::filesystem::path out_dir;
};

/// Trains one configuration and writes metrics.csv, final_report.json,
/// checkpoint.json and, for 2-D outputs, scatter.csv into cfg.out_dir.
RunResult run_experiment(const ExperimentConfig& cfg);

inline const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes = {"group_size", "output_dim", "batch_size",
                                                "objective", "epsilon", "affine"};
  return axes;
}

/// One run per value under out_dir/<axis>=<value>, plus out_dir/summary.csv.
std::vector<RunResult> run_sweep(const ConfigMap& base, const std::string& axis,
                                 const std::vector<std::string>& values, const std::filesystem::path& out_dir);

/// Restores a trained network and its configuration from a run's checkpoint.
struct LoadedRun {
  Network network;
  ExperimentConfig config;
};
LoadedRun load_run(const std::filesystem::path& checkpoint, const std::optional<ConfigMap>& overrides = {});

}  // namespace decorr
