// Experiment runner: train, sweep, diagnose, eval-linear, eval-knn.

#include <iostream>

#include "CLI11.hpp"
#include "decorr/errors.hpp"
#include "decorr/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitCollapse = 3;
constexpr int kExitRuntime = 4;

struct CommonOptions {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "INI configuration file (or a run's final_report.json)");
  cmd->add_option("--set", o.sets, "Override one key, e.g. --set model.norm=dbn (repeatable)");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--seed", o.seed, "Run seed");
}

decorr::ConfigMap resolve(const CommonOptions& o) {
  decorr::ConfigMap map;
  if (!o.config.empty()) map = decorr::read_config_file(o.config);
  for (const auto& s : o.sets) decorr::apply_override(map, s);
  if (o.seed) map["seed"] = std::to_string(*o.seed);
  if (!o.out.empty()) map["output.dir"] = o.out;
  return map;
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }

// The checkpoint's own configuration, with the command line layered on top.
decorr::LoadedRun open_run(const std::string& checkpoint, const CommonOptions& o) {
  decorr::LoadedRun run = decorr::load_run(checkpoint, resolve(o));
  run.config.validate();
  return run;
}

decorr::DataSplit data_for(const decorr::LoadedRun& run) {
  decorr::DataSplit data = decorr::load_data(run.config);
  if (data.train.dim() != run.network.input_dim()) {
    throw decorr::CheckpointError("checkpoint expects inputs of dimension " +
                                  std::to_string(run.network.input_dim()) + ", dataset has " +
                                  std::to_string(data.train.dim()));
  }
  return data;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature-decorrelation experiments for self-supervised learning"};
  app.require_subcommand(1);

  CommonOptions train_opts;
  auto* train = app.add_subcommand("train", "Train one configuration and write its result bundle");
  add_common(train, train_opts);

  CommonOptions sweep_opts;
  std::string axis;
  std::vector<std::string> values;
  auto* sweep = app.add_subcommand("sweep", "Run one experiment per value of a configuration axis");
  add_common(sweep, sweep_opts);
  sweep->add_option("--axis", axis, "group_size | output_dim | batch_size | objective | epsilon | affine")
      ->required();
  sweep->add_option("--values", values, "Comma-separated values")->required()->delimiter(',');

  CommonOptions diag_opts;
  std::string diag_checkpoint;
  auto* diagnose = app.add_subcommand("diagnose", "Print the collapse report of a checkpoint as JSON");
  add_common(diagnose, diag_opts);
  diagnose->add_option("--checkpoint", diag_checkpoint, "checkpoint.json of a run")->required();

  CommonOptions linear_opts;
  std::string linear_checkpoint;
  decorr::ProbeConfig probe;
  auto* eval_linear = app.add_subcommand("eval-linear", "Linear-probe accuracy of frozen features");
  add_common(eval_linear, linear_opts);
  eval_linear->add_option("--checkpoint", linear_checkpoint, "checkpoint.json of a run")->required();
  eval_linear->add_option("--epochs", probe.epochs, "Probe training epochs")->capture_default_str();
  eval_linear->add_option("--lr", probe.lr, "Probe learning rate")->capture_default_str();
  eval_linear->add_option("--batch-size", probe.batch_size, "Probe batch size")->capture_default_str();

  CommonOptions knn_opts;
  std::string knn_checkpoint;
  std::optional<std::size_t> knn_k;
  auto* eval_knn = app.add_subcommand("eval-knn", "kNN accuracy of frozen features");
  add_common(eval_knn, knn_opts);
  eval_knn->add_option("--checkpoint", knn_checkpoint, "checkpoint.json of a run")->required();
  eval_knn->add_option("--k", knn_k, "Neighbours (default: diag.knn_k of the run)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (train->parsed()) {
      decorr::ExperimentConfig cfg = decorr::ExperimentConfig::from_map(resolve(train_opts));
      const decorr::RunResult r = decorr::run_experiment(cfg);
      std::cout << "status: " << r.status << "\n";
      if (!r.collapse_reason.empty()) std::cout << "collapse: " << r.collapse_reason << "\n";
      std::cout << "results: " << r.out_dir.string() << "\n";
      return r.status == "collapsed" ? kExitCollapse : kExitOk;
    }
    if (sweep->parsed()) {
      const decorr::ConfigMap base = resolve(sweep_opts);
      const auto it = base.find("output.dir");
      const std::filesystem::path out = it != base.end() ? it->second : "runs/sweep";
      const auto results = decorr::run_sweep(base, axis, values, out);
      for (std::size_t i = 0; i < results.size(); ++i) {
        std::cout << axis << "=" << values[i] << ": " << results[i].status << "\n";
      }
      std::cout << "summary: " << (out / "summary.csv").string() << "\n";
      return kExitOk;
    }
    if (diagnose->parsed()) {
      const decorr::LoadedRun run = open_run(diag_checkpoint, diag_opts);
      const decorr::DataSplit data = data_for(run);
      const auto probe_set = decorr::make_diagnostic_probe(run.config, data.train);
      const decorr::Evaluation ev = decorr::evaluate(run.network, run.config, data, probe_set);
      print_json(decorr::report_to_json(ev.report, ev.knn_acc));
      return kExitOk;
    }
    if (eval_linear->parsed() || eval_knn->parsed()) {
      const bool linear = eval_linear->parsed();
      const decorr::LoadedRun run =
          open_run(linear ? linear_checkpoint : knn_checkpoint, linear ? linear_opts : knn_opts);
      const decorr::DataSplit data = data_for(run);
      auto columns = [](const decorr::Dataset& ds) { return decorr::transpose(ds.samples); };
      const decorr::Matrix train_f = decorr::extract_features(run.network, columns(data.train), run.config.diag.features);
      const decorr::Matrix test_f = decorr::extract_features(run.network, columns(data.test), run.config.diag.features);
      double acc = 0.0;
      if (linear) {
        probe.seed = decorr::derive_seed(run.config.seed, "probe");
        acc = decorr::linear_probe(train_f, data.train.labels, test_f, data.test.labels, probe);
      } else {
        acc = decorr::knn_eval(train_f, data.train.labels, test_f, data.test.labels,
                               knn_k.value_or(run.config.diag.knn_k));
      }
      print_json({{"accuracy", acc}, {"features", run.config.diag.features}});
      return kExitOk;
    }
  } catch (const decorr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
