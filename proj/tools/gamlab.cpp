// gamlab command-line tool: training, evaluation and experiment runs.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gamlab/bench.hpp"
#include "gamlab/metrics.hpp"
#include "gamlab/parallel.hpp"
#include "gamlab/plots.hpp"
#include "gamlab/trainers.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gamlab;

namespace {

constexpr int kCellFailure = 1;
constexpr int kConfigError = 2;

// --dataset is a dataset name when --config is given, otherwise a CSV path.
struct DataArgs {
  std::string dataset;
  std::string config;
  std::string label = "label";
  std::string schema;
};

void add_data_options(CLI::App* cmd, DataArgs& a) {
  cmd->add_option("--dataset", a.dataset, "Dataset name (with --config) or CSV path")->required();
  cmd->add_option("--config", a.config, "Experiment config used to resolve the dataset");
  cmd->add_option("--label", a.label, "Label column when --dataset is a CSV path");
  cmd->add_option("--schema", a.schema, "Schema override JSON when --dataset is a CSV path");
}

struct ResolvedData {
  std::shared_ptr<const RawDataset> raw;
  SplitFractions split;
};

ResolvedData resolve(const DataArgs& a) {
  if (!a.config.empty()) {
    const auto cfg = load_experiment(a.config);
    const auto& entry = cfg.dataset(a.dataset);
    if (!fs::exists(entry.path)) throw ConfigError("dataset file not found: " + entry.path.string());
    return {load_dataset(entry), cfg.split};
  }
  if (!fs::exists(a.dataset)) throw ConfigError("dataset file not found: " + a.dataset);
  DatasetEntry e;
  e.name = fs::path(a.dataset).stem().string();
  e.path = a.dataset;
  e.label_column = a.label;
  if (!a.schema.empty()) {
    std::ifstream f(a.schema);
    if (!f) throw ConfigError("cannot open schema " + a.schema);
    e.schema = json::parse(f);
  }
  return {load_dataset(e), {}};
}

AdditiveModel read_model(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("model file not found: " + path);
  return load_model(path);
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

std::vector<std::size_t> split_rows(const SplitPlan& plan, const std::string& which) {
  if (which == "train") return plan.train;
  if (which == "val") return plan.val;
  if (which == "test") return plan.test;
  if (which == "all") return plan.all();
  throw ConfigError("unknown split '" + which + "' (train, val, test, all)");
}

int finish(const RunManifest& m, const ExperimentConfig& cfg) {
  std::cerr << "outputs in " << cfg.output_dir.string() << '\n';
  for (const auto& [task, status] : m.task_status) std::cerr << "  " << task << ": " << status << '\n';
  return m.any_failed() ? kCellFailure : 0;
}

int run_tasks(const std::string& config, std::optional<std::set<std::string>> tasks, std::size_t threads,
              const std::string& out) {
  auto cfg = load_experiment(config);
  if (tasks) cfg.tasks = *tasks;
  if (!out.empty()) cfg.output_dir = out;
  RunOptions o;
  o.threads = threads;
  o.log = &std::cerr;
  return finish(run_experiment(cfg, o), cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gamlab: additive model training and evaluation toolkit"};
  app.require_subcommand(1);
  std::size_t threads = configured_threads(1);
  app.add_option("--threads", threads, "Worker threads (default: GAMLAB_THREADS or 1)");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one algorithm on one dataset");
  std::string t_config, t_algo, t_dataset, t_out;
  std::uint64_t t_seed = 0;
  train_cmd->add_option("--config", t_config, "Experiment config")->required();
  train_cmd->add_option("--algo", t_algo, "Algorithm id from the config")->required();
  train_cmd->add_option("--dataset", t_dataset, "Dataset name from the config")->required();
  train_cmd->add_option("--seed", t_seed, "Seed for the split and the trainer");
  train_cmd->add_option("--out", t_out, "Output model JSON")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "AUC and cross-entropy of a model on a split");
  DataArgs e_data;
  std::string e_model, e_split = "test";
  eval_cmd->add_option("--model", e_model, "Model JSON")->required();
  add_data_options(eval_cmd, e_data);
  eval_cmd->add_option("--split", e_split, "train, val, test or all (split seeded by the model seed)");

  // density
  auto* density_cmd = app.add_subcommand("density", "Feature density curve of a model");
  DataArgs d_data;
  std::string d_model;
  density_cmd->add_option("--model", d_model, "Model JSON")->required();
  add_data_options(density_cmd, d_data);

  // biasvar / fidelity / run
  auto* biasvar_cmd = app.add_subcommand("biasvar", "Empirical bias and variance for every dataset and algorithm");
  auto* fidelity_cmd = app.add_subcommand("fidelity", "Worst-case data fidelity on semi-synthetic data");
  auto* run_cmd = app.add_subcommand("run", "Run every task listed in the config");
  std::string x_config, x_out;
  for (auto* cmd : {biasvar_cmd, fidelity_cmd, run_cmd}) {
    cmd->add_option("--config", x_config, "Experiment config")->required();
    cmd->add_option("--out", x_out, "Override the output directory");
  }

  // fairness
  auto* fairness_cmd = app.add_subcommand("fairness", "Cross-entropy per subgroup of a column");
  DataArgs f_data;
  std::string f_model, f_group, f_reference;
  fairness_cmd->add_option("--model", f_model, "Model JSON")->required();
  fairness_cmd->add_option("--group", f_group, "Group column")->required();
  fairness_cmd->add_option("--reference", f_reference, "Reference model JSON for relative losses");
  add_data_options(fairness_cmd, f_data);

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Retrain without one feature and compare subgroup losses");
  std::string a_config, a_drop;
  ablate_cmd->add_option("--config", a_config, "Experiment config")->required();
  ablate_cmd->add_option("--drop", a_drop, "Feature to remove")->required();

  // plot
  auto* plot_cmd = app.add_subcommand("plot", "Export shape plots (CSV and SVG)");
  DataArgs p_data;
  std::string p_model, p_out;
  std::vector<std::string> p_overlay;
  plot_cmd->add_option("--model", p_model, "Model JSON")->required();
  plot_cmd->add_option("--overlay", p_overlay, "Further models drawn on the same axes");
  plot_cmd->add_option("--out", p_out, "Output directory")->required();
  add_data_options(plot_cmd, p_data);

  // defaults
  auto* defaults_cmd = app.add_subcommand("defaults", "Print training presets as JSON");
  std::string def_algo, def_scale = "desk";
  defaults_cmd->add_option("--algo", def_algo, "Only this algorithm");
  defaults_cmd->add_option("--scale", def_scale, "desk or paper");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*train_cmd) {
      const auto cfg = load_experiment(t_config);
      const auto& entry = cfg.dataset(t_dataset);
      const auto& algo = cfg.algorithm(t_algo);
      if (!fs::exists(entry.path)) throw ConfigError("dataset file not found: " + entry.path.string());
      auto tc = algo.config;
      if (tc.family == Family::boosting) tc.boost.threads = threads;
      const auto data = prepare(load_dataset(entry), t_seed, tc.max_bins, cfg.split);
      const auto m = train(data, tc, t_seed);
      if (const auto parent = fs::path(t_out).parent_path(); !parent.empty()) fs::create_directories(parent);
      save_model(m, t_out);
      const auto e = evaluate(m, *data.raw, data.split.test);
      print(json{{"model", t_out}, {"test_auc", e.auc}, {"test_cross_entropy", e.cross_entropy}});
      return 0;
    }
    if (*eval_cmd) {
      const auto m = read_model(e_model);
      const auto d = resolve(e_data);
      const auto plan = make_split(*d.raw, m.seed, d.split);
      const auto rows = split_rows(plan, e_split);
      const auto e = evaluate(m, *d.raw, rows);
      print(json{{"split", e_split}, {"n", e.n}, {"auc", e.auc}, {"cross_entropy", e.cross_entropy}});
      return 0;
    }
    if (*density_cmd) {
      const auto m = read_model(d_model);
      const auto d = resolve(d_data);
      const auto data = prepare(d.raw, m.seed, 255, d.split);
      print(json(feature_density(m, data)));
      return 0;
    }
    if (*biasvar_cmd) return run_tasks(x_config, std::set<std::string>{"biasvar"}, threads, x_out);
    if (*fidelity_cmd) {
      const auto cfg = load_experiment(x_config);
      std::set<std::string> tasks{"fidelity"};
      if (cfg.tasks.contains("rankgap")) tasks.insert("rankgap");
      return run_tasks(x_config, tasks, threads, x_out);
    }
    if (*run_cmd) return run_tasks(x_config, std::nullopt, threads, x_out);
    if (*fairness_cmd) {
      const auto m = read_model(f_model);
      const auto d = resolve(f_data);
      std::optional<AdditiveModel> ref;
      if (!f_reference.empty()) ref = read_model(f_reference);
      print(json(subgroup_report(m, *d.raw, f_group, ref ? &*ref : nullptr)));
      return 0;
    }
    if (*ablate_cmd) {
      const auto cfg = load_experiment(a_config);
      json out = json::array();
      for (const auto& entry : cfg.datasets) {
        if (!fs::exists(entry.path)) throw ConfigError("dataset file not found: " + entry.path.string());
        const auto raw = load_dataset(entry);
        if (!raw->column_index(a_drop)) continue;
        for (const auto& algo : cfg.algorithms) {
          const auto seed = cfg.seeds.front();
          const auto data = prepare(raw, seed, algo.config.max_bins, cfg.split);
          const auto trainer = make_trainer(algo.config);
          const auto full = trainer(data, seed);
          const auto ablated = ablate_and_retrain(trainer, data, a_drop, seed);
          json groups = json::object();
          for (const auto& col : raw->group_columns) groups[col] = subgroup_report(ablated, *raw, col, &full);
          out.push_back({{"dataset", entry.name},
                         {"algorithm", algo.id},
                         {"dropped", a_drop},
                         {"full_test_cross_entropy", evaluate(full, *raw, data.split.test).cross_entropy},
                         {"ablated_test_cross_entropy", evaluate(ablated, *raw, data.split.test).cross_entropy},
                         {"subgroups", groups}});
        }
      }
      if (out.empty()) throw ConfigError("no configured dataset has a column '" + a_drop + "'");
      print(out);
      return 0;
    }
    if (*plot_cmd) {
      const auto m = read_model(p_model);
      const auto d = resolve(p_data);
      const auto data = prepare(d.raw, m.seed, 255, d.split);
      std::vector<fs::path> files;
      if (p_overlay.empty()) {
        files = export_shapes(m, data, p_out);
      } else {
        std::vector<PlotSeries> series{{m.algorithm.empty() ? fs::path(p_model).stem().string() : m.algorithm, m}};
        for (const auto& path : p_overlay) {
          auto o = read_model(path);
          series.push_back({o.algorithm.empty() ? fs::path(path).stem().string() : o.algorithm, std::move(o)});
        }
        files = export_overlay(series, data, p_out);
      }
      json list = json::array();
      for (const auto& f : files) list.push_back(f.string());
      print(list);
      return 0;
    }
    if (*defaults_cmd) {
      const auto scale = scale_from_string(def_scale);
      if (!def_algo.empty()) {
        print(json(TrainConfig::preset(def_algo, scale)));
        return 0;
      }
      json all = json::array();
      for (const auto& name : algorithm_names()) all.push_back(TrainConfig::preset(name, scale));
      print(all);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCellFailure;
  }
  return 0;
}
