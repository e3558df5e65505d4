#pragma once

// Config-driven experiment runner: trains every (dataset, algorithm, seed)
// cell, evaluates the requested tasks, writes CSV tables and a manifest, and
// skips cells whose recorded outputs are already present on disk.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gamlab/dataset.hpp"
#include "gamlab/metrics.hpp"
#include "gamlab/trainers.hpp"

namespace gamlab {

inline constexpr const char* kToolkitVersion = "0.1.0";

// Invalid or inconsistent experiment configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetEntry {
  std::string name;
  std::filesystem::path path;
  std::string label_column = "label";
  std::vector<std::string> group_columns;
  nlohmann::json schema = nlohmann::json::object();
  std::vector<std::string> ablate;   // features dropped for the fairness ablation
};

struct AlgorithmEntry {
  std::string id;
  TrainConfig config;
};

inline const std::set<std::string>& known_tasks() {
  static const std::set<std::string> t = {"accuracy", "density", "biasvar", "fidelity", "fairness", "rankgap", "plots"};
  return t;
}

struct ExperimentConfig {
  std::string name = "experiment";
  Scale scale = Scale::desk;
  std::filesystem::path output_dir = "out";
  std::vector<DatasetEntry> datasets;
  std::vector<AlgorithmEntry> algorithms;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::set<std::string> tasks = {"accuracy"};
  SplitFractions split;
  std::vector<std::string> fidelity_generators;   // algorithm ids; empty = all
  LabelMode label_mode = LabelMode::bernoulli;
  std::string fairness_reference;                 // algorithm id; empty = first
  BiasVarianceOptions biasvar;
  nlohmann::json source;

  std::string digest() const;
  const DatasetEntry& dataset(std::string_view name) const;
  const AlgorithmEntry& algorithm(std::string_view id) const;
};

// Relative paths are resolved against `base_dir`. Throws ConfigError.
ExperimentConfig parse_experiment(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment(const std::filesystem::path& path);

std::shared_ptr<const RawDataset> load_dataset(const DatasetEntry& entry);

struct CellRecord {
  std::string task;
  std::string key;
  std::string status;     // ok, skipped (resumed), failed
  double seconds = 0.0;
  std::uint64_t seed = 0;
  std::string error;
};

struct RunManifest {
  std::string config_digest;
  std::string toolkit_version = kToolkitVersion;
  std::map<std::string, std::string> task_status;
  std::vector<CellRecord> cells;
  std::map<std::string, std::string> files;   // path relative to the output dir -> sha256

  bool any_failed() const;
};

void to_json(nlohmann::json& j, const RunManifest& m);

struct RunOptions {
  std::size_t threads = 1;
  std::ostream* log = nullptr;
};

// Runs the requested tasks; dependent cells (trained models) are created as
// needed. Per-cell failures are recorded and do not stop the run.
RunManifest run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

// Accuracy table footer: per-algorithm average AUC, average rank (fractional ties)
// and normalized AUC (per dataset min -> 0, max -> 100). Algorithms missing
// a dataset are excluded with a note.
struct SummaryRow {
  std::string algorithm;
  double average_auc = 0.0;
  double average_rank = 0.0;
  double normalized_auc = 0.0;
};

struct AccuracySummary {
  std::vector<SummaryRow> rows;
  std::vector<std::string> notes;
};

AccuracySummary summarize(const MetricTable& auc, const std::vector<std::string>& algorithms);

std::string sha256_file(const std::filesystem::path& path);

}  // namespace gamlab
