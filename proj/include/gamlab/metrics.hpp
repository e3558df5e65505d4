#pragma once

// Evaluation: ranking and loss metrics, feature density, empirical
// bias/variance, shape distance and semi-synthetic fidelity, rank gaps and
// subgroup loss tables.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gamlab/dataset.hpp"
#include "gamlab/model.hpp"
#include "gamlab/trainers.hpp"

namespace gamlab {

// Rank-sum AUC with ties counted as one half. Throws unless both classes occur.
double auc(std::span<const double> scores, std::span<const double> labels);

// Mean of -[t log p + (1-t) log(1-p)] with p clipped to [1e-12, 1-1e-12];
// t may be soft.
double cross_entropy(std::span<const double> p, std::span<const double> t);

// Test AUC and cross-entropy of a model on a list of rows.
struct Evaluation {
  std::size_t n = 0;
  double auc = 0.0;       // NaN when the rows hold one class only
  double cross_entropy = 0.0;
};
Evaluation evaluate(const AdditiveModel& m, const RawDataset& data, std::span<const std::size_t> rows);

// ---- Feature density -------------------------------------------------------

struct DensityCurve {
  std::vector<std::string> added;     // feature added at step k = 1..D
  std::vector<double> val_error;      // k = 0..D
  std::vector<double> test_error;     // k = 0..D
  double density = 50.0;
  bool degenerate = false;
};

// 100 x trapezoid area of the normalized, clamped error curve. A curve that
// does not improve from its first to its last point scores 50 (degenerate).
double density_from_errors(std::span<const double> errors, bool* degenerate = nullptr);

// Greedy add-back of the model's existing shapes, starting from the
// intercept. Each step adds the shape that lowers validation cross-entropy
// the most (lowest index on ties). The model is centered on the training rows first.
DensityCurve feature_density(const AdditiveModel& m, const BinnedDataset& data);

// ---- Empirical bias and variance --------------------------------------------

enum class BiasVarianceLoss { log_loss, squared };

struct BiasVarianceOptions {
  std::size_t rounds = 8;
  std::size_t reps = 5;
  double subsample = 0.5;
  double test_fraction = 0.15;
  double val_fraction = 0.15;     // of each subsample, for early stopping
  std::size_t min_rounds = 6;
  std::size_t max_bins = 255;
  std::uint64_t seed = 0;
  BiasVarianceLoss loss = BiasVarianceLoss::log_loss;
  std::size_t threads = 1;        // rounds run concurrently
};

struct BiasVarianceRound {
  bool ok = false;
  std::string error;
  double empirical_bias = 0.0;    // mean over test rows of L(t, y_m)
  double variance = 0.0;          // mean over models and test rows of L(y_m, y)
  double total = 0.0;             // mean over models and test rows of L(t, y)
};

struct BiasVarianceEstimate {
  double empirical_bias = 0.0;
  double variance = 0.0;
  double total = 0.0;
  std::size_t rounds_used = 0;
  std::vector<BiasVarianceRound> rounds;
  std::vector<std::string> flags;
};

// Throws std::runtime_error when fewer than options.min_rounds rounds succeed.
BiasVarianceEstimate bias_variance(const Trainer& trainer, std::shared_ptr<const RawDataset> data,
                                   const BiasVarianceOptions& options = {});

// ---- Shape distance and semi-synthetic fidelity ----------------------------

// Both models are discretized onto data.spec and centered on all rows of
// data.raw; returns (1/N) sum over rows and features of |a_j - b_j|.
double shape_distance(const AdditiveModel& a, const AdditiveModel& b, const BinnedDataset& data);

enum class LabelMode { bernoulli, soft };

LabelMode label_mode_from_string(std::string_view text);

// Same features, labels regenerated from the generator's probabilities.
RawDataset make_semisynthetic(const AdditiveModel& generator, const RawDataset& data, std::uint64_t seed,
                              LabelMode mode = LabelMode::bernoulli);

struct NamedTrainer {
  std::string name;
  Trainer trainer;
};

struct FidelityOptions {
  std::uint64_t seed = 0;
  std::size_t max_bins = 255;
  LabelMode label_mode = LabelMode::bernoulli;
  std::size_t threads = 1;
};

struct FidelityTable {
  std::vector<std::string> generators;
  std::vector<std::string> candidates;
  std::vector<std::vector<double>> distance;   // [generator][candidate]
  std::vector<std::vector<double>> score;      // [generator][candidate], 0..100
  std::vector<std::vector<double>> test_auc;   // [generator][candidate], semi-synthetic test split
  std::vector<double> worst_case;              // [candidate]
  std::vector<AdditiveModel> ground_truth;     // [generator]
  std::vector<std::string> flags;
};

// Min-max normalization with the smallest distance mapped to 100. All-equal
// inputs give 100 everywhere and set *flat.
std::vector<double> fidelity_scores(std::span<const double> distances, bool* flat = nullptr);

FidelityTable worst_case_fidelity(const std::vector<NamedTrainer>& candidates,
                                  const std::vector<NamedTrainer>& generators,
                                  std::shared_ptr<const RawDataset> data, const FidelityOptions& options = {});

// ---- Rankings ----------------------------------------------------------------

// Fractional ranks, 1 = largest value; ties share the average rank.
std::vector<double> average_ranks(std::span<const double> values);

// Per-dataset min -> 0, max -> 100; all-equal values map to 100.
std::vector<double> normalize_0_100(std::span<const double> values);

// dataset -> algorithm -> value, higher is better.
using MetricTable = std::map<std::string, std::map<std::string, double>>;

// Average over datasets of max(0, rank_fidelity - rank_auc) per algorithm.
std::map<std::string, double> rank_gap(const MetricTable& auc_table, const MetricTable& fidelity_table);

// ---- Subgroups and ablation -------------------------------------------------------

struct SubgroupRow {
  std::string group;
  std::size_t n = 0;
  double loss = 0.0;
  std::optional<double> reference_loss;
  std::optional<double> relative_percent;   // 100 (loss - ref) / ref
};

struct SubgroupReport {
  std::string column;
  SubgroupRow overall;
  std::vector<SubgroupRow> groups;
  std::vector<std::string> notes;
};

// Cross-entropy per value of `group_column` over `rows` (all rows when empty).
// Missing values form their own group.
SubgroupReport subgroup_report(const AdditiveModel& m, const RawDataset& data, std::string_view group_column,
                               const AdditiveModel* reference = nullptr, std::span<const std::size_t> rows = {});

// Refit with `dropped_feature` removed from the binned view; same seed.
AdditiveModel ablate_and_retrain(const Trainer& trainer, const BinnedDataset& data, std::string_view dropped_feature,
                                 std::uint64_t seed);

void to_json(nlohmann::json& j, const DensityCurve& c);
void to_json(nlohmann::json& j, const BiasVarianceEstimate& e);
void to_json(nlohmann::json& j, const FidelityTable& t);
void to_json(nlohmann::json& j, const SubgroupReport& r);

}  // namespace gamlab
