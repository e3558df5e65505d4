#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gamlab/dataset.hpp"
#include "gamlab/model.hpp"

namespace gamlab {

enum class BoostMode { cyclic, best_first, newton, newton_one_feature };

std::string_view to_string(BoostMode mode);
BoostMode boost_mode_from_string(std::string_view text);
// Defaults are the desk-scale profile; paper_scale() restores the full
// 100-bag counts and round cap.
// bag counts and round cap.
struct BoostConfig {
  double learning_rate = 0.01;
  std::size_t max_rounds = 2000;
  std::size_t patience = 50;
  std::size_t outer_bags = 8;   // 0: a single run on the training rows as-is
  std::size_t inner_bags = 8;   // 0: fit each update on the outer bag directly
  std::size_t leaves_per_stump = 3;
  double newton_lambda = 1.0;   // leaf L2 term, Newton modes only
  bool one_hot_categoricals = false;  // one-vs-rest splits on categorical features
  BoostMode mode = BoostMode::cyclic;
  std::uint64_t seed = 0;
  std::size_t threads = 1;      // outer bags run concurrently

  static BoostConfig paper_scale(BoostMode mode);
  void validate() const;
};

// Per-bin sums of gradient, hessian and sample weight for one feature.
struct Histogram {
  std::vector<double> grad;
  std::vector<double> hess;
  std::vector<double> count;

  explicit Histogram(std::size_t bins = 0) : grad(bins, 0.0), hess(bins, 0.0), count(bins, 0.0) {}
  std::size_t bins() const { return grad.size(); }
};

Histogram build_histogram(std::span<const std::uint16_t> bins, std::span<const double> g,
                          std::span<const double> h, std::size_t bin_count);

struct StumpFit {
  std::vector<std::size_t> cuts;     // bin positions; segment k is [cuts[k-1], cuts[k])
  std::vector<double> leaf_values;   // -G/(H+lambda) per segment
  std::vector<double> bin_values;    // leaf value of every bin
  double gain = 0.0;                 // sum G^2/(H+lambda) over leaves minus the root term
};

// Best partition of the binned axis into at most `leaves` contiguous,
// non-empty segments by Newton gain. Exact search: dynamic programming over
// the occupied bins. Ties go to fewer leaves, then to the leftmost cuts.
StumpFit best_stump(const Histogram& hist, std::size_t leaves, double lambda);
StumpFit best_stump(std::span<const std::uint16_t> bins, std::span<const double> g,
                    std::span<const double> h, std::size_t bin_count, std::size_t leaves, double lambda);

// One-vs-rest split on a single bin (one-hot encoded categorical feature).
StumpFit best_indicator_stump(const Histogram& hist, double lambda);

// Logistic-loss working state for a set of rows.
struct GradientState {
  static constexpr double kHessianFloor = 1e-6;

  std::vector<double> score;
  std::vector<double> grad;
  std::vector<double> hess;

  void refresh(std::span<const double> labels);
};

double logistic_loss(double label, double score);

struct BoostTrace {
  bool record_loss = false;
  std::vector<std::size_t> updates_per_feature;
  std::vector<std::size_t> sequence;   // features updated in the first outer bag
  std::vector<double> bag_loss;        // first bag: training loss before and after each update
  std::size_t rounds = 0;              // rounds (cycles for cyclic) run in the first bag
  std::size_t kept_updates = 0;        // first bag: length of `sequence` at the retained iterate
};

AdditiveModel fit_cyclic(const BinnedDataset& data, const BoostConfig& cfg, BoostTrace* trace = nullptr);
AdditiveModel fit_best_first(const BinnedDataset& data, const BoostConfig& cfg, BoostTrace* trace = nullptr);
AdditiveModel fit_newton(const BinnedDataset& data, const BoostConfig& cfg, BoostTrace* trace = nullptr);
AdditiveModel fit_boosted(const BinnedDataset& data, const BoostConfig& cfg, BoostTrace* trace = nullptr);

}  // namespace gamlab
