#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gamlab/dataset.hpp"
#include "gamlab/model.hpp"

namespace gamlab {

// ---- Total-variation denoising -------------------------------------------

// Exact minimizer of sum_i w_i (y_i - t_i)^2 / 2 + lambda * sum_i |t_{i+1} - t_i|.
// Linear-time dynamic programming over the derivative of the cost-to-come.
std::vector<double> tv_denoise_1d(std::span<const double> y, std::span<const double> w, double lambda);

// Smallest lambda at which tv_denoise_1d returns the weighted mean everywhere.
double tv_saturation(std::span<const double> y, std::span<const double> w);

double tv_objective(std::span<const double> y, std::span<const double> w, std::span<const double> theta,
                    double lambda);

// ---- Fused-lasso additive model ------------------------------------------

struct FlamConfig {
  std::size_t path_length = 40;      // 100 at paper scale
  double min_ratio = 1e-4;
  std::size_t max_sweeps = 200;      // block-descent sweeps per lambda
  double tolerance = 1e-7;           // relative objective change

  static FlamConfig paper_scale();
  void validate() const;
};

struct FlamTrace {
  std::vector<double> lambdas;
  std::vector<double> val_loss;
  std::vector<std::vector<double>> sweep_objective;  // per lambda, objective after each sweep
  std::vector<bool> converged;
  std::size_t selected = 0;
};

// Penalty at which the null model is already optimal (all shapes constant).
double flam_lambda_max(const BinnedDataset& data);

// Lambda path from flam_lambda_max down to min_ratio of it, warm-started;
// the path point with the lowest validation log loss is returned.
AdditiveModel fit_flam(const BinnedDataset& data, const FlamConfig& cfg = {}, FlamTrace* trace = nullptr);

// Single fit at a fixed lambda (penalty on the summed, not averaged, loss).
AdditiveModel fit_flam_at(const BinnedDataset& data, double lambda, const FlamConfig& cfg = {},
                          FlamTrace* trace = nullptr);

// ---- Penalized B-spline additive model -----------------------------------

// Clamped cubic B-spline basis on [lo, hi]; evaluation clamps x into range.
class SplineBasis {
 public:
  SplineBasis() = default;
  SplineBasis(double lo, double hi, std::vector<double> interior_knots);

  // Basis of `size` functions with interior knots at quantiles of `values`.
  static SplineBasis at_quantiles(std::span<const double> sorted_values, std::size_t size);

  std::size_t size() const { return interior_.size() + 4; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  const std::vector<double>& interior_knots() const { return interior_; }

  // Index of the first nonzero function and its four values at x.
  std::size_t evaluate(double x, double out[4]) const;
  std::vector<double> evaluate_all(double x) const;

 private:
  double lo_ = 0.0;
  double hi_ = 1.0;
  std::vector<double> interior_;
  std::vector<double> knots_;  // full knot vector with boundary multiplicity 4
};

// Row-major K x K matrix D^T D for the second-difference operator D.
std::vector<double> second_difference_penalty(std::size_t size);

struct SplineConfig {
  std::size_t max_basis = 50;
  std::size_t grid_points = 15;
  double lambda_lo = 1e-3;
  double lambda_hi = 1e4;
  std::size_t export_points = 256;
  std::size_t max_iterations = 60;
  double tolerance = 1e-8;
  std::vector<double> lambdas;   // overrides the log grid when set

  void validate() const;
  std::vector<double> grid() const;
};

struct SplineTrace {
  std::vector<double> lambdas;
  std::vector<double> gcv;       // NaN where the fit diverged
  std::vector<double> edf;
  std::size_t selected = 0;
};

AdditiveModel fit_spline(const BinnedDataset& data, const SplineConfig& cfg = {}, SplineTrace* trace = nullptr);

// ---- Linear baselines -----------------------------------------------------

enum class Penalty { l2, l1 };
enum class LinearVariant { plain, indicator_bins, marginalized };

struct LinearConfig {
  Penalty penalty = Penalty::l2;
  LinearVariant variant = LinearVariant::plain;
  std::vector<double> Cs;        // inverse penalty strengths; default logspace(-4, 4, 12)
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  std::size_t max_iterations = 500;
  double tolerance = 1e-8;

  void validate() const;
  std::vector<double> grid() const;
};

struct LinearTrace {
  std::vector<double> Cs;
  std::vector<double> cv_loss;
  double selected_C = 0.0;
};

AdditiveModel fit_linear(const BinnedDataset& data, const LinearConfig& cfg = {}, LinearTrace* trace = nullptr);

// Laplace-smoothed log-odds of the training label mean per bin of feature j.
std::vector<double> marginal_log_odds(const BinnedDataset& data, std::size_t feature);

}  // namespace gamlab
