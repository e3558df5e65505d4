#pragma once

// Sparse design matrices and a penalized logistic solver shared by the
// linear baselines. Internal to the library.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace gamlab::detail {

// Compressed sparse rows; column 0 is the unpenalized intercept.
struct Design {
  std::size_t cols = 1;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::uint32_t> col;
  std::vector<double> val;

  std::size_t rows() const { return row_ptr.size() - 1; }
  // Appends a row; the intercept entry is added automatically.
  void add_row(std::span<const std::uint32_t> cols_in, std::span<const double> vals_in);
  double dot(std::size_t row, std::span<const double> beta) const;
};

enum class PenaltyKind { l2, l1 };

struct SolverOptions {
  PenaltyKind penalty = PenaltyKind::l2;
  double alpha = 0.0;             // per-sample penalty weight
  std::size_t max_outer = 100;
  std::size_t max_inner = 200;
  double tolerance = 1e-8;
};

// Minimizes (1/n) sum_i loss(y_i, x_i'b) + alpha * pen(b without intercept)
// over the listed rows, where pen is |b|^2/2 or |b|_1. Proximal Newton with
// coordinate descent on each quadratic model; `beta` is the warm start.
void fit_logistic(const Design& x, std::span<const std::size_t> rows, std::span<const double> y,
                  const SolverOptions& options, std::vector<double>& beta);

double mean_log_loss(const Design& x, std::span<const std::size_t> rows, std::span<const double> y,
                     std::span<const double> beta);

}  // namespace gamlab::detail
