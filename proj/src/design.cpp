#include "design.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gamlab/boosting.hpp"
#include "gamlab/model.hpp"

namespace gamlab::detail {

void Design::add_row(std::span<const std::uint32_t> cols_in, std::span<const double> vals_in) {
  col.push_back(0);
  val.push_back(1.0);
  for (std::size_t k = 0; k < cols_in.size(); ++k) {
    if (vals_in[k] == 0.0) continue;
    if (cols_in[k] == 0 || cols_in[k] >= cols) throw std::out_of_range("design: column out of range");
    col.push_back(cols_in[k]);
    val.push_back(vals_in[k]);
  }
  row_ptr.push_back(col.size());
}

double Design::dot(std::size_t row, std::span<const double> beta) const {
  double s = 0.0;
  for (std::size_t k = row_ptr[row]; k < row_ptr[row + 1]; ++k) s += val[k] * beta[col[k]];
  return s;
}

double mean_log_loss(const Design& x, std::span<const std::size_t> rows, std::span<const double> y,
                     std::span<const double> beta) {
  double loss = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) loss += logistic_loss(y[i], x.dot(rows[i], beta));
  return loss / static_cast<double>(rows.size());
}

namespace {

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

double penalty_value(const std::vector<double>& beta, const SolverOptions& o) {
  double p = 0.0;
  for (std::size_t j = 1; j < beta.size(); ++j) {
    p += o.penalty == PenaltyKind::l2 ? 0.5 * beta[j] * beta[j] : std::abs(beta[j]);
  }
  return o.alpha * p;
}

}  // namespace

void fit_logistic(const Design& x, std::span<const std::size_t> rows, std::span<const double> y,
                  const SolverOptions& o, std::vector<double>& beta) {
  if (rows.size() != y.size()) throw std::invalid_argument("fit_logistic: length mismatch");
  if (rows.empty()) throw std::invalid_argument("fit_logistic: no rows");
  beta.resize(x.cols, 0.0);
  const std::size_t n = rows.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  // Column-major copy of the selected rows.
  std::vector<std::size_t> col_ptr(x.cols + 1, 0);
  for (auto r : rows) {
    for (std::size_t k = x.row_ptr[r]; k < x.row_ptr[r + 1]; ++k) ++col_ptr[x.col[k] + 1];
  }
  for (std::size_t j = 0; j < x.cols; ++j) col_ptr[j + 1] += col_ptr[j];
  std::vector<std::uint32_t> row_of(col_ptr.back());
  std::vector<double> value_of(col_ptr.back());
  {
    std::vector<std::size_t> fill(col_ptr.begin(), col_ptr.end() - 1);
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = rows[i];
      for (std::size_t k = x.row_ptr[r]; k < x.row_ptr[r + 1]; ++k) {
        const auto pos = fill[x.col[k]]++;
        row_of[pos] = static_cast<std::uint32_t>(i);
        value_of[pos] = x.val[k];
      }
    }
  }

  std::vector<double> eta(n), w(n), resid(n), curvature(x.cols);
  auto objective = [&](const std::vector<double>& b) {
    return mean_log_loss(x, rows, y, b) + penalty_value(b, o);
  };
  double current = objective(beta);
  for (std::size_t outer = 0; outer < o.max_outer; ++outer) {
    for (std::size_t i = 0; i < n; ++i) {
      eta[i] = x.dot(rows[i], beta);
      const double p = logistic(eta[i]);
      w[i] = std::max(p * (1.0 - p), 1e-5);
      resid[i] = (y[i] - p) / w[i];
    }
    for (std::size_t j = 0; j < x.cols; ++j) {
      double c = 0.0;
      for (std::size_t k = col_ptr[j]; k < col_ptr[j + 1]; ++k) c += w[row_of[k]] * value_of[k] * value_of[k];
      curvature[j] = c * inv_n;
    }
    std::vector<double> next = beta;
    for (std::size_t inner = 0; inner < o.max_inner; ++inner) {
      double max_change = 0.0;
      for (std::size_t j = 0; j < x.cols; ++j) {
        if (curvature[j] <= 0.0) continue;
        double grad = 0.0;
        for (std::size_t k = col_ptr[j]; k < col_ptr[j + 1]; ++k) grad += w[row_of[k]] * value_of[k] * resid[row_of[k]];
        grad *= inv_n;
        const double old = next[j];
        double updated;
        if (j == 0) {
          updated = old + grad / curvature[j];
        } else if (o.penalty == PenaltyKind::l2) {
          updated = (curvature[j] * old + grad) / (curvature[j] + o.alpha);
        } else {
          updated = soft_threshold(curvature[j] * old + grad, o.alpha) / curvature[j];
        }
        const double d = updated - old;
        if (d == 0.0) continue;
        for (std::size_t k = col_ptr[j]; k < col_ptr[j + 1]; ++k) resid[row_of[k]] -= d * value_of[k];
        next[j] = updated;
        max_change = std::max(max_change, curvature[j] * d * d);
      }
      if (max_change < o.tolerance * 1e-2) break;
    }
    // Backtrack along the proximal Newton direction until the objective drops.
    double step = 1.0;
    std::vector<double> trial(x.cols);
    double value = current;
    for (int halving = 0; halving < 30; ++halving) {
      for (std::size_t j = 0; j < x.cols; ++j) trial[j] = beta[j] + step * (next[j] - beta[j]);
      value = objective(trial);
      if (value <= current) break;
      step *= 0.5;
    }
    if (value > current) return;
    beta = trial;
    const bool done = current - value <= o.tolerance * std::max(1.0, std::abs(value));
    current = value;
    if (done) return;
  }
}

}  // namespace gamlab::detail
