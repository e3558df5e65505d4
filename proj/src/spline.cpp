#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

#include "gamlab/boosting.hpp"
#include "gamlab/smooth.hpp"

namespace gamlab {

SplineBasis::SplineBasis(double lo, double hi, std::vector<double> interior_knots)
    : lo_(lo), hi_(hi), interior_(std::move(interior_knots)) {
  if (!(hi > lo)) throw std::invalid_argument("spline basis: empty range");
  double prev = lo;
  for (double k : interior_) {
    if (!(k > prev)) throw std::invalid_argument("spline basis: knots must be strictly increasing inside the range");
    prev = k;
  }
  if (!(hi > prev)) throw std::invalid_argument("spline basis: knot outside the range");
  knots_.assign(4, lo);
  knots_.insert(knots_.end(), interior_.begin(), interior_.end());
  knots_.insert(knots_.end(), 4, hi);
}

SplineBasis SplineBasis::at_quantiles(std::span<const double> sorted_values, std::size_t size) {
  if (size < 4) throw std::invalid_argument("spline basis: need at least 4 functions");
  const std::size_t u = sorted_values.size();
  if (u < 2) throw std::invalid_argument("spline basis: need two distinct values");
  const std::size_t inner = size - 4;
  std::vector<double> interior;
  for (std::size_t m = 1; m <= inner; ++m) {
    const double pos = static_cast<double>(m) / static_cast<double>(inner + 1) * static_cast<double>(u - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    const double v = lo + 1 < u ? sorted_values[lo] + frac * (sorted_values[lo + 1] - sorted_values[lo]) : sorted_values[lo];
    if (interior.empty() ? v > sorted_values.front() : v > interior.back()) {
      if (v < sorted_values.back()) interior.push_back(v);
    }
  }
  return SplineBasis(sorted_values.front(), sorted_values.back(), std::move(interior));
}

std::size_t SplineBasis::evaluate(double x, double out[4]) const {
  x = std::clamp(x, lo_, hi_);
  const std::size_t K = size();
  // Knot span i with knots_[i] <= x < knots_[i+1], i in [3, K-1].
  std::size_t i = static_cast<std::size_t>(std::upper_bound(knots_.begin() + 4, knots_.begin() + static_cast<std::ptrdiff_t>(K), x) -
                                           knots_.begin()) - 1;
  i = std::clamp<std::size_t>(i, 3, K - 1);
  double left[4], right[4];
  out[0] = 1.0;
  for (std::size_t j = 1; j <= 3; ++j) {
    left[j] = x - knots_[i + 1 - j];
    right[j] = knots_[i + j] - x;
    double saved = 0.0;
    for (std::size_t r = 0; r < j; ++r) {
      const double temp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
  return i - 3;
}

std::vector<double> SplineBasis::evaluate_all(double x) const {
  std::vector<double> all(size(), 0.0);
  double v[4];
  const auto first = evaluate(x, v);
  for (std::size_t k = 0; k < 4; ++k) all[first + k] = v[k];
  return all;
}

std::vector<double> second_difference_penalty(std::size_t size) {
  std::vector<double> s(size * size, 0.0);
  for (std::size_t r = 0; r + 2 < size; ++r) {
    const double d[3] = {1.0, -2.0, 1.0};
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t b = 0; b < 3; ++b) s[(r + a) * size + (r + b)] += d[a] * d[b];
    }
  }
  return s;
}

void SplineConfig::validate() const {
  if (max_basis < 4) throw std::invalid_argument("spline: max_basis must be >= 4");
  if (lambdas.empty()) {
    if (grid_points < 1) throw std::invalid_argument("spline: grid_points must be >= 1");
    if (!(lambda_lo > 0.0 && lambda_hi >= lambda_lo)) throw std::invalid_argument("spline: bad lambda range");
  }
  for (double l : lambdas) {
    if (!(l >= 0.0)) throw std::invalid_argument("spline: lambdas must be >= 0");
  }
  if (export_points < 2) throw std::invalid_argument("spline: export_points must be >= 2");
}

std::vector<double> SplineConfig::grid() const {
  if (!lambdas.empty()) return lambdas;
  std::vector<double> g;
  const double a = std::log10(lambda_lo), b = std::log10(lambda_hi);
  for (std::size_t k = 0; k < grid_points; ++k) {
    const double t = grid_points == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(grid_points - 1);
    g.push_back(std::pow(10.0, a + t * (b - a)));
  }
  return g;
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kRidge = 1e-6;  // per-row weight on unpenalized non-intercept columns

struct Term {
  std::size_t feature = 0;
  enum class Kind { spline, line, categorical } kind = Kind::spline;
  SplineBasis basis;
  std::size_t first = 0;         // first design column
  std::size_t width = 0;         // design columns used
  double lo = 0.0, hi = 1.0;     // line terms
  std::optional<std::size_t> missing_column;
  std::vector<std::optional<std::size_t>> bin_column;  // categorical
  std::vector<double> sorted_unique;
};

struct SparseRows {
  std::vector<std::size_t> ptr{0};
  std::vector<std::uint32_t> col;
  std::vector<double> val;
};

class SplineProblem {
 public:
  SplineProblem(const BinnedDataset& data, const SplineConfig& cfg) : data_(data), cfg_(cfg) {
    const auto& train = data.split.train;
    if (train.empty()) throw std::invalid_argument("spline: no training rows");
    const auto labels = data.labels();
    for (auto r : train) y_.push_back(labels[r]);
    const double rate = std::accumulate(y_.begin(), y_.end(), 0.0) / static_cast<double>(y_.size());
    if (rate <= 0.0 || rate >= 1.0) throw std::invalid_argument("spline: training labels are all one class");
    null_intercept_ = std::log(rate / (1.0 - rate));
    build_terms();
    build_rows();
    build_penalty();
  }

  std::size_t cols() const { return cols_; }

  struct Fit {
    VectorXd beta;
    double deviance = 0.0;
    double edf = 0.0;
    bool ok = false;
  };

  Fit fit(double lambda, const VectorXd* warm) const {
    const std::size_t p = cols_;
    const MatrixXd penalty = lambda * S_ + R_;
    Fit out;
    out.beta = warm ? *warm : VectorXd::Zero(static_cast<Eigen::Index>(p));
    if (!warm) out.beta[0] = null_intercept_;
    double current = objective(out.beta, penalty);
    if (!std::isfinite(current)) return out;
    MatrixXd xtwx(p, p);
    VectorXd xtwz(p);
    for (std::size_t it = 0; it < cfg_.max_iterations; ++it) {
      weighted_normal_equations(out.beta, xtwx, xtwz);
      Eigen::LDLT<MatrixXd> solver(xtwx + penalty);
      if (solver.info() != Eigen::Success) return out;
      VectorXd next = solver.solve(xtwz);
      // Step-halving keeps the penalized objective from increasing.
      double value = objective(next, penalty);
      int halvings = 0;
      while (!(value <= current) && halvings < 25) {
        next = 0.5 * (next + out.beta);
        value = objective(next, penalty);
        ++halvings;
      }
      if (!(value <= current)) break;
      out.beta = next;
      const bool done = current - value <= cfg_.tolerance * (std::abs(value) + 0.1);
      current = value;
      if (done) break;
    }
    if (!out.beta.allFinite()) return out;
    weighted_normal_equations(out.beta, xtwx, xtwz);
    Eigen::LDLT<MatrixXd> solver(xtwx + penalty);
    if (solver.info() != Eigen::Success) return out;
    out.edf = solver.solve(xtwx).trace();
    out.deviance = 2.0 * loss(out.beta);
    out.ok = std::isfinite(out.deviance) && std::isfinite(out.edf);
    return out;
  }

  AdditiveModel model(const VectorXd& beta, double lambda) const {
    AdditiveModel m;
    m.algorithm = "spline";
    m.binning_digest = data_.spec.digest();
    m.intercept = beta[0];
    for (const auto& t : terms_) m.shapes.push_back(shape(t, beta));
    m = center(m, *data_.raw, data_.split.train);
    for (auto& s : m.shapes) {
      if (auto u = s.binning.unknown_bin(); u && s.form == ShapeForm::piecewise_constant) s.values[*u] = 0.0;
    }
    m.flags.push_back("lambda=" + std::to_string(lambda));
    return m;
  }

 private:
  void build_terms() {
    const auto& train = data_.split.train;
    std::size_t next = 1;
    for (std::size_t j = 0; j < data_.features(); ++j) {
      const auto& spec = data_.spec.features[j];
      Term t;
      t.feature = j;
      bool any_missing = false;
      if (spec.kind == ColumnKind::categorical) {
        t.kind = Term::Kind::categorical;
        std::vector<double> cnt(spec.bin_count(), 0.0);
        for (auto r : train) cnt[data_.bins[j][r]] += 1.0;
        t.bin_column.resize(spec.bin_count());
        bool reference = true;
        for (std::size_t b = 0; b < cnt.size(); ++b) {
          if (cnt[b] <= 0.0) continue;
          if (reference) {
            reference = false;
            continue;
          }
          t.bin_column[b] = next++;
        }
        t.first = 0;
        terms_.push_back(std::move(t));
        continue;
      }
      const auto& col = data_.raw->column(spec.name);
      for (auto r : train) any_missing = any_missing || std::isnan(col.numeric[r]);
      t.sorted_unique = data_.unique_values[j];
      const std::size_t u = t.sorted_unique.size();
      if (u >= 3) {
        t.kind = Term::Kind::spline;
        t.basis = SplineBasis::at_quantiles(t.sorted_unique, std::min(cfg_.max_basis, u + 2));
        t.first = next;
        t.width = t.basis.size() - 1;  // last function dropped for identifiability
        next += t.width;
      } else if (u == 2) {
        t.kind = Term::Kind::line;
        t.lo = t.sorted_unique[0];
        t.hi = t.sorted_unique[1];
        t.first = next;
        t.width = 1;
        next += 1;
      } else {
        t.kind = Term::Kind::line;
        t.lo = u == 1 ? t.sorted_unique[0] : 0.0;
        t.hi = t.lo + 1.0;
        t.width = 0;
      }
      if (any_missing) t.missing_column = next++;
      terms_.push_back(std::move(t));
    }
    cols_ = next;
  }

  void row_entries(std::size_t r, std::vector<std::uint32_t>& cols, std::vector<double>& vals) const {
    cols.assign(1, 0);
    vals.assign(1, 1.0);
    for (const auto& t : terms_) {
      const auto bin = data_.bins[t.feature][r];
      if (t.kind == Term::Kind::categorical) {
        if (t.bin_column[bin]) {
          cols.push_back(static_cast<std::uint32_t>(*t.bin_column[bin]));
          vals.push_back(1.0);
        }
        continue;
      }
      const double x = data_.raw->column(data_.spec.features[t.feature].name).numeric[r];
      if (std::isnan(x)) {
        if (t.missing_column) {
          cols.push_back(static_cast<std::uint32_t>(*t.missing_column));
          vals.push_back(1.0);
        }
        continue;
      }
      if (t.kind == Term::Kind::line) {
        if (t.width == 1) {
          cols.push_back(static_cast<std::uint32_t>(t.first));
          vals.push_back((std::clamp(x, t.lo, t.hi) - t.lo) / (t.hi - t.lo));
        }
        continue;
      }
      double v[4];
      const auto k0 = t.basis.evaluate(x, v);
      for (std::size_t k = 0; k < 4; ++k) {
        if (k0 + k >= t.width || v[k] == 0.0) continue;
        cols.push_back(static_cast<std::uint32_t>(t.first + k0 + k));
        vals.push_back(v[k]);
      }
    }
  }

  void build_rows() {
    std::vector<std::uint32_t> cols;
    std::vector<double> vals;
    for (auto r : data_.split.train) {
      row_entries(r, cols, vals);
      rows_.col.insert(rows_.col.end(), cols.begin(), cols.end());
      rows_.val.insert(rows_.val.end(), vals.begin(), vals.end());
      rows_.ptr.push_back(rows_.col.size());
    }
  }

  void build_penalty() {
    const auto p = static_cast<Eigen::Index>(cols_);
    S_ = MatrixXd::Zero(p, p);
    R_ = MatrixXd::Zero(p, p);
    const double n = static_cast<double>(y_.size());
    // Gram blocks at the null curvature, to put each penalty on the data's scale.
    MatrixXd gram = MatrixXd::Zero(p, p);
    for (std::size_t i = 0; i < y_.size(); ++i) {
      for (std::size_t a = rows_.ptr[i]; a < rows_.ptr[i + 1]; ++a) {
        for (std::size_t b = rows_.ptr[i]; b < rows_.ptr[i + 1]; ++b) {
          gram(rows_.col[a], rows_.col[b]) += 0.25 * rows_.val[a] * rows_.val[b];
        }
      }
    }
    for (const auto& t : terms_) {
      if (t.kind == Term::Kind::spline) {
        const std::size_t K = t.basis.size();
        const auto full = second_difference_penalty(K);
        MatrixXd s(t.width, t.width);
        for (std::size_t a = 0; a < t.width; ++a) {
          for (std::size_t b = 0; b < t.width; ++b) s(a, b) = full[a * K + b];
        }
        const auto f = static_cast<Eigen::Index>(t.first);
        const auto w = static_cast<Eigen::Index>(t.width);
        const double scale = gram.block(f, f, w, w).norm() / s.norm();
        S_.block(f, f, w, w) = scale * s;
      } else if (t.kind == Term::Kind::line && t.width == 1) {
        R_(static_cast<Eigen::Index>(t.first), static_cast<Eigen::Index>(t.first)) = kRidge * n;
      }
      if (t.missing_column) {
        const auto c = static_cast<Eigen::Index>(*t.missing_column);
        R_(c, c) = kRidge * n;
      }
      for (const auto& c : t.bin_column) {
        if (c) R_(static_cast<Eigen::Index>(*c), static_cast<Eigen::Index>(*c)) = kRidge * n;
      }
    }
  }

  double eta(std::size_t i, const VectorXd& beta) const {
    double s = 0.0;
    for (std::size_t k = rows_.ptr[i]; k < rows_.ptr[i + 1]; ++k) s += rows_.val[k] * beta[rows_.col[k]];
    return s;
  }

  double loss(const VectorXd& beta) const {
    double l = 0.0;
    for (std::size_t i = 0; i < y_.size(); ++i) l += logistic_loss(y_[i], eta(i, beta));
    return l;
  }

  double objective(const VectorXd& beta, const MatrixXd& penalty) const {
    if (!beta.allFinite()) return std::numeric_limits<double>::infinity();
    return loss(beta) + 0.5 * beta.dot(penalty * beta);
  }

  void weighted_normal_equations(const VectorXd& beta, MatrixXd& xtwx, VectorXd& xtwz) const {
    xtwx.setZero();
    xtwz.setZero();
    for (std::size_t i = 0; i < y_.size(); ++i) {
      const double e = eta(i, beta);
      const double p = logistic(e);
      const double w = std::max(p * (1.0 - p), 1e-10);
      const double z = e + (y_[i] - p) / w;
      for (std::size_t a = rows_.ptr[i]; a < rows_.ptr[i + 1]; ++a) {
        const double wa = w * rows_.val[a];
        xtwz[rows_.col[a]] += wa * z;
        for (std::size_t b = a; b < rows_.ptr[i + 1]; ++b) xtwx(rows_.col[a], rows_.col[b]) += wa * rows_.val[b];
      }
    }
    // Columns within a row are ascending, so only the upper triangle was filled.
    xtwx.triangularView<Eigen::StrictlyLower>() = xtwx.transpose().triangularView<Eigen::StrictlyLower>();
  }

  ShapeFunction shape(const Term& t, const VectorXd& beta) const {
    const auto& spec = data_.spec.features[t.feature];
    if (t.kind == Term::Kind::categorical) {
      std::vector<double> values(spec.bin_count(), 0.0);
      for (std::size_t b = 0; b < values.size(); ++b) {
        if (t.bin_column[b]) values[b] = beta[static_cast<Eigen::Index>(*t.bin_column[b])];
      }
      return ShapeFunction::constant_over(spec, std::move(values));
    }
    const double missing = t.missing_column ? beta[static_cast<Eigen::Index>(*t.missing_column)] : 0.0;
    if (t.kind == Term::Kind::line) {
      if (t.width == 0) return ShapeFunction::linear(spec.name, {t.lo}, {0.0}, missing);
      const double w = beta[static_cast<Eigen::Index>(t.first)];
      return ShapeFunction::linear(spec.name, {t.lo, t.hi}, {0.0, w}, missing);
    }
    // Evaluate on a quantile grid of the training values.
    std::vector<double> knots;
    const auto& u = t.sorted_unique;
    const std::size_t points = std::min(cfg_.export_points, u.size());
    for (std::size_t k = 0; k < points; ++k) {
      const std::size_t idx = points == 1 ? 0 : k * (u.size() - 1) / (points - 1);
      if (knots.empty() || u[idx] > knots.back()) knots.push_back(u[idx]);
    }
    std::vector<double> values;
    for (double x : knots) {
      double v[4];
      const auto k0 = t.basis.evaluate(x, v);
      double f = 0.0;
      for (std::size_t k = 0; k < 4; ++k) {
        if (k0 + k < t.width) f += v[k] * beta[static_cast<Eigen::Index>(t.first + k0 + k)];
      }
      values.push_back(f);
    }
    return ShapeFunction::linear(spec.name, std::move(knots), std::move(values), missing);
  }

  const BinnedDataset& data_;
  const SplineConfig& cfg_;
  std::vector<double> y_;
  double null_intercept_ = 0.0;
  std::vector<Term> terms_;
  std::size_t cols_ = 1;
  SparseRows rows_;
  MatrixXd S_, R_;
};

}  // namespace

AdditiveModel fit_spline(const BinnedDataset& data, const SplineConfig& cfg, SplineTrace* trace) {
  cfg.validate();
  SplineProblem problem(data, cfg);
  auto grid = cfg.grid();
  // Largest penalty first: the smoothest fits are the most stable warm starts.
  std::vector<std::size_t> order(grid.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return grid[a] > grid[b]; });
  const double n = static_cast<double>(data.split.train.size());
  std::vector<double> gcv(grid.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<double> edf(grid.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<Eigen::VectorXd> betas(grid.size());
  Eigen::VectorXd warm;
  bool have_warm = false;
  for (auto k : order) {
    auto f = problem.fit(grid[k], have_warm ? &warm : nullptr);
    if (!f.ok || !(f.edf < n)) continue;
    gcv[k] = n * f.deviance / ((n - f.edf) * (n - f.edf));
    edf[k] = f.edf;
    betas[k] = f.beta;
    warm = f.beta;
    have_warm = true;
  }
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (std::isnan(gcv[k])) continue;
    if (!best || gcv[k] < gcv[*best]) best = k;
  }
  if (!best) throw std::runtime_error("spline: every penalty on the grid diverged");
  if (trace) {
    trace->lambdas = grid;
    trace->gcv = gcv;
    trace->edf = edf;
    trace->selected = *best;
  }
  return problem.model(betas[*best], grid[*best]);
}

}  // namespace gamlab
