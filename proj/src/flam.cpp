#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "gamlab/boosting.hpp"
#include "gamlab/smooth.hpp"

namespace gamlab {

FlamConfig FlamConfig::paper_scale() {
  FlamConfig c;
  c.path_length = 100;
  return c;
}

void FlamConfig::validate() const {
  if (path_length < 1) throw std::invalid_argument("flam: path_length must be >= 1");
  if (!(min_ratio > 0.0 && min_ratio < 1.0)) throw std::invalid_argument("flam: min_ratio must be in (0,1)");
  if (max_sweeps < 1) throw std::invalid_argument("flam: max_sweeps must be >= 1");
  if (!(tolerance > 0.0)) throw std::invalid_argument("flam: tolerance must be > 0");
}

namespace {

constexpr std::uint32_t kNoLevel = std::numeric_limits<std::uint32_t>::max();

// One fused chain: the ordered levels of a feature and the level of each row.
struct Block {
  std::size_t feature = 0;
  std::vector<std::uint32_t> train_level;
  std::vector<std::uint32_t> val_level;
  std::vector<double> counts;
  std::vector<double> theta;
  // numeric: level 0 is missing when has_missing; then unique values
  bool has_missing = false;
  std::vector<double> values;
  // categorical: bin of each level
  std::vector<std::size_t> level_bin;
};

struct State {
  double intercept = 0.0;
  std::vector<std::vector<double>> theta;
};

class Flam {
 public:
  Flam(const BinnedDataset& data, const FlamConfig& cfg) : data_(data), cfg_(cfg) {
    cfg.validate();
    const auto& split = data.split;
    if (split.train.empty()) throw std::invalid_argument("flam: no training rows");
    const auto labels = data.labels();
    for (auto r : split.train) y_.push_back(labels[r]);
    for (auto r : split.val) vy_.push_back(labels[r]);
    const double rate = std::accumulate(y_.begin(), y_.end(), 0.0) / static_cast<double>(y_.size());
    if (rate <= 0.0 || rate >= 1.0) throw std::invalid_argument("flam: training labels are all one class");
    null_intercept_ = std::log(rate / (1.0 - rate));
    for (std::size_t j = 0; j < data.features(); ++j) blocks_.push_back(make_block(j));
    reset();
  }

  void reset() {
    intercept_ = null_intercept_;
    for (auto& b : blocks_) b.theta.assign(b.counts.size(), 0.0);
    score_.assign(y_.size(), intercept_);
  }

  double lambda_max() const {
    double best = 0.0;
    const double p = logistic(null_intercept_);
    for (const auto& b : blocks_) {
      std::vector<double> g(b.counts.size(), 0.0);
      for (std::size_t i = 0; i < y_.size(); ++i) g[b.train_level[i]] += p - y_[i];
      std::vector<double> z(g.size()), w(g.size());
      for (std::size_t k = 0; k < g.size(); ++k) {
        z[k] = -4.0 * g[k] / b.counts[k];
        w[k] = b.counts[k] / 4.0;
      }
      best = std::max(best, tv_saturation(z, w));
    }
    return best;
  }

  double objective(double lambda) const {
    double f = 0.0;
    for (std::size_t i = 0; i < y_.size(); ++i) f += logistic_loss(y_[i], score_[i]);
    for (const auto& b : blocks_) {
      for (std::size_t k = 0; k + 1 < b.theta.size(); ++k) f += lambda * std::abs(b.theta[k + 1] - b.theta[k]);
    }
    return f / static_cast<double>(y_.size());
  }

  // Block coordinate descent at one lambda from the current state.
  bool solve(double lambda, std::vector<double>* objectives) {
    const double n = static_cast<double>(y_.size());
    double previous = objective(lambda);
    std::vector<double> grad(y_.size());
    for (std::size_t sweep = 0; sweep < cfg_.max_sweeps; ++sweep) {
      for (auto& b : blocks_) {
        for (std::size_t i = 0; i < y_.size(); ++i) grad[i] = logistic(score_[i]) - y_[i];
        const std::size_t L = b.counts.size();
        std::vector<double> g(L, 0.0);
        for (std::size_t i = 0; i < y_.size(); ++i) g[b.train_level[i]] += grad[i];
        // Curvature bound 1/4 on the logistic loss gives a separable quadratic majorizer.
        std::vector<double> z(L), w(L);
        for (std::size_t k = 0; k < L; ++k) {
          z[k] = b.theta[k] - 4.0 * g[k] / b.counts[k];
          w[k] = b.counts[k] / 4.0;
        }
        auto next = tv_denoise_1d(z, w, lambda);
        double shift = 0.0;
        for (std::size_t k = 0; k < L; ++k) shift += b.counts[k] * next[k];
        shift /= n;
        std::vector<double> delta(L);
        for (std::size_t k = 0; k < L; ++k) {
          delta[k] = next[k] - b.theta[k];
          b.theta[k] = next[k] - shift;
        }
        intercept_ += shift;
        for (std::size_t i = 0; i < y_.size(); ++i) score_[i] += delta[b.train_level[i]];
      }
      double gsum = 0.0;
      for (std::size_t i = 0; i < y_.size(); ++i) gsum += logistic(score_[i]) - y_[i];
      const double step = -4.0 * gsum / n;
      intercept_ += step;
      for (auto& s : score_) s += step;

      const double current = objective(lambda);
      if (objectives) objectives->push_back(current);
      if (std::abs(previous - current) <= cfg_.tolerance * std::max(1.0, std::abs(current))) return true;
      previous = current;
    }
    return false;
  }

  double val_loss() const {
    if (vy_.empty()) return std::numeric_limits<double>::quiet_NaN();
    double loss = 0.0;
    for (std::size_t v = 0; v < vy_.size(); ++v) {
      double s = intercept_;
      for (const auto& b : blocks_) {
        if (b.val_level[v] != kNoLevel) s += b.theta[b.val_level[v]];
      }
      loss += logistic_loss(vy_[v], s);
    }
    return loss / static_cast<double>(vy_.size());
  }

  State state() const {
    State s;
    s.intercept = intercept_;
    for (const auto& b : blocks_) s.theta.push_back(b.theta);
    return s;
  }

  AdditiveModel model(const State& s, double lambda, bool converged) const {
    AdditiveModel m;
    m.algorithm = "flam";
    m.binning_digest = data_.spec.digest();
    m.intercept = s.intercept;
    for (std::size_t j = 0; j < blocks_.size(); ++j) m.shapes.push_back(shape(blocks_[j], s.theta[j]));
    m = center(m, *data_.raw, data_.split.train);
    m.flags.push_back("lambda=" + std::to_string(lambda));
    if (!converged) m.flags.push_back("not_converged");
    return m;
  }

 private:
  Block make_block(std::size_t j) const {
    const auto& spec = data_.spec.features[j];
    const auto& bins = data_.bins[j];
    const auto& split = data_.split;
    Block b;
    b.feature = j;
    const auto missing_bin = spec.missing_bin();
    if (spec.kind == ColumnKind::numeric) {
      const auto& column = data_.raw->column(spec.name);
      b.values = data_.unique_values[j];
      for (auto r : split.train) b.has_missing = b.has_missing || (missing_bin && bins[r] == *missing_bin);
      const std::uint32_t offset = b.has_missing ? 1 : 0;
      b.counts.assign(b.values.size() + offset, 0.0);
      std::vector<double> mids;
      for (std::size_t k = 0; k + 1 < b.values.size(); ++k) mids.push_back(0.5 * (b.values[k] + b.values[k + 1]));
      auto level_of = [&](std::size_t r) -> std::uint32_t {
        const double x = column.numeric[r];
        if (std::isnan(x)) return b.has_missing ? 0 : kNoLevel;
        if (b.values.empty()) return kNoLevel;
        return offset + static_cast<std::uint32_t>(std::upper_bound(mids.begin(), mids.end(), x) - mids.begin());
      };
      for (auto r : split.train) {
        b.train_level.push_back(level_of(r));
        b.counts[b.train_level.back()] += 1.0;
      }
      for (auto r : split.val) b.val_level.push_back(level_of(r));
      return b;
    }
    // Categorical: occupied bins chained in order of their training label mean.
    std::vector<double> pos(spec.bin_count(), 0.0), cnt(spec.bin_count(), 0.0);
    const auto labels = data_.labels();
    for (auto r : split.train) {
      pos[bins[r]] += labels[r];
      cnt[bins[r]] += 1.0;
    }
    for (std::size_t k = 0; k < cnt.size(); ++k) {
      if (cnt[k] > 0.0) b.level_bin.push_back(k);
    }
    std::stable_sort(b.level_bin.begin(), b.level_bin.end(),
                     [&](std::size_t a, std::size_t c) { return pos[a] / cnt[a] < pos[c] / cnt[c]; });
    std::vector<std::uint32_t> level(spec.bin_count(), kNoLevel);
    for (std::size_t k = 0; k < b.level_bin.size(); ++k) {
      level[b.level_bin[k]] = static_cast<std::uint32_t>(k);
      b.counts.push_back(cnt[b.level_bin[k]]);
    }
    for (auto r : split.train) b.train_level.push_back(level[bins[r]]);
    for (auto r : split.val) b.val_level.push_back(level[bins[r]]);
    return b;
  }

  ShapeFunction shape(const Block& b, const std::vector<double>& theta) const {
    const auto& spec = data_.spec.features[b.feature];
    if (spec.kind == ColumnKind::categorical) {
      std::vector<double> values(spec.bin_count(), 0.0);
      for (std::size_t k = 0; k < b.level_bin.size(); ++k) values[b.level_bin[k]] = theta[k];
      return ShapeFunction::constant_over(spec, std::move(values));
    }
    // Piecewise-constant over unique values; cuts only where the level changes.
    FeatureBinning out;
    out.name = spec.name;
    out.kind = ColumnKind::numeric;
    out.has_missing_bin = b.has_missing;
    std::vector<double> values;
    const std::size_t offset = b.has_missing ? 1 : 0;
    for (std::size_t k = 0; k < b.values.size(); ++k) {
      const double v = theta[offset + k];
      if (values.empty()) {
        values.push_back(v);
      } else if (v != values.back()) {
        out.cuts.push_back(0.5 * (b.values[k - 1] + b.values[k]));
        values.push_back(v);
      }
    }
    if (values.empty()) values.push_back(0.0);
    if (b.has_missing) values.push_back(theta[0]);
    out.degenerate = out.cuts.empty();
    return ShapeFunction::constant_over(out, std::move(values));
  }

  const BinnedDataset& data_;
  const FlamConfig& cfg_;
  std::vector<double> y_, vy_;
  double null_intercept_ = 0.0;
  double intercept_ = 0.0;
  std::vector<Block> blocks_;
  std::vector<double> score_;
};

}  // namespace

double flam_lambda_max(const BinnedDataset& data) {
  FlamConfig cfg;
  return Flam(data, cfg).lambda_max();
}

AdditiveModel fit_flam_at(const BinnedDataset& data, double lambda, const FlamConfig& cfg, FlamTrace* trace) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("flam: lambda must be >= 0");
  Flam flam(data, cfg);
  std::vector<double> objectives;
  const bool converged = flam.solve(lambda, &objectives);
  if (trace) {
    trace->lambdas = {lambda};
    trace->val_loss = {flam.val_loss()};
    trace->sweep_objective = {objectives};
    trace->converged = {converged};
    trace->selected = 0;
  }
  return flam.model(flam.state(), lambda, converged);
}

AdditiveModel fit_flam(const BinnedDataset& data, const FlamConfig& cfg, FlamTrace* trace) {
  if (data.split.val.empty()) throw std::invalid_argument("flam: no validation rows for lambda selection");
  Flam flam(data, cfg);
  const double lmax = flam.lambda_max();
  FlamTrace local;
  FlamTrace& t = trace ? *trace : local;
  t = FlamTrace{};
  State best;
  double best_loss = std::numeric_limits<double>::infinity();
  bool best_converged = true;
  for (std::size_t k = 0; k < cfg.path_length; ++k) {
    const double frac = cfg.path_length == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(cfg.path_length - 1);
    const double lambda = lmax * std::pow(cfg.min_ratio, frac);
    std::vector<double> objectives;
    const bool converged = flam.solve(lambda, trace ? &objectives : nullptr);
    const double loss = flam.val_loss();
    t.lambdas.push_back(lambda);
    t.val_loss.push_back(loss);
    t.sweep_objective.push_back(std::move(objectives));
    t.converged.push_back(converged);
    if (loss < best_loss) {
      best_loss = loss;
      best = flam.state();
      best_converged = converged;
      t.selected = k;
    }
  }
  return flam.model(best, t.lambdas[t.selected], best_converged);
}

}  // namespace gamlab
