#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "design.hpp"
#include "gamlab/random.hpp"
#include "gamlab/smooth.hpp"

namespace gamlab {

void LinearConfig::validate() const {
  for (double c : grid()) {
    if (!(c > 0.0)) throw std::invalid_argument("linear: Cs must be positive");
  }
  if (folds < 2) throw std::invalid_argument("linear: folds must be >= 2");
  if (max_iterations < 1) throw std::invalid_argument("linear: max_iterations must be >= 1");
}

std::vector<double> LinearConfig::grid() const {
  if (!Cs.empty()) return Cs;
  std::vector<double> out;
  for (int k = 0; k < 12; ++k) out.push_back(std::pow(10.0, -4.0 + 8.0 * k / 11.0));
  return out;
}

std::vector<double> marginal_log_odds(const BinnedDataset& data, std::size_t feature) {
  const auto& spec = data.spec.features.at(feature);
  std::vector<double> pos(spec.bin_count(), 0.0), cnt(spec.bin_count(), 0.0);
  double all_pos = 0.0;
  const auto labels = data.labels();
  for (auto r : data.split.train) {
    const auto b = data.bins[feature][r];
    pos[b] += labels[r];
    cnt[b] += 1.0;
    all_pos += labels[r];
  }
  const double all_n = static_cast<double>(data.split.train.size());
  auto log_odds = [](double p, double n) {
    const double q = (p + 1.0) / (n + 2.0);
    return std::log(q / (1.0 - q));
  };
  std::vector<double> out(spec.bin_count());
  for (std::size_t b = 0; b < out.size(); ++b) {
    // Bins without training rows (unseen category, unused missing bin) take the overall rate.
    out[b] = cnt[b] > 0.0 ? log_odds(pos[b], cnt[b]) : log_odds(all_pos, all_n);
  }
  return out;
}

namespace {

using detail::Design;

// How one feature maps into design columns.
struct Encoding {
  std::size_t feature = 0;
  // plain numeric
  bool linear = false;
  std::uint32_t column = 0;
  double mean = 0.0, scale = 1.0, lo = 0.0, hi = 0.0;
  std::optional<std::uint32_t> missing_column;
  // per-bin columns (categorical, indicator bins) or marginal lookup
  std::vector<std::optional<std::uint32_t>> bin_column;
  std::vector<double> marginal;
};

struct Encoded {
  Design design;
  std::vector<Encoding> features;
};

Encoded encode_design(const BinnedDataset& data, LinearVariant variant) {
  Encoded out;
  auto& d = out.design;
  const auto& train = data.split.train;
  for (std::size_t j = 0; j < data.features(); ++j) {
    const auto& spec = data.spec.features[j];
    Encoding e;
    e.feature = j;
    if (variant == LinearVariant::marginalized) {
      e.marginal = marginal_log_odds(data, j);
      e.column = static_cast<std::uint32_t>(d.cols++);
    } else if (variant == LinearVariant::plain && spec.kind == ColumnKind::numeric) {
      const auto& col = data.raw->column(spec.name);
      double sum = 0.0, sq = 0.0, n = 0.0;
      bool any_missing = false;
      e.lo = std::numeric_limits<double>::infinity();
      e.hi = -e.lo;
      for (auto r : train) {
        const double x = col.numeric[r];
        if (std::isnan(x)) {
          any_missing = true;
          continue;
        }
        sum += x;
        sq += x * x;
        n += 1.0;
        e.lo = std::min(e.lo, x);
        e.hi = std::max(e.hi, x);
      }
      if (n > 0.0) {
        e.mean = sum / n;
        const double var = std::max(sq / n - e.mean * e.mean, 0.0);
        e.scale = std::sqrt(var);
      }
      e.linear = n > 0.0 && e.scale > 0.0;
      if (e.linear) e.column = static_cast<std::uint32_t>(d.cols++);
      if (any_missing) e.missing_column = static_cast<std::uint32_t>(d.cols++);
    } else {
      std::vector<double> cnt(spec.bin_count(), 0.0);
      for (auto r : train) cnt[data.bins[j][r]] += 1.0;
      e.bin_column.resize(spec.bin_count());
      for (std::size_t b = 0; b < cnt.size(); ++b) {
        if (cnt[b] > 0.0) e.bin_column[b] = static_cast<std::uint32_t>(d.cols++);
      }
    }
    out.features.push_back(std::move(e));
  }

  std::vector<std::uint32_t> cols;
  std::vector<double> vals;
  for (std::size_t r = 0; r < data.rows(); ++r) {
    cols.clear();
    vals.clear();
    for (const auto& e : out.features) {
      const auto bin = data.bins[e.feature][r];
      if (!e.marginal.empty()) {
        cols.push_back(e.column);
        vals.push_back(e.marginal[bin]);
      } else if (!e.bin_column.empty()) {
        if (e.bin_column[bin]) {
          cols.push_back(*e.bin_column[bin]);
          vals.push_back(1.0);
        }
      } else {
        const double x = data.raw->column(data.spec.features[e.feature].name).numeric[r];
        if (std::isnan(x)) {
          if (e.missing_column) {
            cols.push_back(*e.missing_column);
            vals.push_back(1.0);
          }
        } else if (e.linear) {
          cols.push_back(e.column);
          vals.push_back((x - e.mean) / e.scale);
        }
      }
    }
    d.add_row(cols, vals);
  }
  return out;
}

ShapeFunction export_shape(const BinnedDataset& data, const Encoding& e, const std::vector<double>& beta) {
  const auto& spec = data.spec.features[e.feature];
  if (!e.marginal.empty()) {
    std::vector<double> values(spec.bin_count());
    for (std::size_t b = 0; b < values.size(); ++b) values[b] = beta[e.column] * e.marginal[b];
    return ShapeFunction::constant_over(spec, std::move(values));
  }
  if (!e.bin_column.empty()) {
    std::vector<double> values(spec.bin_count(), 0.0);
    for (std::size_t b = 0; b < values.size(); ++b) {
      if (e.bin_column[b]) values[b] = beta[*e.bin_column[b]];
    }
    return ShapeFunction::constant_over(spec, std::move(values));
  }
  const double missing = e.missing_column ? beta[*e.missing_column] : 0.0;
  if (!e.linear) {
    return ShapeFunction::linear(spec.name, {std::isfinite(e.lo) ? e.lo : 0.0}, {0.0}, missing);
  }
  const double w = beta[e.column] / e.scale;
  return ShapeFunction::linear(spec.name, {e.lo, e.hi}, {w * (e.lo - e.mean), w * (e.hi - e.mean)}, missing);
}

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const std::size_t> rows, std::span<const double> labels,
                                                       std::size_t folds, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (auto r : rows) (labels[r] > 0.5 ? pos : neg).push_back(r);
  Rng rng(mix_seed(seed, 0xF01D));
  rng.shuffle(std::span<std::size_t>(pos));
  rng.shuffle(std::span<std::size_t>(neg));
  std::vector<std::vector<std::size_t>> out(folds);
  for (std::size_t k = 0; k < pos.size(); ++k) out[k % folds].push_back(pos[k]);
  for (std::size_t k = 0; k < neg.size(); ++k) out[(pos.size() + k) % folds].push_back(neg[k]);
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

std::vector<double> labels_of(std::span<const std::size_t> rows, std::span<const double> labels) {
  std::vector<double> y;
  y.reserve(rows.size());
  for (auto r : rows) y.push_back(labels[r]);
  return y;
}

std::string algorithm_name(const LinearConfig& cfg) {
  switch (cfg.variant) {
    case LinearVariant::indicator_bins: return "ilr";
    case LinearVariant::marginalized: return "mlr";
    case LinearVariant::plain: break;
  }
  return cfg.penalty == Penalty::l1 ? "lasso" : "lr";
}

}  // namespace

AdditiveModel fit_linear(const BinnedDataset& data, const LinearConfig& cfg, LinearTrace* trace) {
  cfg.validate();
  const auto& train = data.split.train;
  if (train.empty()) throw std::invalid_argument("linear: no training rows");
  const auto labels = data.labels();
  const auto encoded = encode_design(data, cfg.variant);
  const auto& x = encoded.design;
  const auto Cs = cfg.grid();
  const double n = static_cast<double>(train.size());

  detail::SolverOptions opts;
  opts.penalty = cfg.penalty == Penalty::l1 ? detail::PenaltyKind::l1 : detail::PenaltyKind::l2;
  opts.max_outer = cfg.max_iterations;
  opts.tolerance = cfg.tolerance;

  // Folds are fitted along the C grid from strongest to weakest penalty with warm starts.
  std::vector<std::size_t> order(Cs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return Cs[a] < Cs[b]; });
  const auto folds = stratified_folds(train, labels, cfg.folds, cfg.seed);
  std::vector<double> held_out_loss(Cs.size(), 0.0);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<std::size_t> fit_rows;
    for (std::size_t g = 0; g < folds.size(); ++g) {
      if (g != f) fit_rows.insert(fit_rows.end(), folds[g].begin(), folds[g].end());
    }
    std::sort(fit_rows.begin(), fit_rows.end());
    const auto y_fit = labels_of(fit_rows, labels);
    const auto y_out = labels_of(folds[f], labels);
    std::vector<double> beta;
    for (auto c : order) {
      opts.alpha = 1.0 / (Cs[c] * static_cast<double>(fit_rows.size()));
      detail::fit_logistic(x, fit_rows, y_fit, opts, beta);
      held_out_loss[c] += detail::mean_log_loss(x, folds[f], y_out, beta) * static_cast<double>(folds[f].size());
    }
  }
  for (auto& l : held_out_loss) l /= n;
  std::size_t best = order.front();
  for (auto c : order) {
    if (held_out_loss[c] < held_out_loss[best]) best = c;
  }

  // Refit on all training rows, following the same warm-start path up to the chosen C.
  const auto y_train = labels_of(train, labels);
  std::vector<double> beta;
  for (auto c : order) {
    opts.alpha = 1.0 / (Cs[c] * n);
    detail::fit_logistic(x, train, y_train, opts, beta);
    if (c == best) break;
  }

  if (trace) {
    trace->Cs = Cs;
    trace->cv_loss = held_out_loss;
    trace->selected_C = Cs[best];
  }

  AdditiveModel m;
  m.algorithm = algorithm_name(cfg);
  m.seed = cfg.seed;
  m.binning_digest = data.spec.digest();
  m.intercept = beta[0];
  for (const auto& e : encoded.features) m.shapes.push_back(export_shape(data, e, beta));
  m = center(m, *data.raw, train);
  for (auto& s : m.shapes) {
    if (s.form != ShapeForm::piecewise_constant) continue;
    if (auto u = s.binning.unknown_bin(); u && cfg.variant != LinearVariant::marginalized) s.values[*u] = 0.0;
  }
  return m;
}

}  // namespace gamlab
