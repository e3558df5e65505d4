#include "gamlab/boosting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "gamlab/parallel.hpp"
#include "gamlab/random.hpp"

namespace gamlab {

std::string_view to_string(BoostMode mode) {
  switch (mode) {
    case BoostMode::cyclic: return "cyclic";
    case BoostMode::best_first: return "best_first";
    case BoostMode::newton: return "newton";
    case BoostMode::newton_one_feature: return "newton_one_feature";
  }
  return "cyclic";
}

BoostMode boost_mode_from_string(std::string_view text) {
  for (auto m : {BoostMode::cyclic, BoostMode::best_first, BoostMode::newton, BoostMode::newton_one_feature}) {
    if (to_string(m) == text) return m;
  }
  throw std::invalid_argument("unknown boosting mode: " + std::string(text));
}

BoostConfig BoostConfig::paper_scale(BoostMode mode) {
  BoostConfig c;
  c.mode = mode;
  c.max_rounds = 30000;
  c.outer_bags = 100;
  c.inner_bags = 100;
  return c;
}

void BoostConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (leaves_per_stump < 2) throw std::invalid_argument("leaves_per_stump must be >= 2");
  if (!(newton_lambda >= 0.0)) throw std::invalid_argument("newton_lambda must be >= 0");
  if (max_rounds < 1) throw std::invalid_argument("max_rounds must be >= 1");
}

Histogram build_histogram(std::span<const std::uint16_t> bins, std::span<const double> g,
                          std::span<const double> h, std::size_t bin_count) {
  if (bins.size() != g.size() || g.size() != h.size()) {
    throw std::invalid_argument("build_histogram: length mismatch");
  }
  Histogram hist(bin_count);
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const std::size_t b = bins[i];
    if (b >= bin_count) throw std::out_of_range("build_histogram: bin index out of range");
    hist.grad[b] += g[i];
    hist.hess[b] += h[i];
    hist.count[b] += 1.0;
  }
  return hist;
}

namespace {

// A split survives only if it beats the simpler candidate by this relative margin,
// so that rounding noise never manufactures structure (e.g. constant gradients).
constexpr double kGainTolerance = 1e-12;

double leaf_value(double g, double h, double lambda) {
  const double d = h + lambda;
  return d > 0.0 ? -g / d : 0.0;
}

double leaf_score(double g, double h, double lambda) {
  const double d = h + lambda;
  return d > 0.0 ? g * g / d : 0.0;
}

// Evaluates a partition given by bin-space cuts with plain left-to-right sums.
StumpFit evaluate_partition(const Histogram& hist, std::vector<std::size_t> cuts, double lambda) {
  StumpFit fit;
  const std::size_t B = hist.bins();
  fit.bin_values.assign(B, 0.0);
  double g_all = 0.0, h_all = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    g_all += hist.grad[b];
    h_all += hist.hess[b];
  }
  double score = 0.0;
  std::size_t lo = 0;
  for (std::size_t k = 0; k <= cuts.size(); ++k) {
    const std::size_t hi = k < cuts.size() ? cuts[k] : B;
    double g = 0.0, h = 0.0;
    for (std::size_t b = lo; b < hi; ++b) {
      g += hist.grad[b];
      h += hist.hess[b];
    }
    const double v = leaf_value(g, h, lambda);
    fit.leaf_values.push_back(v);
    std::fill(fit.bin_values.begin() + static_cast<std::ptrdiff_t>(lo),
              fit.bin_values.begin() + static_cast<std::ptrdiff_t>(hi), v);
    score += leaf_score(g, h, lambda);
    lo = hi;
  }
  fit.gain = score - leaf_score(g_all, h_all, lambda);
  fit.cuts = std::move(cuts);
  return fit;
}

bool improves(double gain, double incumbent, double scale) {
  return gain > incumbent + kGainTolerance * (1.0 + std::abs(scale));
}

}  // namespace

StumpFit best_stump(const Histogram& hist, std::size_t leaves, double lambda) {
  if (leaves < 1) throw std::invalid_argument("best_stump: leaves must be >= 1");
  if (!(lambda >= 0.0)) throw std::invalid_argument("best_stump: lambda must be >= 0");
  const std::size_t B = hist.bins();
  if (B == 0) throw std::invalid_argument("best_stump: no bins");

  std::vector<std::size_t> occupied;
  for (std::size_t b = 0; b < B; ++b) {
    if (hist.count[b] > 0.0) occupied.push_back(b);
  }
  const std::size_t m = occupied.size();
  StumpFit best = evaluate_partition(hist, {}, lambda);
  const std::size_t max_leaves = std::min(leaves, m);
  if (max_leaves < 2) return best;

  std::vector<double> pg(m + 1, 0.0), ph(m + 1, 0.0);
  for (std::size_t t = 0; t < m; ++t) {
    pg[t + 1] = pg[t] + hist.grad[occupied[t]];
    ph[t + 1] = ph[t] + hist.hess[occupied[t]];
  }
  auto segment = [&](std::size_t s, std::size_t e) { return leaf_score(pg[e] - pg[s], ph[e] - ph[s], lambda); };

  // value[k][e]: best score of splitting occupied [0, e) into k+1 segments.
  const double neg = -std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> value(max_leaves, std::vector<double>(m + 1, neg));
  std::vector<std::vector<std::size_t>> from(max_leaves, std::vector<std::size_t>(m + 1, 0));
  for (std::size_t e = 1; e <= m; ++e) value[0][e] = segment(0, e);

  const double root_score = leaf_score(pg[m], ph[m], lambda);
  for (std::size_t k = 1; k < max_leaves; ++k) {
    const bool last = k + 1 == max_leaves;
    for (std::size_t e = last ? m : k + 1; e <= m; ++e) {
      for (std::size_t s = k; s < e; ++s) {
        const double v = value[k - 1][s] + segment(s, e);
        if (v > value[k][e]) {
          value[k][e] = v;
          from[k][e] = s;
        }
      }
    }
    std::vector<std::size_t> cuts(k);
    std::size_t e = m;
    for (std::size_t kk = k; kk >= 1; --kk) {
      const std::size_t s = from[kk][e];
      cuts[kk - 1] = occupied[s - 1] + 1;
      e = s;
    }
    auto candidate = evaluate_partition(hist, std::move(cuts), lambda);
    if (improves(candidate.gain, best.gain, root_score + candidate.gain)) best = std::move(candidate);
  }
  return best;
}

StumpFit best_stump(std::span<const std::uint16_t> bins, std::span<const double> g, std::span<const double> h,
                    std::size_t bin_count, std::size_t leaves, double lambda) {
  return best_stump(build_histogram(bins, g, h, bin_count), leaves, lambda);
}

StumpFit best_indicator_stump(const Histogram& hist, double lambda) {
  const std::size_t B = hist.bins();
  if (B == 0) throw std::invalid_argument("best_indicator_stump: no bins");
  double g_all = 0.0, h_all = 0.0, n_all = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    g_all += hist.grad[b];
    h_all += hist.hess[b];
    n_all += hist.count[b];
  }
  const double root = leaf_score(g_all, h_all, lambda);
  StumpFit fit;
  fit.bin_values.assign(B, leaf_value(g_all, h_all, lambda));
  fit.leaf_values = {fit.bin_values.empty() ? 0.0 : fit.bin_values[0]};
  std::optional<std::size_t> chosen;
  double best_score = root;
  for (std::size_t b = 0; b < B; ++b) {
    if (hist.count[b] <= 0.0 || hist.count[b] >= n_all) continue;
    const double score = leaf_score(hist.grad[b], hist.hess[b], lambda) +
                         leaf_score(g_all - hist.grad[b], h_all - hist.hess[b], lambda);
    if (improves(score, best_score, score)) {
      best_score = score;
      chosen = b;
    }
  }
  if (!chosen) return fit;
  const std::size_t c = *chosen;
  const double inside = leaf_value(hist.grad[c], hist.hess[c], lambda);
  const double outside = leaf_value(g_all - hist.grad[c], h_all - hist.hess[c], lambda);
  std::fill(fit.bin_values.begin(), fit.bin_values.end(), outside);
  fit.bin_values[c] = inside;
  // Indicator split: cuts holds the selected bin, leaves are {rest, selected}.
  fit.cuts = {c};
  fit.leaf_values = {outside, inside};
  fit.gain = best_score - root;
  return fit;
}

void GradientState::refresh(std::span<const double> labels) {
  grad.resize(score.size());
  hess.resize(score.size());
  for (std::size_t i = 0; i < score.size(); ++i) {
    const double p = logistic(score[i]);
    grad[i] = p - labels[i];
    hess[i] = std::max(p * (1.0 - p), kHessianFloor);
  }
}

double logistic_loss(double label, double score) {
  const double softplus = score > 0.0 ? score + std::log1p(std::exp(-score)) : std::log1p(std::exp(score));
  return softplus - label * score;
}

namespace {

struct Problem {
  const BinnedDataset& data;
  const BoostConfig& cfg;
  std::size_t features = 0;
  std::vector<std::size_t> bin_counts;
  std::vector<bool> indicator;
  double intercept = 0.0;
};

Problem make_problem(const BinnedDataset& data, const BoostConfig& cfg) {
  cfg.validate();
  if (data.split.train.empty()) throw std::invalid_argument("boosting: no training rows");
  if (data.split.val.empty()) throw std::invalid_argument("boosting: no validation rows");
  if (data.features() == 0) throw std::invalid_argument("boosting: no features");
  Problem p{data, cfg, 0, {}, {}, 0.0};
  p.features = data.features();
  double positives = 0.0;
  for (auto r : data.split.train) positives += data.labels()[r];
  const double rate = positives / static_cast<double>(data.split.train.size());
  if (rate <= 0.0 || rate >= 1.0) throw std::invalid_argument("boosting: training labels are all one class");
  p.intercept = std::log(rate / (1.0 - rate));
  const bool newton = cfg.mode == BoostMode::newton || cfg.mode == BoostMode::newton_one_feature;
  for (const auto& b : data.spec.features) {
    p.bin_counts.push_back(b.bin_count());
    p.indicator.push_back(newton && cfg.one_hot_categoricals && b.kind == ColumnKind::categorical);
  }
  return p;
}

// One outer bag: a bootstrap replicate of the training rows boosted to its
// best validation iterate.
class BagRun {
 public:
  BagRun(const Problem& p, std::size_t bag, BoostTrace* trace) : p_(p), rng_(mix_seed(p.cfg.seed, bag)), trace_(trace) {
    const auto& train = p.data.split.train;
    std::vector<std::uint32_t> counts(train.size(), 1);
    if (p.cfg.outer_bags > 0) counts = bootstrap_counts(rng_, train.size(), train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (counts[i] == 0) continue;
      rows_.push_back(train[i]);
      weight_.push_back(counts[i]);
    }
    const auto labels = p.data.labels();
    for (auto r : rows_) y_.push_back(labels[r]);
    for (auto r : p.data.split.val) vy_.push_back(labels[r]);
    bins_.resize(p.features);
    vbins_.resize(p.features);
    for (std::size_t j = 0; j < p.features; ++j) {
      for (auto r : rows_) bins_[j].push_back(p.data.bins[j][r]);
      for (auto r : p.data.split.val) vbins_[j].push_back(p.data.bins[j][r]);
    }
    const bool bagged_updates = p.cfg.inner_bags > 0 &&
                                (p.cfg.mode == BoostMode::cyclic || p.cfg.mode == BoostMode::best_first);
    if (bagged_updates) draw_inner_bags();
    state_.score.assign(rows_.size(), p.intercept);
    vscore_.assign(vy_.size(), p.intercept);
    shapes_.resize(p.features);
    for (std::size_t j = 0; j < p.features; ++j) shapes_[j].assign(p.bin_counts[j], 0.0);
    best_shapes_ = shapes_;
    if (trace_) {
      trace_->updates_per_feature.assign(p.features, 0);
      if (trace_->record_loss) trace_->bag_loss.push_back(bag_loss());
    }
  }

  std::vector<std::vector<double>> run() {
    switch (p_.cfg.mode) {
      case BoostMode::cyclic: run_cyclic(); break;
      case BoostMode::best_first: run_best_first(); break;
      case BoostMode::newton:
      case BoostMode::newton_one_feature: run_newton(); break;
    }
    return best_shapes_;
  }

 private:
  void draw_inner_bags() {
    // Inner bags resample the outer bag's row multiset; drawn once, reused for every update.
    std::vector<double> cumulative(weight_.size());
    std::partial_sum(weight_.begin(), weight_.end(), cumulative.begin());
    const auto total = static_cast<std::size_t>(cumulative.empty() ? 0.0 : cumulative.back());
    inner_.assign(p_.cfg.inner_bags, std::vector<double>(rows_.size(), 0.0));
    for (auto& w : inner_) {
      for (std::size_t d = 0; d < total; ++d) {
        const double u = static_cast<double>(rng_.index(total));
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        w[static_cast<std::size_t>(it - cumulative.begin())] += 1.0;
      }
    }
  }

  double bag_loss() const {
    double loss = 0.0, total = 0.0;
    for (std::size_t i = 0; i < y_.size(); ++i) {
      loss += weight_[i] * logistic_loss(y_[i], state_.score[i]);
      total += weight_[i];
    }
    return loss / total;
  }

  double val_loss() const {
    double loss = 0.0;
    for (std::size_t i = 0; i < vy_.size(); ++i) loss += logistic_loss(vy_[i], vscore_[i]);
    return loss / static_cast<double>(vy_.size());
  }

  Histogram histogram(std::size_t j, const std::vector<double>& w) const {
    Histogram hist(p_.bin_counts[j]);
    const auto& b = bins_[j];
    for (std::size_t i = 0; i < b.size(); ++i) {
      const double wi = w[i];
      if (wi == 0.0) continue;
      hist.grad[b[i]] += wi * state_.grad[i];
      hist.hess[b[i]] += wi * state_.hess[i];
      hist.count[b[i]] += wi;
    }
    return hist;
  }

  StumpFit stump(std::size_t j, const Histogram& hist) const {
    if (p_.indicator[j]) return best_indicator_stump(hist, lambda());
    return best_stump(hist, p_.cfg.leaves_per_stump, lambda());
  }

  double lambda() const {
    const bool newton = p_.cfg.mode == BoostMode::newton || p_.cfg.mode == BoostMode::newton_one_feature;
    return newton ? p_.cfg.newton_lambda : 0.0;
  }

  // Delta for feature j averaged over the inner bags (or fitted on the bag itself).
  std::vector<double> bagged_delta(std::size_t j) const {
    if (inner_.empty()) return stump(j, histogram(j, weight_)).bin_values;
    std::vector<double> delta(p_.bin_counts[j], 0.0);
    for (const auto& w : inner_) {
      const auto fit = stump(j, histogram(j, w));
      for (std::size_t b = 0; b < delta.size(); ++b) delta[b] += fit.bin_values[b];
    }
    for (auto& d : delta) d /= static_cast<double>(inner_.size());
    return delta;
  }

  void apply(std::size_t j, std::vector<double> delta) {
    for (auto& d : delta) d *= p_.cfg.learning_rate;
    for (std::size_t b = 0; b < delta.size(); ++b) shapes_[j][b] += delta[b];
    for (std::size_t i = 0; i < rows_.size(); ++i) state_.score[i] += delta[bins_[j][i]];
    for (std::size_t i = 0; i < vy_.size(); ++i) vscore_[i] += delta[vbins_[j][i]];
    if (trace_) {
      ++trace_->updates_per_feature[j];
      trace_->sequence.push_back(j);
      if (trace_->record_loss) trace_->bag_loss.push_back(bag_loss());
    }
  }

  // Returns false once validation loss has not improved for `patience` checks.
  bool check(std::size_t patience) {
    const double loss = val_loss();
    if (loss < best_loss_) {
      best_loss_ = loss;
      best_shapes_ = shapes_;
      stale_ = 0;
      if (trace_) trace_->kept_updates = trace_->sequence.size();
      return true;
    }
    return ++stale_ < patience;
  }

  void finish_round() {
    if (trace_) ++trace_->rounds;
  }

  void run_cyclic() {
    for (std::size_t cycle = 0; cycle < p_.cfg.max_rounds; ++cycle) {
      for (std::size_t j = 0; j < p_.features; ++j) {
        state_.refresh(y_);
        apply(j, bagged_delta(j));
      }
      finish_round();
      if (!check(p_.cfg.patience)) break;
    }
  }

  std::size_t argmax_gain() const {
    std::size_t chosen = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < p_.features; ++j) {
      const double gain = stump(j, histogram(j, weight_)).gain;
      if (gain > best) {
        best = gain;
        chosen = j;
      }
    }
    return chosen;
  }

  void run_best_first() {
    const std::size_t rounds = p_.cfg.max_rounds * p_.features;
    const std::size_t patience = p_.cfg.patience * p_.features;
    for (std::size_t round = 0; round < rounds; ++round) {
      state_.refresh(y_);
      const std::size_t j = argmax_gain();
      apply(j, bagged_delta(j));
      finish_round();
      if (!check(patience)) break;
    }
  }

  void run_newton() {
    for (std::size_t round = 0; round < p_.cfg.max_rounds; ++round) {
      state_.refresh(y_);
      std::size_t j;
      if (p_.cfg.mode == BoostMode::newton_one_feature) {
        j = rng_.index(p_.features);
      } else {
        j = argmax_gain();
      }
      apply(j, stump(j, histogram(j, weight_)).bin_values);
      finish_round();
      if (!check(p_.cfg.patience)) break;
    }
  }

  const Problem& p_;
  Rng rng_;
  BoostTrace* trace_;
  std::vector<std::size_t> rows_;
  std::vector<double> weight_;
  std::vector<double> y_, vy_;
  std::vector<std::vector<std::uint16_t>> bins_, vbins_;
  std::vector<std::vector<double>> inner_;
  GradientState state_;
  std::vector<double> vscore_;
  std::vector<std::vector<double>> shapes_, best_shapes_;
  double best_loss_ = std::numeric_limits<double>::infinity();
  std::size_t stale_ = 0;
};

std::string algorithm_name(BoostMode mode) {
  switch (mode) {
    case BoostMode::cyclic: return "ebm";
    case BoostMode::best_first: return "ebm-bf";
    case BoostMode::newton: return "xgb";
    case BoostMode::newton_one_feature: return "xgb-l2";
  }
  return "ebm";
}

AdditiveModel fit_mode(const BinnedDataset& data, const BoostConfig& cfg, BoostTrace* trace) {
  const auto p = make_problem(data, cfg);
  const std::size_t bags = std::max<std::size_t>(cfg.outer_bags, 1);
  std::vector<std::vector<std::vector<double>>> results(bags);
  std::vector<BoostTrace> traces(bags);
  for (auto& t : traces) t.record_loss = trace && trace->record_loss;
  parallel_for(bags, cfg.threads, [&](std::size_t bag) {
    BagRun run(p, bag, trace ? &traces[bag] : nullptr);
    results[bag] = run.run();
  });

  AdditiveModel m;
  m.algorithm = algorithm_name(cfg.mode);
  m.seed = cfg.seed;
  m.binning_digest = data.spec.digest();
  m.intercept = p.intercept;
  for (std::size_t j = 0; j < p.features; ++j) {
    std::vector<double> avg(p.bin_counts[j], 0.0);
    for (const auto& r : results) {
      for (std::size_t b = 0; b < avg.size(); ++b) avg[b] += r[j][b];
    }
    for (auto& v : avg) v /= static_cast<double>(bags);
    m.shapes.push_back(ShapeFunction::constant_over(data.spec.features[j], std::move(avg)));
  }
  m = center(m, *data.raw, data.split.train);
  for (auto& s : m.shapes) {
    if (auto u = s.binning.unknown_bin()) s.values[*u] = 0.0;
  }

  if (trace) {
    std::vector<std::size_t> counts(p.features, 0);
    for (const auto& t : traces) {
      for (std::size_t j = 0; j < p.features; ++j) counts[j] += t.updates_per_feature[j];
    }
    const bool record = trace->record_loss;
    *trace = std::move(traces[0]);
    trace->record_loss = record;
    trace->updates_per_feature = std::move(counts);
  }
  return m;
}

void require_mode(const BoostConfig& cfg, std::initializer_list<BoostMode> allowed, const char* who) {
  for (auto m : allowed) {
    if (cfg.mode == m) return;
  }
  throw std::invalid_argument(std::string(who) + ": unsupported mode " + std::string(to_string(cfg.mode)));
}

}  // namespace

AdditiveModel fit_cyclic(const BinnedDataset& data, const BoostConfig& cfg, BoostTrace* trace) {
  require_mode(cfg, {BoostMode::cyclic}, "fit_cyclic");
  return fit_mode(data, cfg, trace);
}

AdditiveModel fit_best_first(const BinnedDataset& data, const BoostConfig& cfg, BoostTrace* trace) {
  require_mode(cfg, {BoostMode::best_first}, "fit_best_first");
  return fit_mode(data, cfg, trace);
}

AdditiveModel fit_newton(const BinnedDataset& data, const BoostConfig& cfg, BoostTrace* trace) {
  require_mode(cfg, {BoostMode::newton, BoostMode::newton_one_feature}, "fit_newton");
  return fit_mode(data, cfg, trace);
}

AdditiveModel fit_boosted(const BinnedDataset& data, const BoostConfig& cfg, BoostTrace* trace) {
  return fit_mode(data, cfg, trace);
}

}  // namespace gamlab
