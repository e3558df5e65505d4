#include "gamlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "gamlab/parallel.hpp"
#include "gamlab/random.hpp"

namespace gamlab {

namespace {

constexpr double kClip = 1e-12;

double clip(double p) { return std::clamp(p, kClip, 1.0 - kClip); }

double pointwise_ce(double p, double t) {
  p = clip(p);
  return -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
}

// KL(a || b) for Bernoulli distributions; zero when a == b.
double pointwise_kl(double a, double b) {
  if (a == b) return 0.0;
  b = clip(b);
  double d = 0.0;
  if (a > 0.0) d += a * std::log(a / b);
  if (a < 1.0) d += (1.0 - a) * std::log((1.0 - a) / (1.0 - b));
  return std::max(d, 0.0);
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order = all_rows(n);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positives = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] >= 0.5) {
        positives += 1.0;
        rank_sum += rank;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) throw std::invalid_argument("auc: labels contain a single class");
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

double cross_entropy(std::span<const double> p, std::span<const double> t) {
  if (p.size() != t.size()) throw std::invalid_argument("cross_entropy: length mismatch");
  if (p.empty()) throw std::invalid_argument("cross_entropy: no rows");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += pointwise_ce(p[i], t[i]);
  return s / static_cast<double>(p.size());
}

Evaluation evaluate(const AdditiveModel& m, const RawDataset& data, std::span<const std::size_t> rows) {
  const auto probas = predict_probas(m, data);
  std::vector<double> p, t;
  for (auto r : rows) {
    p.push_back(probas[r]);
    t.push_back(data.labels[r]);
  }
  Evaluation e;
  e.n = rows.size();
  e.cross_entropy = cross_entropy(p, t);
  try {
    e.auc = auc(p, t);
  } catch (const std::invalid_argument&) {
    e.auc = std::nan("");
  }
  return e;
}

// ---- Feature density -------------------------------------------------------

double density_from_errors(std::span<const double> errors, bool* degenerate) {
  if (degenerate) *degenerate = false;
  if (errors.size() < 2 || !(errors.front() > errors.back())) {
    if (degenerate) *degenerate = true;
    return 50.0;
  }
  const std::size_t d = errors.size() - 1;
  const double e0 = errors.front(), ed = errors.back();
  std::vector<double> e(errors.size());
  for (std::size_t k = 0; k <= d; ++k) e[k] = std::clamp((errors[k] - ed) / (e0 - ed), 0.0, 1.0);
  e.front() = 1.0;
  e.back() = 0.0;
  double area = 0.0;
  for (std::size_t k = 0; k < d; ++k) area += 0.5 * (e[k] + e[k + 1]);
  return 100.0 * area / static_cast<double>(d);
}

DensityCurve feature_density(const AdditiveModel& model, const BinnedDataset& data) {
  const auto& split = data.split;
  if (split.train.empty() || split.val.empty() || split.test.empty()) {
    throw std::invalid_argument("feature_density: needs train, validation and test rows");
  }
  const auto m = center(model, *data.raw, split.train);
  const auto contrib = shape_contributions(m, *data.raw);
  const auto labels = data.labels();

  auto loss_on = [&](const std::vector<std::size_t>& rows, const std::vector<double>& score, const std::vector<double>* extra) {
    double s = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double z = score[i] + (extra ? (*extra)[rows[i]] : 0.0);
      s += pointwise_ce(logistic(z), labels[rows[i]]);
    }
    return s / static_cast<double>(rows.size());
  };

  std::vector<double> val_score(split.val.size(), m.intercept), test_score(split.test.size(), m.intercept);
  DensityCurve c;
  c.val_error.push_back(loss_on(split.val, val_score, nullptr));
  c.test_error.push_back(loss_on(split.test, test_score, nullptr));
  std::vector<bool> used(m.shapes.size(), false);
  for (std::size_t step = 0; step < m.shapes.size(); ++step) {
    std::size_t best = m.shapes.size();
    double best_loss = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m.shapes.size(); ++j) {
      if (used[j]) continue;
      const double l = loss_on(split.val, val_score, &contrib[j]);
      if (l < best_loss || best == m.shapes.size()) {
        best = j;
        best_loss = l;
      }
    }
    used[best] = true;
    for (std::size_t i = 0; i < split.val.size(); ++i) val_score[i] += contrib[best][split.val[i]];
    for (std::size_t i = 0; i < split.test.size(); ++i) test_score[i] += contrib[best][split.test[i]];
    c.added.push_back(m.shapes[best].feature);
    c.val_error.push_back(best_loss);
    c.test_error.push_back(loss_on(split.test, test_score, nullptr));
  }
  c.density = density_from_errors(c.test_error, &c.degenerate);
  return c;
}

// ---- Empirical bias and variance --------------------------------------------

namespace {

// Stratified draw of round(fraction * class size) rows per class.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_take(
    std::span<const std::size_t> rows, std::span<const double> labels, double fraction, Rng& rng) {
  std::vector<std::size_t> pos, neg;
  for (auto r : rows) (labels[r] >= 0.5 ? pos : neg).push_back(r);
  rng.shuffle(std::span(pos));
  rng.shuffle(std::span(neg));
  std::vector<std::size_t> taken, rest;
  for (auto* cls : {&pos, &neg}) {
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(cls->size())));
    taken.insert(taken.end(), cls->begin(), cls->begin() + static_cast<std::ptrdiff_t>(k));
    rest.insert(rest.end(), cls->begin() + static_cast<std::ptrdiff_t>(k), cls->end());
  }
  std::sort(taken.begin(), taken.end());
  std::sort(rest.begin(), rest.end());
  return {std::move(taken), std::move(rest)};
}

BiasVarianceRound run_round(const Trainer& trainer, const std::shared_ptr<const RawDataset>& data,
                            const BiasVarianceOptions& o, std::size_t round) {
  BiasVarianceRound out;
  const auto labels = std::span<const double>(data->labels);
  Rng rng(mix_seed(o.seed, 0xB1A5'0000ULL + round));
  const auto everything = all_rows(data->rows());
  auto [test, pool] = stratified_take(everything, labels, o.test_fraction, rng);
  if (test.empty() || pool.empty()) throw std::invalid_argument("bias_variance: dataset too small to split");

  std::vector<std::vector<double>> preds;  // [rep][test row]
  try {
    for (std::size_t k = 0; k < o.reps; ++k) {
      auto [sub, unused] = stratified_take(pool, labels, o.subsample, rng);
      auto [val, train] = stratified_take(sub, labels, o.val_fraction, rng);
      SplitPlan plan;
      plan.seed = mix_seed(o.seed, round * 1000 + k);
      plan.train = std::move(train);
      plan.val = std::move(val);
      plan.test = test;
      const auto spec = fit_binning(*data, plan.train, o.max_bins);
      const auto binned = encode(data, spec, std::move(plan));
      const auto m = trainer(binned, mix_seed(o.seed, round * 1000 + k));
      const auto p = predict_probas(m, *data);
      std::vector<double> pt;
      pt.reserve(test.size());
      for (auto r : test) pt.push_back(p[r]);
      preds.push_back(std::move(pt));
    }
  } catch (const std::exception& e) {
    out.error = e.what();
    return out;
  }

  const double reps = static_cast<double>(o.reps);
  double bias = 0.0, variance = 0.0, total = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    // Shifted mean: identical predictions average to themselves exactly.
    const double first = preds[0][i];
    double shift = 0.0;
    for (const auto& p : preds) shift += p[i] - first;
    const double ym = first + shift / reps;
    const double t = labels[test[i]];
    if (o.loss == BiasVarianceLoss::squared) {
      bias += (t - ym) * (t - ym);
      for (const auto& p : preds) {
        variance += (ym - p[i]) * (ym - p[i]);
        total += (t - p[i]) * (t - p[i]);
      }
    } else {
      bias += pointwise_ce(ym, t);
      for (const auto& p : preds) {
        variance += pointwise_kl(ym, p[i]);
        total += pointwise_ce(p[i], t);
      }
    }
  }
  const double n = static_cast<double>(test.size());
  out.ok = true;
  out.empirical_bias = bias / n;
  out.variance = variance / (n * reps);
  out.total = total / (n * reps);
  return out;
}

}  // namespace

BiasVarianceEstimate bias_variance(const Trainer& trainer, std::shared_ptr<const RawDataset> data,
                                   const BiasVarianceOptions& o) {
  if (!data) throw std::invalid_argument("bias_variance: null dataset");
  if (o.rounds == 0 || o.reps == 0) throw std::invalid_argument("bias_variance: rounds and reps must be positive");
  if (!(o.subsample > 0.0 && o.subsample <= 1.0)) throw std::invalid_argument("bias_variance: subsample must be in (0, 1]");
  if (o.min_rounds > o.rounds) throw std::invalid_argument("bias_variance: min_rounds exceeds rounds");
  BiasVarianceEstimate est;
  est.rounds.resize(o.rounds);
  parallel_for(o.rounds, o.threads, [&](std::size_t r) { est.rounds[r] = run_round(trainer, data, o, r); });
  for (std::size_t r = 0; r < o.rounds; ++r) {
    const auto& round = est.rounds[r];
    if (!round.ok) {
      est.flags.push_back("round " + std::to_string(r) + " discarded: " + round.error);
      continue;
    }
    ++est.rounds_used;
    est.empirical_bias += round.empirical_bias;
    est.variance += round.variance;
    est.total += round.total;
  }
  if (est.rounds_used < o.min_rounds) {
    throw std::runtime_error("bias_variance: only " + std::to_string(est.rounds_used) + " of " +
                             std::to_string(o.rounds) + " rounds succeeded");
  }
  const double used = static_cast<double>(est.rounds_used);
  est.empirical_bias /= used;
  est.variance /= used;
  est.total /= used;
  return est;
}

// ---- Shape distance and semi-synthetic fidelity ----------------------------

double shape_distance(const AdditiveModel& a, const AdditiveModel& b, const BinnedDataset& data) {
  std::set<std::string> fa, fb;
  for (const auto& s : a.shapes) fa.insert(s.feature);
  for (const auto& s : b.shapes) fb.insert(s.feature);
  if (fa != fb || fa.size() != a.shapes.size() || fb.size() != b.shapes.size()) {
    throw std::invalid_argument("shape_distance: models cover different features");
  }
  const auto& raw = *data.raw;
  const auto da = center(discretize(a, data.spec), raw);
  const auto db = center(discretize(b, data.spec), raw);
  double total = 0.0;
  for (const auto& s : da.shapes) {
    const auto va = s.evaluate(raw.column(s.feature));
    const auto vb = db.shape(s.feature).evaluate(raw.column(s.feature));
    for (std::size_t r = 0; r < va.size(); ++r) total += std::abs(va[r] - vb[r]);
  }
  return total / static_cast<double>(raw.rows());
}

LabelMode label_mode_from_string(std::string_view text) {
  if (text == "bernoulli") return LabelMode::bernoulli;
  if (text == "soft") return LabelMode::soft;
  throw std::invalid_argument("unknown label mode '" + std::string(text) + "'");
}

RawDataset make_semisynthetic(const AdditiveModel& generator, const RawDataset& data, std::uint64_t seed,
                              LabelMode mode) {
  RawDataset out = data;
  out.name = data.name + "+" + (generator.algorithm.empty() ? std::string("generator") : generator.algorithm);
  const auto p = predict_probas(generator, data);
  Rng rng(mix_seed(seed, 0x5E41));
  for (std::size_t r = 0; r < p.size(); ++r) {
    out.labels[r] = mode == LabelMode::soft ? p[r] : (rng.bernoulli(p[r]) ? 1.0 : 0.0);
  }
  return out;
}

std::vector<double> fidelity_scores(std::span<const double> d, bool* flat) {
  if (flat) *flat = false;
  if (d.empty()) return {};
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  std::vector<double> out(d.size(), 100.0);
  if (*hi == *lo) {
    if (flat) *flat = true;
    return out;
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    out[i] = d[i] == *lo ? 100.0 : d[i] == *hi ? 0.0 : 100.0 * (*hi - d[i]) / (*hi - *lo);
  }
  return out;
}

FidelityTable worst_case_fidelity(const std::vector<NamedTrainer>& candidates,
                                  const std::vector<NamedTrainer>& generators,
                                  std::shared_ptr<const RawDataset> data, const FidelityOptions& o) {
  if (!data) throw std::invalid_argument("worst_case_fidelity: null dataset");
  if (candidates.size() < 2) throw std::invalid_argument("worst_case_fidelity: needs at least two candidates");
  if (generators.empty()) throw std::invalid_argument("worst_case_fidelity: needs a generator");
  FidelityTable t;
  for (const auto& c : candidates) t.candidates.push_back(c.name);
  for (const auto& g : generators) t.generators.push_back(g.name);
  const std::size_t G = generators.size(), C = candidates.size();

  const auto base = prepare(data, o.seed, o.max_bins);
  t.ground_truth.resize(G);
  std::vector<BinnedDataset> semi(G);
  parallel_for(G, o.threads, [&](std::size_t g) {
    auto truth = generators[g].trainer(base, mix_seed(o.seed, g));
    truth = center(truth, *data);
    auto raw = std::make_shared<const RawDataset>(make_semisynthetic(truth, *data, mix_seed(o.seed, 0x6E00 + g),
                                                                     o.label_mode));
    semi[g] = prepare(raw, o.seed, o.max_bins);
    t.ground_truth[g] = std::move(truth);
  });

  t.distance.assign(G, std::vector<double>(C, 0.0));
  t.test_auc.assign(G, std::vector<double>(C, 0.0));
  parallel_for(G * C, o.threads, [&](std::size_t cell) {
    const std::size_t g = cell / C, c = cell % C;
    const auto m = candidates[c].trainer(semi[g], o.seed);
    t.distance[g][c] = shape_distance(m, t.ground_truth[g], semi[g]);
    t.test_auc[g][c] = evaluate(m, *semi[g].raw, semi[g].split.test).auc;
  });

  t.worst_case.assign(C, 100.0);
  for (std::size_t g = 0; g < G; ++g) {
    bool flat = false;
    t.score.push_back(fidelity_scores(t.distance[g], &flat));
    if (flat) t.flags.push_back("all candidates tie on generator " + t.generators[g]);
    for (std::size_t c = 0; c < C; ++c) t.worst_case[c] = std::min(t.worst_case[c], t.score[g][c]);
  }
  return t;
}

// ---- Rankings ----------------------------------------------------------------

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order = all_rows(values.size());
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

std::vector<double> normalize_0_100(std::span<const double> values) {
  if (values.empty()) return {};
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  std::vector<double> out(values.size(), 100.0);
  if (*hi == *lo) return out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = values[i] == *hi ? 100.0 : values[i] == *lo ? 0.0 : 100.0 * (values[i] - *lo) / (*hi - *lo);
  }
  return out;
}

std::map<std::string, double> rank_gap(const MetricTable& auc_table, const MetricTable& fidelity_table) {
  if (auc_table.size() != fidelity_table.size()) throw std::invalid_argument("rank_gap: dataset sets differ");
  std::map<std::string, double> gap;
  for (const auto& [dataset, aucs] : auc_table) {
    const auto it = fidelity_table.find(dataset);
    if (it == fidelity_table.end()) throw std::invalid_argument("rank_gap: '" + dataset + "' missing from fidelity table");
    const auto& fids = it->second;
    if (aucs.size() != fids.size()) throw std::invalid_argument("rank_gap: algorithm sets differ on '" + dataset + "'");
    std::vector<std::string> names;
    std::vector<double> a, f;
    for (const auto& [name, value] : aucs) {
      const auto jt = fids.find(name);
      if (jt == fids.end()) throw std::invalid_argument("rank_gap: '" + name + "' missing on '" + dataset + "'");
      names.push_back(name);
      a.push_back(value);
      f.push_back(jt->second);
    }
    const auto ra = average_ranks(a), rf = average_ranks(f);
    for (std::size_t i = 0; i < names.size(); ++i) gap[names[i]] += std::max(0.0, rf[i] - ra[i]);
  }
  if (!auc_table.empty()) {
    for (auto& [name, v] : gap) v /= static_cast<double>(auc_table.size());
  }
  return gap;
}

// ---- Subgroups and ablation -------------------------------------------------------

namespace {

std::string group_key(const Column& col, std::size_t r) {
  if (col.is_missing(r)) return "(missing)";
  if (col.kind == ColumnKind::categorical) return col.dictionary[static_cast<std::size_t>(col.codes[r])];
  std::ostringstream s;
  s << col.numeric[r];
  return s.str();
}

}  // namespace

SubgroupReport subgroup_report(const AdditiveModel& m, const RawDataset& data, std::string_view group_column,
                               const AdditiveModel* reference, std::span<const std::size_t> rows_in) {
  const auto& col = data.column(group_column);
  const auto rows = rows_in.empty() ? all_rows(data.rows()) : std::vector<std::size_t>(rows_in.begin(), rows_in.end());
  const auto p = predict_probas(m, data);
  std::vector<double> pr;
  if (reference) pr = predict_probas(*reference, data);

  struct Acc {
    std::size_t n = 0;
    double loss = 0.0, ref = 0.0;
  };
  std::map<std::string, Acc> acc;
  Acc all;
  for (auto r : rows) {
    const double l = pointwise_ce(p[r], data.labels[r]);
    const double lr = reference ? pointwise_ce(pr[r], data.labels[r]) : 0.0;
    auto& a = acc[group_key(col, r)];
    for (auto* x : {&a, &all}) {
      ++x->n;
      x->loss += l;
      x->ref += lr;
    }
  }
  auto finish = [&](std::string name, const Acc& a) {
    SubgroupRow row;
    row.group = std::move(name);
    row.n = a.n;
    row.loss = a.loss / static_cast<double>(a.n);
    if (reference) {
      row.reference_loss = a.ref / static_cast<double>(a.n);
      row.relative_percent = 100.0 * (row.loss - *row.reference_loss) / *row.reference_loss;
    }
    return row;
  };

  SubgroupReport out;
  out.column = std::string(group_column);
  if (all.n == 0) throw std::invalid_argument("subgroup_report: no rows");
  out.overall = finish("All", all);
  for (const auto& [name, a] : acc) out.groups.push_back(finish(name, a));
  if (col.kind == ColumnKind::categorical) {
    for (const auto& token : col.dictionary) {
      if (!acc.contains(token)) out.notes.push_back("group '" + token + "' has no rows; skipped");
    }
  }
  return out;
}

AdditiveModel ablate_and_retrain(const Trainer& trainer, const BinnedDataset& data, std::string_view dropped_feature,
                                 std::uint64_t seed) {
  if (!data.spec.index_of(dropped_feature)) {
    throw std::invalid_argument("ablate: unknown feature '" + std::string(dropped_feature) + "'");
  }
  if (data.features() < 2) throw std::invalid_argument("ablate: cannot drop the only feature");
  return trainer(data.without_feature(dropped_feature), seed);
}

// ---- JSON --------------------------------------------------------------------

void to_json(nlohmann::json& j, const DensityCurve& c) {
  j = nlohmann::json{{"added", c.added},         {"val_error", c.val_error}, {"test_error", c.test_error},
                     {"density", c.density},     {"degenerate", c.degenerate}};
}

void to_json(nlohmann::json& j, const BiasVarianceEstimate& e) {
  j = nlohmann::json{{"empirical_bias", e.empirical_bias},
                     {"variance", e.variance},
                     {"total", e.total},
                     {"rounds_used", e.rounds_used},
                     {"flags", e.flags}};
  auto& rounds = j["rounds"] = nlohmann::json::array();
  for (const auto& r : e.rounds) {
    nlohmann::json x{{"ok", r.ok}};
    if (r.ok) {
      x["empirical_bias"] = r.empirical_bias;
      x["variance"] = r.variance;
      x["total"] = r.total;
    } else {
      x["error"] = r.error;
    }
    rounds.push_back(std::move(x));
  }
}

void to_json(nlohmann::json& j, const FidelityTable& t) {
  j = nlohmann::json{{"generators", t.generators}, {"candidates", t.candidates}, {"distance", t.distance},
                     {"score", t.score},           {"test_auc", t.test_auc},
                     {"worst_case", t.worst_case}, {"flags", t.flags}};
}

void to_json(nlohmann::json& j, const SubgroupReport& r) {
  auto row = [](const SubgroupRow& g) {
    nlohmann::json x{{"group", g.group}, {"n", g.n}, {"loss", g.loss}};
    if (g.reference_loss) x["reference_loss"] = *g.reference_loss;
    if (g.relative_percent) x["relative_percent"] = *g.relative_percent;
    return x;
  };
  j = nlohmann::json{{"column", r.column}, {"overall", row(r.overall)}, {"notes", r.notes}};
  auto& groups = j["groups"] = nlohmann::json::array();
  for (const auto& g : r.groups) groups.push_back(row(g));
}

}  // namespace gamlab
