#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "gamlab/boosting.hpp"
#include "gamlab/smooth.hpp"
#include "oracles.hpp"

using namespace gamlab;
using fixtures::synthetic;

namespace {

std::size_t levels(const std::vector<double>& v, double tol = 1e-9) {
  std::size_t count = v.empty() ? 0 : 1;
  for (std::size_t k = 1; k < v.size(); ++k) count += std::abs(v[k] - v[k - 1]) > tol;
  return count;
}

std::vector<double> value_bins(const ShapeFunction& s) {
  return {s.values.begin(), s.values.begin() + static_cast<std::ptrdiff_t>(s.binning.value_bins())};
}

double weighted_distance(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& w) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += w[i] * (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(d);
}

}  // namespace

TEST_CASE("tv_denoise_1d limits") {
  const std::vector<double> y = {1.0, 3.0, -2.0, 0.5, 4.0};
  const std::vector<double> w = {1.0, 2.0, 0.5, 1.0, 3.0};
  CHECK(tv_denoise_1d(y, w, 0.0) == y);
  const double sat = tv_saturation(y, w);
  const double mean = (1.0 + 6.0 - 1.0 + 0.5 + 12.0) / 7.5;
  for (double lambda : {sat, 2.0 * sat, 1e9}) {
    for (double t : tv_denoise_1d(y, w, lambda)) CHECK(t == doctest::Approx(mean));
  }
  const auto below = tv_denoise_1d(y, w, 0.9 * sat);
  CHECK(levels(below) > 1);
  CHECK_THROWS_AS(tv_denoise_1d(y, std::vector<double>{1, 1}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(tv_denoise_1d(y, std::vector<double>{1, 1, 0, 1, 1}, 1.0), std::invalid_argument);
}

TEST_CASE("tv_denoise_1d matches the dual QP oracle") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.index(11);
    std::vector<double> y(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = 3.0 * rng.normal();
      w[i] = 0.1 + 2.0 * rng.uniform();
    }
    const double lambda = std::pow(10.0, -2.0 + static_cast<double>(trial % 5));
    const auto fast = tv_denoise_1d(y, w, lambda);
    const auto ref = oracle::tv_dual_qp(y, w, lambda);
    CAPTURE(trial);
    CHECK(tv_objective(y, w, fast, lambda) <= tv_objective(y, w, ref, lambda) + 1e-6);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(fast[i] - ref[i]) < 1e-5);
  }
}

TEST_CASE("tv_denoise_1d is non-expansive and fuses monotonically") {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 40;
    std::vector<double> y1(n), y2(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
      y1[i] = rng.normal() + (i > 20 ? 2.0 : 0.0);
      y2[i] = rng.normal();
      w[i] = 0.5 + rng.uniform();
    }
    const double lambda = 0.5 + rng.uniform();
    const auto t1 = tv_denoise_1d(y1, w, lambda);
    const auto t2 = tv_denoise_1d(y2, w, lambda);
    CHECK(weighted_distance(t1, t2, w) <= weighted_distance(y1, y2, w) + 1e-9);

    std::size_t previous = n + 1;
    for (double l = 1e-3; l < 100.0; l *= 1.5) {
      const auto count = levels(tv_denoise_1d(y1, w, l));
      CHECK(count <= previous);
      previous = count;
    }
  }
}

TEST_CASE("flam at lambda_max is the intercept-only model") {
  const auto data = synthetic(800, 3, 3, [](const std::vector<double>& x, Rng& rng) {
    return rng.bernoulli(logistic(x[0] - 0.5 * x[1]));
  });
  const double lmax = flam_lambda_max(data);
  CHECK(lmax > 0.0);
  const auto m = fit_flam_at(data, lmax);
  for (const auto& s : m.shapes) {
    for (double v : s.values) CHECK(std::abs(v) < 1e-12);
  }
  double rate = 0.0;
  for (auto r : data.split.train) rate += data.labels()[r];
  rate /= static_cast<double>(data.split.train.size());
  CHECK(m.intercept == doctest::Approx(std::log(rate / (1.0 - rate))).epsilon(1e-9));
  const auto below = fit_flam_at(data, 0.5 * lmax);
  double spread = 0.0;
  for (const auto& s : below.shapes) spread = std::max(spread, levels(value_bins(s)) > 1 ? 1.0 : 0.0);
  CHECK(spread == 1.0);
}

TEST_CASE("flam objective never increases across sweeps") {
  const auto data = synthetic(1000, 4, 13, [](const std::vector<double>& x, Rng& rng) {
    return rng.bernoulli(logistic(std::sin(2.0 * x[0]) + (x[1] > 0.5 ? 1.0 : -0.5)));
  });
  FlamConfig cfg;
  cfg.path_length = 8;
  FlamTrace trace;
  fit_flam(data, cfg, &trace);
  REQUIRE(trace.sweep_objective.size() == 8);
  for (std::size_t k = 0; k + 1 < trace.lambdas.size(); ++k) CHECK(trace.lambdas[k + 1] < trace.lambdas[k]);
  for (const auto& sweeps : trace.sweep_objective) {
    for (std::size_t s = 1; s < sweeps.size(); ++s) CHECK(sweeps[s] <= sweeps[s - 1] + 1e-10);
  }
  const auto best = std::min_element(trace.val_loss.begin(), trace.val_loss.end()) - trace.val_loss.begin();
  CHECK(static_cast<std::size_t>(best) == trace.selected);
}

TEST_CASE("flam recovers a single step") {
  const auto data = synthetic(1500, 2, 19, [](const std::vector<double>& x, Rng&) { return x[0] > 0.0; });
  FlamConfig cfg;
  cfg.path_length = 20;
  const auto m = fit_flam(data, cfg);
  CHECK(levels(value_bins(m.shapes[0])) == 2);
  CHECK(m.shapes[0].at_numeric(-1.0) < m.shapes[0].at_numeric(1.0));
  const auto a = serialize(fit_flam(data, cfg));
  CHECK(serialize(m) == a);
}

TEST_CASE("B-spline basis is a partition of unity") {
  Rng rng(4);
  std::vector<double> values(300);
  for (auto& v : values) v = rng.normal() * 10.0;
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  const auto basis = SplineBasis::at_quantiles(values, 50);
  CHECK(basis.size() == 50);
  for (int t = 0; t < 1000; ++t) {
    const double x = basis.lo() + rng.uniform() * (basis.hi() - basis.lo());
    const auto all = basis.evaluate_all(x);
    double sum = 0.0;
    for (double b : all) {
      CHECK(b >= -1e-12);
      sum += b;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
  const auto at_hi = basis.evaluate_all(basis.hi());
  CHECK(at_hi.back() == doctest::Approx(1.0));
}

TEST_CASE("second-difference penalty is positive semi-definite") {
  const std::size_t K = 12;
  const auto s = second_difference_penalty(K);
  Rng rng(6);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> v(K);
    for (auto& x : v) x = rng.normal();
    double q = 0.0;
    for (std::size_t a = 0; a < K; ++a) {
      for (std::size_t b = 0; b < K; ++b) q += v[a] * s[a * K + b] * v[b];
    }
    CHECK(q >= -1e-12);
  }
  // Linear sequences are in the null space.
  double q = 0.0;
  for (std::size_t a = 0; a < K; ++a) {
    for (std::size_t b = 0; b < K; ++b) q += (2.0 * a - 1.0) * s[a * K + b] * (2.0 * b - 1.0);
  }
  CHECK(std::abs(q) < 1e-9);
}

TEST_CASE("spline recovers a linear logit") {
  const auto data = synthetic(100000, 1, 21, [](const std::vector<double>& x, Rng& rng) {
    return rng.bernoulli(logistic(0.8 * x[0] - 0.3));
  });
  SplineTrace trace;
  const auto m = fit_spline(data, {}, &trace);
  auto xs = data.unique_values[0];
  const double q05 = xs[xs.size() / 20], q95 = xs[xs.size() * 19 / 20], med = xs[xs.size() / 2];
  const auto& s = m.shapes[0];
  for (double x = q05; x <= q95; x += (q95 - q05) / 50.0) {
    CHECK(std::abs((s.at_numeric(x) - s.at_numeric(med)) - 0.8 * (x - med)) < 0.1);
  }
  std::size_t best = 0;
  for (std::size_t k = 0; k < trace.gcv.size(); ++k) {
    if (!std::isnan(trace.gcv[k]) && trace.gcv[k] < trace.gcv[best]) best = k;
  }
  CHECK(best == trace.selected);
}

TEST_CASE("heavy spline penalty leaves one line per feature") {
  const auto data = synthetic(3000, 2, 25, [](const std::vector<double>& x, Rng& rng) {
    return rng.bernoulli(logistic(x[0] * x[0] - 1.0 + x[1]));
  });
  SplineConfig cfg;
  cfg.lambdas = {1e9};
  SplineTrace trace;
  fit_spline(data, cfg, &trace);
  CHECK(trace.edf[0] == doctest::Approx(3.0).epsilon(0.02));
  cfg.lambdas = {1e-3};
  fit_spline(data, cfg, &trace);
  CHECK(trace.edf[0] > 10.0);
}

TEST_CASE("plain logistic regression on a threshold") {
  const auto data = synthetic(2000, 1, 33, [](const std::vector<double>& x, Rng&) { return x[0] > 0.0; });
  LinearTrace trace;
  const auto m = fit_linear(data, {}, &trace);
  const auto& s = m.shapes[0];
  CHECK(s.form == ShapeForm::piecewise_linear);
  CHECK(s.values.back() > s.values.front());
  CHECK(trace.Cs.size() == 12);
  const auto best = std::min_element(trace.cv_loss.begin(), trace.cv_loss.end()) - trace.cv_loss.begin();
  CHECK(trace.selected_C == trace.Cs[static_cast<std::size_t>(best)]);
  for (std::size_t k = 1; k < trace.Cs.size(); ++k) CHECK(trace.Cs[k] > trace.Cs[k - 1]);
}

TEST_CASE("lasso at the strongest penalty zeroes every coefficient") {
  const auto data = synthetic(1000, 3, 35, [](const std::vector<double>& x, Rng& rng) {
    return rng.bernoulli(logistic(x[0]));
  });
  LinearConfig cfg;
  cfg.penalty = Penalty::l1;
  cfg.Cs = {1e-4};
  const auto m = fit_linear(data, cfg);
  for (const auto& s : m.shapes) {
    for (double v : s.values) CHECK(v == 0.0);
  }
  cfg.Cs = {};
  const auto full = fit_linear(data, cfg);
  CHECK(full.shapes[0].values.back() > full.shapes[0].values.front());
}

TEST_CASE("indicator-bin and marginalized regressions") {
  const auto data = synthetic(3000, 2, 37, [](const std::vector<double>& x, Rng& rng) {
    return rng.bernoulli(logistic(x[0] * x[0] - 1.0));
  }, 16);
  LinearConfig ilr;
  ilr.variant = LinearVariant::indicator_bins;
  const auto mi = fit_linear(data, ilr);
  CHECK(mi.algorithm == "ilr");
  CHECK(mi.shapes[0].form == ShapeForm::piecewise_constant);
  // U-shaped effect: the edges sit above the middle.
  CHECK(mi.shapes[0].at_numeric(-2.5) > mi.shapes[0].at_numeric(0.0));
  CHECK(mi.shapes[0].at_numeric(2.5) > mi.shapes[0].at_numeric(0.0));

  LinearConfig mlr;
  mlr.variant = LinearVariant::marginalized;
  const auto mm = fit_linear(data, mlr);
  CHECK(mm.algorithm == "mlr");
  CHECK(mm.shapes[0].at_numeric(2.5) > mm.shapes[0].at_numeric(0.0));
}

TEST_CASE("marginal means come from training rows only") {
  // Test rows are shifted far right; their bin is the last training bin.
  Rng rng(41);
  RawDataset ds;
  Column c;
  c.name = "x";
  for (int r = 0; r < 400; ++r) {
    c.numeric.push_back(static_cast<double>(r % 10));
    ds.labels.push_back(rng.bernoulli(0.1 + 0.08 * (r % 10)) ? 1.0 : 0.0);
  }
  ds.columns.push_back(c);
  auto raw = std::make_shared<RawDataset>(ds);
  auto plan = make_split(*raw, 0);
  for (auto r : plan.test) {
    raw->columns[0].numeric[r] = 1000.0;
    raw->labels[r] = 1.0;
  }
  const auto spec = fit_binning(*raw, plan.train);
  const auto data = encode(raw, spec, plan);
  const auto g = marginal_log_odds(data, 0);
  // Independent recount over training rows for the last bin.
  const std::size_t last = spec.features[0].value_bins() - 1;
  double pos = 0.0, n = 0.0;
  for (auto r : plan.train) {
    if (raw->columns[0].numeric[r] >= spec.features[0].cuts.back()) {
      pos += raw->labels[r];
      n += 1.0;
    }
  }
  const double q = (pos + 1.0) / (n + 2.0);
  CHECK(g[last] == doctest::Approx(std::log(q / (1.0 - q))));
  LinearConfig mlr;
  mlr.variant = LinearVariant::marginalized;
  const auto m = fit_linear(data, mlr);
  CHECK(m.shapes[0].at_numeric(1000.0) == m.shapes[0].at_bin(last));
}

TEST_CASE("smooth trainers are deterministic") {
  const auto data = synthetic(800, 2, 43, [](const std::vector<double>& x, Rng& rng) {
    return rng.bernoulli(logistic(x[0] + x[1]));
  });
  SplineConfig sc;
  sc.grid_points = 4;
  CHECK(serialize(fit_spline(data, sc)) == serialize(fit_spline(data, sc)));
  CHECK(serialize(fit_linear(data)) == serialize(fit_linear(data)));
  LinearConfig other;
  other.seed = 5;
  CHECK_NOTHROW(fit_linear(data, other));
}
