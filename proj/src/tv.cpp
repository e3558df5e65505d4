#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "gamlab/smooth.hpp"

namespace gamlab {

namespace {

void check_inputs(std::span<const double> y, std::span<const double> w) {
  if (y.size() != w.size()) throw std::invalid_argument("tv: length mismatch");
  for (double wi : w) {
    if (!(wi > 0.0)) throw std::invalid_argument("tv: weights must be positive");
  }
}

double weighted_mean(std::span<const double> y, std::span<const double> w) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    num += w[i] * y[i];
    den += w[i];
  }
  return num / den;
}

// Change in slope/offset of the piecewise-linear derivative at x.
struct Knot {
  double x;
  double da;
  double db;
};

}  // namespace

double tv_saturation(std::span<const double> y, std::span<const double> w) {
  check_inputs(y, w);
  if (y.empty()) return 0.0;
  const double mean = weighted_mean(y, w);
  double prefix = 0.0, sat = 0.0;
  for (std::size_t i = 0; i + 1 < y.size(); ++i) {
    prefix += w[i] * (y[i] - mean);
    sat = std::max(sat, std::abs(prefix));
  }
  return sat;
}

double tv_objective(std::span<const double> y, std::span<const double> w, std::span<const double> theta,
                    double lambda) {
  double f = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    f += 0.5 * w[i] * (y[i] - theta[i]) * (y[i] - theta[i]);
    if (i + 1 < y.size()) f += lambda * std::abs(theta[i + 1] - theta[i]);
  }
  return f;
}

std::vector<double> tv_denoise_1d(std::span<const double> y, std::span<const double> w, double lambda) {
  check_inputs(y, w);
  if (!(lambda >= 0.0)) throw std::invalid_argument("tv: lambda must be >= 0");
  const std::size_t n = y.size();
  if (n == 0) return {};
  if (lambda == 0.0 || n == 1) return {y.begin(), y.end()};
  if (lambda >= tv_saturation(y, w)) return std::vector<double>(n, weighted_mean(y, w));

  // Derivative of the cost-to-come: a*t + b left of the first knot, with
  // (da, db) added when crossing each knot; (ar, br) is the rightmost piece.
  std::deque<Knot> knots;
  std::vector<double> lower(n), upper(n);
  double al = 0.0, bl = 0.0, ar = 0.0, br = 0.0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    al += w[k];
    bl -= w[k] * y[k];
    ar += w[k];
    br -= w[k] * y[k];

    while (!knots.empty() && al * knots.front().x + bl < -lambda) {
      al += knots.front().da;
      bl += knots.front().db;
      knots.pop_front();
    }
    lower[k] = (-lambda - bl) / al;
    knots.push_front({lower[k], al, bl + lambda});
    al = 0.0;
    bl = -lambda;

    while (!knots.empty() && ar * knots.back().x + br > lambda) {
      ar -= knots.back().da;
      br -= knots.back().db;
      knots.pop_back();
    }
    upper[k] = (lambda - br) / ar;
    knots.push_back({upper[k], -ar, lambda - br});
    ar = 0.0;
    br = lambda;
  }
  al += w[n - 1];
  bl -= w[n - 1] * y[n - 1];
  while (!knots.empty() && al * knots.front().x + bl < 0.0) {
    al += knots.front().da;
    bl += knots.front().db;
    knots.pop_front();
  }
  std::vector<double> theta(n);
  theta[n - 1] = -bl / al;
  for (std::size_t k = n - 1; k-- > 0;) theta[k] = std::clamp(theta[k + 1], lower[k], upper[k]);
  return theta;
}

}  // namespace gamlab
