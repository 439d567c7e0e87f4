#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

// Dense SVM dual solver used as a reference: accelerated projected gradient
// on min 1/2 a'Qa - e'a subject to 0 <= a <= C, y'a = 0. The projection onto
// the feasible set is found by bisection on the hyperplane multiplier.
struct QpResult {
  std::vector<double> alpha;
  double objective = 0.0;  // dual objective sum(a) - 1/2 a'Qa (maximized)
};

inline std::vector<double> project(const std::vector<double>& v, const std::vector<int>& y, double C) {
  const std::size_t n = v.size();
  auto at = [&](double lambda, std::size_t i) { return std::clamp(v[i] - lambda * y[i], 0.0, C); };
  auto g = [&](double lambda) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += y[i] * at(lambda, i);
    return s;
  };
  double lo = -1.0;
  double hi = 1.0;
  while (g(lo) < 0.0) lo *= 2.0;
  while (g(hi) > 0.0) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (g(mid) > 0.0 ? lo : hi) = mid;
  }
  const double lambda = 0.5 * (lo + hi);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = at(lambda, i);
  return out;
}

inline double dual_objective(const std::vector<std::vector<double>>& K, const std::vector<int>& y,
                             const std::vector<double>& a) {
  double lin = 0.0;
  double quad = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    lin += a[i];
    for (std::size_t j = 0; j < a.size(); ++j) quad += a[i] * a[j] * y[i] * y[j] * K[i][j];
  }
  return lin - 0.5 * quad;
}

inline QpResult solve_dual(const std::vector<std::vector<double>>& K, const std::vector<int>& y, double C,
                           int iterations = 40000) {
  const std::size_t n = y.size();
  double lip = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += std::abs(K[i][j]);
    lip = std::max(lip, row);
  }
  const double step = 1.0 / std::max(lip, 1e-12);
  std::vector<double> a(n, 0.0);
  std::vector<double> z = a;
  std::vector<double> g(n);
  double t = 1.0;
  double best = dual_objective(K, y, a);
  std::vector<double> best_a = a;
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += y[i] * y[j] * K[i][j] * z[j];
      g[i] = z[i] - step * (s - 1.0);
    }
    std::vector<double> next = project(g, y, C);
    const double obj = dual_objective(K, y, next);
    if (obj < dual_objective(K, y, a)) {
      // Adaptive restart keeps the iteration monotone.
      t = 1.0;
      z = a;
      continue;
    }
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    for (std::size_t i = 0; i < n; ++i) z[i] = next[i] + (t - 1.0) / tn * (next[i] - a[i]);
    a = std::move(next);
    t = tn;
    if (obj > best) {
      best = obj;
      best_a = a;
    }
  }
  return {best_a, best};
}

}  // namespace oracle
