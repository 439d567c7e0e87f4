#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <ostream>
#include <thread>

#include "svm_internal.hpp"
#include "voicetriage/classifiers.hpp"
#include "voicetriage/csv.hpp"
#include "voicetriage/error.hpp"
#include "voicetriage/rng.hpp"

namespace vt {

Scaler scaler_fit(const Matrix& X) {
  if (X.rows() == 0 || X.cols() == 0) fail(ErrorKind::EmptyData, "scaler: empty training matrix");
  const std::size_t n = X.rows();
  const std::size_t d = X.cols();
  Scaler s;
  s.mean.assign(d, 0.0);
  s.stddev.assign(d, 1.0);
  s.constant.assign(d, false);
  s.all_missing.assign(d, false);
  for (std::size_t j = 0; j < d; ++j) {
    double sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = X(i, j);
      if (std::isnan(v)) continue;
      sum += v;
      ++seen;
    }
    if (seen == 0) {
      s.all_missing[j] = true;
      s.constant[j] = true;
      continue;
    }
    const double mean = sum / static_cast<double>(seen);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = X(i, j);
      const double dv = (std::isnan(v) ? mean : v) - mean;
      var += dv * dv;
    }
    const double sd = std::sqrt(var / static_cast<double>(n));
    s.mean[j] = mean;
    if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
      s.stddev[j] = sd;
    } else {
      s.constant[j] = true;
    }
  }
  return s;
}

std::vector<double> Scaler::apply(std::span<const double> x) const {
  if (mean.empty()) fail(ErrorKind::NotFitted, "scaler: not fitted");
  if (x.size() != mean.size()) {
    fail(ErrorKind::DimensionMismatch, "scaler: input has " + std::to_string(x.size()) + " features, expected " +
                                           std::to_string(mean.size()));
  }
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double v = std::isnan(x[j]) ? mean[j] : x[j];
    out[j] = constant[j] ? 0.0 : (v - mean[j]) / stddev[j];
  }
  return out;
}

Matrix Scaler::apply(const Matrix& X) const {
  Matrix out(X.rows(), X.cols());
  for (std::size_t i = 0; i < X.rows(); ++i) {
    const auto row = apply(X.row(i));
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

std::vector<std::size_t> stratified_folds(std::span<const int> y, std::span<const std::string> groups,
                                          std::size_t folds, std::uint64_t seed) {
  if (folds < 2) fail(ErrorKind::InvalidArgument, "cv: need at least 2 folds");
  if (!groups.empty() && groups.size() != y.size()) {
    fail(ErrorKind::DimensionMismatch, "cv: group count differs from label count");
  }
  // Group key -> member rows; a group takes the label of its first row.
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < y.size(); ++i) {
    members[groups.empty() ? std::to_string(i) : groups[i]].push_back(i);
  }
  if (members.size() < folds) {
    fail(ErrorKind::InsufficientData, "cv: " + std::to_string(members.size()) + " groups cannot fill " +
                                          std::to_string(folds) + " folds");
  }
  std::map<int, std::vector<const std::vector<std::size_t>*>> by_class;
  for (const auto& [key, rows] : members) by_class[y[rows.front()]].push_back(&rows);

  Rng rng(seed);
  std::vector<std::size_t> fold_of(y.size(), 0);
  std::vector<std::size_t> fold_total(folds, 0);
  for (auto& [label, list] : by_class) {
    if (list.size() < 2) {
      fail(ErrorKind::MissingClass, "cv: class " + std::to_string(label) +
                                        " has a single group, so one training fold would lack it");
    }
    rng.shuffle(std::span(list));
    std::vector<std::size_t> fold_class(folds, 0);
    for (const auto* rows : list) {
      std::size_t best = 0;
      for (std::size_t f = 1; f < folds; ++f) {
        if (fold_class[f] < fold_class[best] ||
            (fold_class[f] == fold_class[best] && fold_total[f] < fold_total[best])) {
          best = f;
        }
      }
      for (std::size_t r : *rows) fold_of[r] = best;
      fold_class[best] += rows->size();
      fold_total[best] += rows->size();
    }
  }
  return fold_of;
}

namespace {

bool better(const CvRow& a, const CvRow& b) {
  if (a.mean_accuracy != b.mean_accuracy) return a.mean_accuracy > b.mean_accuracy;
  if (a.point.C != b.point.C) return a.point.C < b.point.C;
  return a.point.kernel.width() > b.point.kernel.width();
}

bool same_kernel(const KernelSpec& a, const KernelSpec& b) {
  return a.kind == b.kind && a.gamma == b.gamma && a.degree == b.degree && a.scale == b.scale;
}

}  // namespace

GridSearchResult grid_search_cv(const Matrix& X, std::span<const int> y, std::span<const std::string> groups,
                                const std::vector<GridPoint>& grid, const CvOptions& opt) {
  if (grid.empty()) fail(ErrorKind::InvalidArgument, "grid search: empty grid");
  if (y.size() != X.rows()) fail(ErrorKind::DimensionMismatch, "grid search: label count differs from row count");
  for (const auto& g : grid) g.kernel.validate();
  const std::vector<std::size_t> fold_of = stratified_folds(y, groups, opt.folds, opt.seed);

  // Grid points sharing a kernel share one Gram matrix.
  std::vector<std::vector<std::size_t>> by_kernel;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    auto it = std::find_if(by_kernel.begin(), by_kernel.end(),
                           [&](const auto& list) { return same_kernel(grid[list.front()].kernel, grid[i].kernel); });
    if (it == by_kernel.end()) {
      by_kernel.push_back({i});
    } else {
      it->push_back(i);
    }
  }

  GridSearchResult result;
  result.table.resize(grid.size());
  auto run_kernel = [&](const std::vector<std::size_t>& points) {
    const Matrix K = detail::gram_matrix(X, grid[points.front()].kernel);
    for (std::size_t gi : points) {
      CvRow& row = result.table[gi];
      row.point = grid[gi];
      SmoOptions smo;
      smo.C = grid[gi].C;
      smo.tol = opt.tol;
      for (std::size_t f = 0; f < opt.folds; ++f) {
        std::vector<std::size_t> train;
        std::vector<std::size_t> test;
        for (std::size_t i = 0; i < y.size(); ++i) (fold_of[i] == f ? test : train).push_back(i);
        if (test.empty()) {
          row.fold_accuracy.push_back(0.0);
          continue;
        }
        const OvoSvm model = detail::ovo_fit_rows(X, K, train, y, grid[gi].kernel, smo);
        std::size_t correct = 0;
        std::vector<double> dec(model.machines.size());
        for (std::size_t t : test) {
          for (std::size_t m = 0; m < dec.size(); ++m) dec[m] = detail::decision_from_gram(model.machines[m], K, t);
          correct += detail::ovo_combine(model, dec).label == y[t] ? 1 : 0;
        }
        row.fold_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(test.size()));
      }
      double sum = 0.0;
      for (double a : row.fold_accuracy) sum += a;
      row.mean_accuracy = sum / static_cast<double>(opt.folds);
    }
  };

  const std::size_t workers = std::min(std::max<std::size_t>(opt.threads, 1), by_kernel.size());
  if (workers <= 1) {
    for (const auto& points : by_kernel) run_kernel(points);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(by_kernel.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < by_kernel.size(); k = next++) {
          try {
            run_kernel(by_kernel[k]);
          } catch (...) {
            errors[k] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  for (std::size_t i = 1; i < result.table.size(); ++i) {
    if (better(result.table[i], result.table[result.best_index])) result.best_index = i;
  }
  result.best = result.table[result.best_index].point;
  return result;
}

std::vector<GridPoint> default_grid(KernelKind kind, int degree, std::size_t dim) {
  const double d = static_cast<double>(std::max<std::size_t>(dim, 1));
  std::vector<GridPoint> grid;
  for (double c : {0.01, 0.1, 1.0, 10.0, 100.0}) {
    for (double k : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
      GridPoint p;
      p.C = c;
      p.kernel = kind == KernelKind::Gaussian ? KernelSpec::gaussian(std::pow(10.0, k) / d)
                                              : KernelSpec::polynomial(degree, d * std::pow(10.0, k));
      grid.push_back(p);
    }
  }
  return grid;
}

void write_cv_table(std::ostream& out, const GridSearchResult& result) {
  const std::size_t folds = result.table.empty() ? 0 : result.table.front().fold_accuracy.size();
  out << "kernel,c,gamma,degree,scale,mean_accuracy";
  for (std::size_t f = 0; f < folds; ++f) out << ",fold" << (f + 1);
  out << ",selected\n";
  for (std::size_t i = 0; i < result.table.size(); ++i) {
    const CvRow& row = result.table[i];
    const KernelSpec& k = row.point.kernel;
    const bool gauss = k.kind == KernelKind::Gaussian;
    out << (gauss ? "gaussian" : "polynomial") << ',' << csv::format_double(row.point.C) << ','
        << (gauss ? csv::format_double(k.gamma) : "") << ',' << (gauss ? "" : std::to_string(k.degree)) << ','
        << (gauss ? "" : csv::format_double(k.scale)) << ',' << csv::format_double(row.mean_accuracy);
    for (double a : row.fold_accuracy) out << ',' << csv::format_double(a);
    out << ',' << (i == result.best_index ? 1 : 0) << '\n';
  }
}

}  // namespace vt
