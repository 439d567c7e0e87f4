#include <algorithm>
#include <cmath>
#include <numeric>

#include "voicetriage/classifiers.hpp"
#include "voicetriage/error.hpp"
#include "voicetriage/rng.hpp"

namespace vt {

std::size_t DecisionTree::leaf_for(std::span<const double> x) const {
  std::size_t at = 0;
  while (nodes[at].feature >= 0) {
    const TreeNode& n = nodes[at];
    at = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return at;
}

std::size_t DecisionTree::depth() const {
  std::vector<std::size_t> level(nodes.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (nodes[i].feature >= 0) {
      level[static_cast<std::size_t>(nodes[i].left)] = level[i] + 1;
      level[static_cast<std::size_t>(nodes[i].right)] = level[i] + 1;
    }
  }
  return deepest;
}

namespace {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  std::size_t left_size = 0;
};

// Sum over children of sum_c n_c^2 / n_child; larger means lower weighted Gini.
double purity(const std::vector<double>& left, double nl, const std::vector<double>& right, double nr) {
  double a = 0.0;
  double b = 0.0;
  for (double c : left) a += c * c;
  for (double c : right) b += c * c;
  return a / nl + b / nr;
}

Split best_split(const Matrix& X, std::span<const std::size_t> cls, std::size_t k, std::vector<std::size_t>& rows,
                 std::size_t min_leaf, const std::vector<double>& totals) {
  Split best;
  double best_score = -1.0;
  const std::size_t n = rows.size();
  std::vector<double> left(k);
  std::vector<double> right(k);
  std::vector<std::size_t> order(rows);
  for (std::size_t f = 0; f < X.cols(); ++f) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return X(a, f) < X(b, f); });
    std::fill(left.begin(), left.end(), 0.0);
    right = totals;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const std::size_t c = cls[order[i]];
      left[c] += 1.0;
      right[c] -= 1.0;
      const double lo = X(order[i], f);
      const double hi = X(order[i + 1], f);
      if (!(lo < hi)) continue;
      const std::size_t nl = i + 1;
      if (nl < min_leaf || n - nl < min_leaf) continue;
      const double score = purity(left, static_cast<double>(nl), right, static_cast<double>(n - nl));
      if (score > best_score) {
        best_score = score;
        best.feature = static_cast<int>(f);
        double mid = 0.5 * (lo + hi);
        if (!(mid < hi)) mid = lo;
        best.threshold = mid;
        best.left_size = nl;
      }
    }
  }
  return best;
}

}  // namespace

DecisionTree cart_fit(const Matrix& X, std::span<const std::size_t> class_index, std::size_t num_classes,
                      std::span<const std::size_t> rows, std::size_t min_leaf) {
  if (rows.empty()) fail(ErrorKind::InsufficientData, "cart: no training rows");
  min_leaf = std::max<std::size_t>(min_leaf, 1);
  DecisionTree tree;
  struct Pending {
    std::size_t node;
    std::vector<std::size_t> rows;
  };
  std::vector<Pending> stack;
  tree.nodes.emplace_back();
  stack.push_back({0, std::vector<std::size_t>(rows.begin(), rows.end())});
  while (!stack.empty()) {
    Pending job = std::move(stack.back());
    stack.pop_back();
    std::vector<double> counts(num_classes, 0.0);
    for (std::size_t r : job.rows) counts[class_index[r]] += 1.0;
    const std::size_t present = static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(),
                                                                        [](double c) { return c > 0.0; }));
    Split s;
    if (present > 1 && job.rows.size() >= 2 * min_leaf) s = best_split(X, class_index, num_classes, job.rows, min_leaf, counts);
    if (s.feature < 0) {
      tree.nodes[job.node].counts = std::move(counts);
      continue;
    }
    std::vector<std::size_t> lrows;
    std::vector<std::size_t> rrows;
    for (std::size_t r : job.rows) {
      (X(r, static_cast<std::size_t>(s.feature)) <= s.threshold ? lrows : rrows).push_back(r);
    }
    const auto l = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    TreeNode& node = tree.nodes[job.node];
    node.feature = s.feature;
    node.threshold = s.threshold;
    node.left = l;
    node.right = l + 1;
    stack.push_back({static_cast<std::size_t>(l + 1), std::move(rrows)});
    stack.push_back({static_cast<std::size_t>(l), std::move(lrows)});
  }
  return tree;
}

TreeEnsemble bagged_trees_train(const Matrix& X, std::span<const int> y, const TreeEnsembleOptions& opt) {
  if (X.rows() == 0) fail(ErrorKind::InsufficientData, "bagged trees: empty training set");
  if (y.size() != X.rows()) fail(ErrorKind::DimensionMismatch, "bagged trees: label count differs from row count");
  if (opt.trees == 0) fail(ErrorKind::InvalidArgument, "bagged trees: need at least one tree");
  for (double v : X.data()) {
    if (!std::isfinite(v)) fail(ErrorKind::NonFinite, "bagged trees: non-finite feature value");
  }
  TreeEnsemble model;
  model.seed = opt.seed;
  model.dim = X.cols();
  model.classes.assign(y.begin(), y.end());
  std::sort(model.classes.begin(), model.classes.end());
  model.classes.erase(std::unique(model.classes.begin(), model.classes.end()), model.classes.end());
  if (model.classes.size() < 2) fail(ErrorKind::SingleClass, "bagged trees: need at least 2 classes");

  std::vector<std::size_t> cls(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    cls[i] = static_cast<std::size_t>(std::lower_bound(model.classes.begin(), model.classes.end(), y[i]) -
                                      model.classes.begin());
  }
  Rng rng(opt.seed);
  const std::size_t n = X.rows();
  std::vector<std::size_t> rows(n);
  for (std::size_t b = 0; b < opt.trees; ++b) {
    if (opt.bootstrap) {
      for (auto& r : rows) r = static_cast<std::size_t>(rng.index(n));
      std::sort(rows.begin(), rows.end());
    } else {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    model.trees.push_back(cart_fit(X, cls, model.classes.size(), rows, opt.min_leaf));
  }
  return model;
}

EnsemblePrediction bagged_trees_predict(const TreeEnsemble& model, std::span<const double> x) {
  if (model.trees.empty()) fail(ErrorKind::NotFitted, "bagged trees: ensemble is not fitted");
  if (x.size() != model.dim) fail(ErrorKind::DimensionMismatch, "bagged trees: input dimension mismatch");
  const std::size_t k = model.num_classes();
  EnsemblePrediction p;
  p.fractions.assign(k, 0.0);
  for (const DecisionTree& t : model.trees) {
    const auto& counts = t.nodes[t.leaf_for(x)].counts;
    const auto top = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    p.fractions[top] += 1.0;
  }
  for (double& f : p.fractions) f /= static_cast<double>(model.trees.size());
  p.class_index = static_cast<std::size_t>(std::max_element(p.fractions.begin(), p.fractions.end()) -
                                           p.fractions.begin());
  p.label = model.classes[p.class_index];
  return p;
}

}  // namespace vt
