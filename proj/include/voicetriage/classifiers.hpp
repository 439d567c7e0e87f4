#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "voicetriage/matrix.hpp"

namespace vt {

enum class KernelKind { Gaussian, Polynomial };

// Gaussian: exp(-gamma |x - x'|^2). Polynomial: (x.x' / scale + 1)^degree.
struct KernelSpec {
  KernelKind kind = KernelKind::Gaussian;
  double gamma = 1.0;
  int degree = 3;
  double scale = 1.0;

  static KernelSpec gaussian(double gamma);
  static KernelSpec polynomial(int degree, double scale);

  // Throws InvalidArgument unless gamma > 0, scale > 0, degree in {2, 3}.
  void validate() const;
  double operator()(std::span<const double> a, std::span<const double> b) const;
  // Kernel width in feature units: 1/sqrt(gamma) or scale. Larger is smoother.
  double width() const;
  std::string describe() const;
};

struct SmoOptions {
  double C = 1.0;
  double tol = 1e-3;
  std::size_t max_iterations = 10'000'000;
  // Per-class multipliers on C (index 0 for y = -1, 1 for y = +1).
  double weight_negative = 1.0;
  double weight_positive = 1.0;
};

// Binary kernel machine f(x) = sum coef_i K(sv_i, x) + bias, coef_i = alpha_i y_i.
struct SvmBinary {
  KernelSpec kernel;
  double C = 1.0;
  Matrix support_vectors;
  std::vector<double> coef;
  std::vector<std::size_t> support_indices;  // rows of the training matrix
  double bias = 0.0;
  double dual_objective = 0.0;  // sum alpha - 1/2 alpha' Q alpha
  std::size_t iterations = 0;
  bool converged = false;
};

// Sequential minimal optimization with maximal-violating-pair selection
// (lowest index wins ties). Stops when the largest KKT gap is below tol.
// Labels are +1 / -1. Errors: InsufficientData (< 2 rows), SingleClass,
// NonFinite, DimensionMismatch, InvalidArgument (bad C, tol or labels).
SvmBinary smo_train(const Matrix& X, std::span<const int> y, const KernelSpec& kernel,
                    const SmoOptions& opt = {});
// Same, on a precomputed Gram matrix over the rows of X.
SvmBinary smo_train_gram(const Matrix& X, const Matrix& gram, std::span<const int> y, const KernelSpec& kernel,
                         const SmoOptions& opt = {});

// Errors: DimensionMismatch, NotFitted.
double svm_decision(const SvmBinary& m, std::span<const double> x);

// Per-row KKT violation: max(0, 1 - y f) at alpha = 0, max(0, y f - 1) at
// alpha = C, |y f - 1| in between.
std::vector<double> kkt_residuals(const SvmBinary& m, const Matrix& X, std::span<const int> y);

// Full dual vector alpha over the training rows.
std::vector<double> dual_alphas(const SvmBinary& m, std::size_t rows);

// One-vs-one machines, one per pair a < b, with class b as +1. A machine's
// non-negative decision votes for b.
struct OvoSvm {
  std::vector<int> classes;  // sorted class ids
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // indices into classes
  std::vector<SvmBinary> machines;

  std::size_t num_classes() const { return classes.size(); }
};

struct OvoPrediction {
  int label = 0;
  std::size_t class_index = 0;
  std::vector<double> scores;  // summed signed decisions per class
  std::vector<int> votes;
};

// Errors: as smo_train; SingleClass when fewer than 2 classes.
OvoSvm ovo_fit(const Matrix& X, std::span<const int> y, const KernelSpec& kernel, const SmoOptions& opt = {});
// Label = most votes; ties by score, then by lower class index. Errors: NotFitted.
OvoPrediction ovo_predict(const OvoSvm& model, std::span<const double> x);

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;  // go left when x[feature] <= threshold
  int left = -1;
  int right = -1;
  std::vector<double> counts;  // class counts at leaves
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  std::size_t leaf_for(std::span<const double> x) const;
  std::size_t depth() const;
};

struct TreeEnsembleOptions {
  std::size_t trees = 30;
  std::size_t min_leaf = 1;
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

struct TreeEnsemble {
  std::vector<int> classes;
  std::vector<DecisionTree> trees;
  std::size_t dim = 0;
  std::uint64_t seed = 0;

  std::size_t num_classes() const { return classes.size(); }
};

struct EnsemblePrediction {
  int label = 0;
  std::size_t class_index = 0;
  std::vector<double> fractions;  // vote share per class, sums to 1
};

// CART with Gini impurity, unlimited depth, thresholds at midpoints between
// consecutive distinct values. Ties between splits go to the lower feature,
// then the lower threshold. Each tree is grown on n draws with replacement.
// Errors: SingleClass, InsufficientData, NonFinite.
DecisionTree cart_fit(const Matrix& X, std::span<const std::size_t> class_index, std::size_t num_classes,
                      std::span<const std::size_t> rows, std::size_t min_leaf);
TreeEnsemble bagged_trees_train(const Matrix& X, std::span<const int> y, const TreeEnsembleOptions& opt = {});
// Each tree votes its leaf's majority class (lowest index on ties); the
// ensemble label is the majority of votes, again lowest index on ties.
// Errors: NotFitted, DimensionMismatch.
EnsemblePrediction bagged_trees_predict(const TreeEnsemble& model, std::span<const double> x);

// Column standardization with mean imputation of missing values (NaN).
struct Scaler {
  std::vector<double> mean;       // imputation value and centre
  std::vector<double> stddev;     // population std after imputation, 1 for constant columns
  std::vector<bool> constant;     // columns whose std was forced to 1
  std::vector<bool> all_missing;  // columns with no observed value (mean 0)

  std::size_t dim() const { return mean.size(); }
  // Errors: DimensionMismatch, NotFitted.
  std::vector<double> apply(std::span<const double> x) const;
  Matrix apply(const Matrix& X) const;
};

// Errors: EmptyData.
Scaler scaler_fit(const Matrix& X);

// One cell of a hyperparameter grid.
struct GridPoint {
  double C = 1.0;
  KernelSpec kernel;
};

struct CvRow {
  GridPoint point;
  std::vector<double> fold_accuracy;
  double mean_accuracy = 0.0;
};

struct GridSearchResult {
  GridPoint best;
  std::size_t best_index = 0;
  std::vector<CvRow> table;
};

struct CvOptions {
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  double tol = 1e-3;
  std::size_t threads = 1;
};

// Stratified K-fold assignment. Samples sharing a group id stay in one fold
// (pass an empty span to treat every sample as its own group). Groups of
// each class are shuffled and dealt to the fold holding the fewest samples
// of that class. Errors: InsufficientData (fewer groups than folds),
// MissingClass (a class confined to one fold would vanish from training).
std::vector<std::size_t> stratified_folds(std::span<const int> y, std::span<const std::string> groups,
                                          std::size_t folds, std::uint64_t seed);

// Exhaustive grid search of one-vs-one SVMs under K-fold CV. Picks the highest
// mean fold accuracy; ties go to the smaller C, then the wider kernel, then
// the earlier grid point. Errors: InvalidArgument (empty grid), as
// stratified_folds.
GridSearchResult grid_search_cv(const Matrix& X, std::span<const int> y, std::span<const std::string> groups,
                                const std::vector<GridPoint>& grid, const CvOptions& opt = {});

// C in {0.01, 0.1, 1, 10, 100} crossed with five kernel settings:
// gamma = 10^k / dim (Gaussian) or scale = dim * 10^k (polynomial), k in
// {-1, -0.5, 0, 0.5, 1}.
std::vector<GridPoint> default_grid(KernelKind kind, int degree, std::size_t dim);

// Columns: kernel,c,gamma,degree,scale,mean_accuracy,fold1..foldK,selected
void write_cv_table(std::ostream& out, const GridSearchResult& result);

}  // namespace vt
