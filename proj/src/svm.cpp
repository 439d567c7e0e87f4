#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "svm_internal.hpp"
#include "voicetriage/classifiers.hpp"
#include "voicetriage/error.hpp"

namespace vt {

KernelSpec KernelSpec::gaussian(double gamma) {
  KernelSpec k;
  k.kind = KernelKind::Gaussian;
  k.gamma = gamma;
  return k;
}

KernelSpec KernelSpec::polynomial(int degree, double scale) {
  KernelSpec k;
  k.kind = KernelKind::Polynomial;
  k.degree = degree;
  k.scale = scale;
  return k;
}

void KernelSpec::validate() const {
  if (kind == KernelKind::Gaussian) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) fail(ErrorKind::InvalidArgument, "kernel: gamma must be > 0");
  } else {
    if (!(scale > 0.0) || !std::isfinite(scale)) fail(ErrorKind::InvalidArgument, "kernel: scale must be > 0");
    if (degree != 2 && degree != 3) fail(ErrorKind::InvalidArgument, "kernel: degree must be 2 or 3");
  }
}

double KernelSpec::operator()(std::span<const double> a, std::span<const double> b) const {
  if (kind == KernelKind::Gaussian) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      d2 += d * d;
    }
    return std::exp(-gamma * d2);
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  const double base = dot / scale + 1.0;
  return degree == 2 ? base * base : base * base * base;
}

double KernelSpec::width() const { return kind == KernelKind::Gaussian ? 1.0 / std::sqrt(gamma) : scale; }

std::string KernelSpec::describe() const {
  std::ostringstream os;
  if (kind == KernelKind::Gaussian) {
    os << "gaussian(gamma=" << gamma << ")";
  } else {
    os << (degree == 2 ? "quadratic" : "cubic") << "(scale=" << scale << ")";
  }
  return os.str();
}

namespace detail {

Matrix gram_matrix(const Matrix& X, const KernelSpec& kernel) {
  const std::size_t n = X.rows();
  Matrix K(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = kernel(X.row(i), X.row(j));
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

namespace {

void check_inputs(const Matrix& X, std::span<const int> y, const SmoOptions& opt) {
  if (X.rows() < 2) fail(ErrorKind::InsufficientData, "smo: need at least 2 examples");
  if (y.size() != X.rows()) fail(ErrorKind::DimensionMismatch, "smo: label count differs from row count");
  if (!(opt.C > 0.0) || !(opt.tol > 0.0) || !(opt.weight_negative > 0.0) || !(opt.weight_positive > 0.0)) {
    fail(ErrorKind::InvalidArgument, "smo: C, tol and class weights must be > 0");
  }
  bool pos = false;
  bool neg = false;
  for (int v : y) {
    if (v == 1) {
      pos = true;
    } else if (v == -1) {
      neg = true;
    } else {
      fail(ErrorKind::InvalidArgument, "smo: labels must be +1 or -1");
    }
  }
  if (!pos || !neg) fail(ErrorKind::SingleClass, "smo: both classes must be present");
  for (double v : X.data()) {
    if (!std::isfinite(v)) fail(ErrorKind::NonFinite, "smo: non-finite feature value");
  }
}

}  // namespace

SvmBinary smo_solve(const Matrix& X, const Matrix& K, std::span<const int> y, const KernelSpec& kernel,
                    const SmoOptions& opt) {
  const std::size_t n = X.rows();
  std::vector<double> alpha(n, 0.0);
  std::vector<double> grad(n, -1.0);
  std::vector<double> cap(n);
  for (std::size_t t = 0; t < n; ++t) cap[t] = opt.C * (y[t] > 0 ? opt.weight_positive : opt.weight_negative);
  constexpr double kTau = 1e-12;

  auto in_up = [&](std::size_t t) { return y[t] > 0 ? alpha[t] < cap[t] : alpha[t] > 0.0; };
  auto in_low = [&](std::size_t t) { return y[t] > 0 ? alpha[t] > 0.0 : alpha[t] < cap[t]; };

  SvmBinary m;
  m.kernel = kernel;
  m.C = opt.C;
  std::size_t iter = 0;
  for (; iter < opt.max_iterations; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    std::size_t i = n;
    std::size_t j = n;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -static_cast<double>(y[t]) * grad[t];
      if (in_up(t) && v > gmax) {
        gmax = v;
        i = t;
      }
      if (in_low(t) && v < gmin) {
        gmin = v;
        j = t;
      }
    }
    if (i == n || j == n || gmax - gmin < opt.tol) {
      m.converged = true;
      break;
    }

    const double yi = y[i];
    const double yj = y[j];
    const double old_i = alpha[i];
    const double old_j = alpha[j];
    double quad = K(i, i) + K(j, j) - 2.0 * K(i, j);
    if (quad <= 0.0) quad = kTau;
    const double ci = cap[i];
    const double cj = cap[j];
    if (yi != yj) {
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else {
        if (alpha[i] < 0.0) {
          alpha[i] = 0.0;
          alpha[j] = -diff;
        }
      }
      if (diff > ci - cj) {
        if (alpha[i] > ci) {
          alpha[i] = ci;
          alpha[j] = ci - diff;
        }
      } else {
        if (alpha[j] > cj) {
          alpha[j] = cj;
          alpha[i] = cj + diff;
        }
      }
    } else {
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > ci) {
        if (alpha[i] > ci) {
          alpha[i] = ci;
          alpha[j] = sum - ci;
        }
      } else {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = sum;
        }
      }
      if (sum > cj) {
        if (alpha[j] > cj) {
          alpha[j] = cj;
          alpha[i] = sum - cj;
        }
      } else {
        if (alpha[i] < 0.0) {
          alpha[i] = 0.0;
          alpha[j] = sum;
        }
      }
    }

    const double di = (alpha[i] - old_i) * yi;
    const double dj = (alpha[j] - old_j) * yj;
    for (std::size_t t = 0; t < n; ++t) {
      grad[t] += static_cast<double>(y[t]) * (K(t, i) * di + K(t, j) * dj);
    }
  }
  m.iterations = iter;

  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  std::size_t free_count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = static_cast<double>(y[t]) * grad[t];
    if (alpha[t] >= cap[t]) {
      if (y[t] < 0) {
        ub = std::min(ub, yg);
      } else {
        lb = std::max(lb, yg);
      }
    } else if (alpha[t] <= 0.0) {
      if (y[t] > 0) {
        ub = std::min(ub, yg);
      } else {
        lb = std::max(lb, yg);
      }
    } else {
      ++free_count;
      free_sum += yg;
    }
  }
  const double rho = free_count > 0 ? free_sum / static_cast<double>(free_count) : 0.5 * (ub + lb);
  m.bias = -rho;

  double objective = 0.0;
  for (std::size_t t = 0; t < n; ++t) objective += alpha[t] * (1.0 - grad[t]);
  m.dual_objective = 0.5 * objective;

  std::size_t count = 0;
  for (double a : alpha) count += a > 0.0 ? 1 : 0;
  m.support_vectors = Matrix(count, X.cols());
  std::size_t k = 0;
  for (std::size_t t = 0; t < n; ++t) {
    if (!(alpha[t] > 0.0)) continue;
    std::copy(X.row(t).begin(), X.row(t).end(), m.support_vectors.row(k).begin());
    m.coef.push_back(alpha[t] * static_cast<double>(y[t]));
    m.support_indices.push_back(t);
    ++k;
  }
  return m;
}

SvmBinary smo_on_rows(const Matrix& X, const Matrix& K, std::span<const std::size_t> rows, std::span<const int> y,
                      const KernelSpec& kernel, const SmoOptions& opt) {
  const std::size_t n = rows.size();
  Matrix subX(n, X.cols());
  Matrix subK(n, n);
  for (std::size_t a = 0; a < n; ++a) {
    std::copy(X.row(rows[a]).begin(), X.row(rows[a]).end(), subX.row(a).begin());
    for (std::size_t b = 0; b < n; ++b) subK(a, b) = K(rows[a], rows[b]);
  }
  check_inputs(subX, y, opt);
  SvmBinary m = smo_solve(subX, subK, y, kernel, opt);
  for (auto& idx : m.support_indices) idx = rows[idx];
  return m;
}

double decision_from_gram(const SvmBinary& m, const Matrix& K, std::size_t col) {
  double f = m.bias;
  for (std::size_t k = 0; k < m.coef.size(); ++k) f += m.coef[k] * K(m.support_indices[k], col);
  return f;
}

OvoSvm ovo_fit_rows(const Matrix& X, const Matrix& K, std::span<const std::size_t> rows, std::span<const int> y,
                    const KernelSpec& kernel, const SmoOptions& opt) {
  OvoSvm model;
  for (std::size_t r : rows) model.classes.push_back(y[r]);
  std::sort(model.classes.begin(), model.classes.end());
  model.classes.erase(std::unique(model.classes.begin(), model.classes.end()), model.classes.end());
  if (model.classes.size() < 2) fail(ErrorKind::SingleClass, "ovo: need at least 2 classes");
  for (std::size_t a = 0; a < model.classes.size(); ++a) {
    for (std::size_t b = a + 1; b < model.classes.size(); ++b) {
      std::vector<std::size_t> sub;
      std::vector<int> labels;
      for (std::size_t r : rows) {
        if (y[r] == model.classes[a]) {
          sub.push_back(r);
          labels.push_back(-1);
        } else if (y[r] == model.classes[b]) {
          sub.push_back(r);
          labels.push_back(1);
        }
      }
      model.pairs.emplace_back(a, b);
      model.machines.push_back(smo_on_rows(X, K, sub, labels, kernel, opt));
    }
  }
  return model;
}

OvoPrediction ovo_combine(const OvoSvm& model, std::span<const double> decisions) {
  const std::size_t k = model.num_classes();
  OvoPrediction p;
  p.scores.assign(k, 0.0);
  p.votes.assign(k, 0);
  for (std::size_t m = 0; m < model.pairs.size(); ++m) {
    const auto [a, b] = model.pairs[m];
    const double f = decisions[m];
    p.scores[b] += f;
    p.scores[a] -= f;
    ++p.votes[f >= 0.0 ? b : a];
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < k; ++c) {
    if (p.votes[c] > p.votes[best] || (p.votes[c] == p.votes[best] && p.scores[c] > p.scores[best])) best = c;
  }
  p.class_index = best;
  p.label = model.classes[best];
  return p;
}

}  // namespace detail

SvmBinary smo_train(const Matrix& X, std::span<const int> y, const KernelSpec& kernel, const SmoOptions& opt) {
  kernel.validate();
  detail::check_inputs(X, y, opt);
  return detail::smo_solve(X, detail::gram_matrix(X, kernel), y, kernel, opt);
}

SvmBinary smo_train_gram(const Matrix& X, const Matrix& gram, std::span<const int> y, const KernelSpec& kernel,
                         const SmoOptions& opt) {
  kernel.validate();
  detail::check_inputs(X, y, opt);
  if (gram.rows() != X.rows() || gram.cols() != X.rows()) {
    fail(ErrorKind::DimensionMismatch, "smo: Gram matrix must be n x n");
  }
  return detail::smo_solve(X, gram, y, kernel, opt);
}

double svm_decision(const SvmBinary& m, std::span<const double> x) {
  if (m.support_vectors.rows() == 0) fail(ErrorKind::NotFitted, "svm: machine has no support vectors");
  if (x.size() != m.support_vectors.cols()) {
    fail(ErrorKind::DimensionMismatch, "svm: input has " + std::to_string(x.size()) + " features, expected " +
                                           std::to_string(m.support_vectors.cols()));
  }
  double f = m.bias;
  for (std::size_t k = 0; k < m.coef.size(); ++k) f += m.coef[k] * m.kernel(m.support_vectors.row(k), x);
  return f;
}

std::vector<double> dual_alphas(const SvmBinary& m, std::size_t rows) {
  std::vector<double> alpha(rows, 0.0);
  for (std::size_t k = 0; k < m.coef.size(); ++k) alpha.at(m.support_indices[k]) = std::abs(m.coef[k]);
  return alpha;
}

std::vector<double> kkt_residuals(const SvmBinary& m, const Matrix& X, std::span<const int> y) {
  const std::vector<double> alpha = dual_alphas(m, X.rows());
  std::vector<double> out(X.rows());
  for (std::size_t t = 0; t < X.rows(); ++t) {
    const double margin = static_cast<double>(y[t]) * svm_decision(m, X.row(t));
    if (alpha[t] <= 0.0) {
      out[t] = std::max(0.0, 1.0 - margin);
    } else if (alpha[t] >= m.C) {
      out[t] = std::max(0.0, margin - 1.0);
    } else {
      out[t] = std::abs(margin - 1.0);
    }
  }
  return out;
}

OvoSvm ovo_fit(const Matrix& X, std::span<const int> y, const KernelSpec& kernel, const SmoOptions& opt) {
  kernel.validate();
  if (y.size() != X.rows()) fail(ErrorKind::DimensionMismatch, "ovo: label count differs from row count");
  std::vector<std::size_t> rows(X.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return detail::ovo_fit_rows(X, detail::gram_matrix(X, kernel), rows, y, kernel, opt);
}

OvoPrediction ovo_predict(const OvoSvm& model, std::span<const double> x) {
  if (model.machines.empty() || model.machines.size() != model.pairs.size()) {
    fail(ErrorKind::NotFitted, "ovo: ensemble is not fitted");
  }
  std::vector<double> decisions(model.machines.size());
  for (std::size_t m = 0; m < decisions.size(); ++m) decisions[m] = svm_decision(model.machines[m], x);
  return detail::ovo_combine(model, decisions);
}

}  // namespace vt
