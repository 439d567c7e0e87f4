#pragma once

#include <span>

#include "voicetriage/classifiers.hpp"

namespace vt::detail {

Matrix gram_matrix(const Matrix& X, const KernelSpec& kernel);

// Inputs are assumed validated.
SvmBinary smo_solve(const Matrix& X, const Matrix& K, std::span<const int> y, const KernelSpec& kernel,
                    const SmoOptions& opt);

// Trains on a subset of rows of X, reusing the full Gram matrix K. `y` holds
// the +/-1 labels of the subset; support_indices refer to rows of X.
SvmBinary smo_on_rows(const Matrix& X, const Matrix& K, std::span<const std::size_t> rows, std::span<const int> y,
                      const KernelSpec& kernel, const SmoOptions& opt);

// Decision value for row `col` of the matrix K was built from.
double decision_from_gram(const SvmBinary& m, const Matrix& K, std::size_t col);

// `y` is indexed by rows of X.
OvoSvm ovo_fit_rows(const Matrix& X, const Matrix& K, std::span<const std::size_t> rows, std::span<const int> y,
                    const KernelSpec& kernel, const SmoOptions& opt);

OvoPrediction ovo_combine(const OvoSvm& model, std::span<const double> decisions);

}  // namespace vt::detail
