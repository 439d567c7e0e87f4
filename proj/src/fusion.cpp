#include "voicetriage/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "voicetriage/error.hpp"

namespace vt {

unsigned long long binomial(int n, int k) {
  if (n < 0 || n > kMaxFusionK || k < 0 || k > n) fail(ErrorKind::InvalidArgument, "binomial: out of range");
  // Pascal row by row; C(64, 32) < 2^64 so every entry fits.
  std::vector<unsigned long long> row(static_cast<std::size_t>(n) + 1, 0);
  row[0] = 1;
  for (int i = 1; i <= n; ++i) {
    for (int j = i; j > 0; --j) row[static_cast<std::size_t>(j)] += row[static_cast<std::size_t>(j - 1)];
  }
  return row[static_cast<std::size_t>(k)];
}

double subject_accuracy_estimate(double p, int k) {
  if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::InvalidArgument, "fusion: p must lie in [0, 1]");
  if (k < 1 || k > kMaxFusionK) fail(ErrorKind::InvalidArgument, "fusion: k must lie in [1, 64]");
  const int first = (k + 1) / 2;
  long double sum = 0.0L;
  for (int i = first; i <= k; ++i) {
    sum += static_cast<long double>(binomial(k, i)) * std::pow(static_cast<long double>(p), i) *
           std::pow(1.0L - static_cast<long double>(p), k - i);
  }
  return std::min(1.0, static_cast<double>(sum));
}

FusedDecision majority_vote_fuse(std::span<const std::size_t> labels, std::span<const std::vector<double>> scores,
                                 std::size_t num_classes) {
  if (labels.empty()) fail(ErrorKind::EmptyData, "fuse: no recordings");
  if (!scores.empty() && scores.size() != labels.size()) {
    fail(ErrorKind::DimensionMismatch, "fuse: one score vector per recording is required");
  }
  FusedDecision d;
  d.votes.assign(num_classes, 0);
  d.score_sums.assign(num_classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) fail(ErrorKind::BadValue, "fuse: label outside the class range");
    ++d.votes[labels[i]];
    if (scores.empty()) continue;
    if (scores[i].size() != num_classes) fail(ErrorKind::DimensionMismatch, "fuse: score vector length mismatch");
    for (std::size_t c = 0; c < num_classes; ++c) d.score_sums[c] += scores[i][c];
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < num_classes; ++c) {
    if (d.votes[c] > d.votes[best] || (d.votes[c] == d.votes[best] && d.score_sums[c] > d.score_sums[best])) {
      best = c;
    }
  }
  d.label = best;
  return d;
}

}  // namespace vt
