#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace vt {

inline constexpr int kMaxFusionK = 64;

// Probability that at least ceil(k/2) of k independent recordings, each
// correct with probability p, are correct. For even k an exact tie counts as
// a success. Errors: InvalidArgument (p outside [0, 1], k outside [1, 64]).
double subject_accuracy_estimate(double p, int k);

// Exact binomial coefficient for n <= 64.
unsigned long long binomial(int n, int k);

struct FusedDecision {
  std::size_t label = 0;
  std::vector<std::size_t> votes;
  std::vector<double> score_sums;
};

// Plurality over per-recording labels; ties go to the higher summed class
// score, then the lower class index. `scores` may be empty (no score
// tie-break) or hold one vector of num_classes scores per recording.
// Errors: EmptyData, DimensionMismatch, BadValue (label out of range).
FusedDecision majority_vote_fuse(std::span<const std::size_t> labels, std::span<const std::vector<double>> scores,
                                 std::size_t num_classes);

}  // namespace vt
