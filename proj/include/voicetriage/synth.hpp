#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "voicetriage/audio.hpp"
#include "voicetriage/dataset.hpp"

namespace vt {

struct Formant {
  double center_hz;
  double bandwidth_hz;
};

// Parameters of the source-filter phonation generator used as a
// ground-truth oracle for the biomarker extractors.
struct SynthParams {
  double f0 = 200.0;
  double jitter_pct = 0.0;   // expected local jitter of the pulse train
  double shimmer_pct = 0.0;  // expected local shimmer of the pulse amplitudes
  double noise_snr_db = 60.0;
  std::array<Formant, 3> formants = {{{700.0, 80.0}, {1200.0, 90.0}, {2600.0, 120.0}}};
  double duration = 1.0;  // seconds
  int sample_rate = kAnalysisRate;
  std::uint64_t seed = 0;
};

// Throws InvalidArgument unless f0 in [60, 500], duration > 0, bandwidths > 0
// and formants below Nyquist.
void validate(const SynthParams& p);

// Band-limited glottal pulse train at f0 with per-cycle period and amplitude
// perturbations drawn uniformly so that the expected local jitter/shimmer
// equal the requested percentages, filtered by three cascaded two-pole
// resonators, plus white Gaussian noise at the requested SNR. The result is
// peak-normalized to 0.5. Deterministic per seed.
Audio synth_phonation(const SynthParams& p);

// Parameters of a synthetic 9-class cohort with etiological group structure:
// group-level perturbation/noise levels plus per-subtype pitch and formant
// offsets, speaker-level and recording-level variability.
struct CohortConfig {
  std::size_t speakers = 200;
  double duration = 0.8;
  int sample_rate = kAnalysisRate;
  std::uint64_t seed = 1;
  // Equal speakers per class when true; cohort-table proportions otherwise.
  bool balanced = true;
};

struct CohortItem {
  RecordingDescriptor descriptor;  // path = "<recording_id>.wav"
  SynthParams params;
};

// 12 recordings per speaker (3 vowels x 4 pitches). Deterministic per seed.
std::vector<CohortItem> generate_cohort(const CohortConfig& cfg);

Recording synthesize_recording(const CohortItem& item);

}  // namespace vt
