#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voicetriage/dataset.hpp"
#include "voicetriage/matrix.hpp"
#include "voicetriage/spectral.hpp"

namespace vt {

// Missing-value marker written by extractors that fail (unvoiced input, too
// few cycles, unresolved formants). Replaced by training means before any
// classifier sees the vector.
inline constexpr double kSentinel = std::numeric_limits<double>::quiet_NaN();
inline bool is_sentinel(double v) { return std::isnan(v); }

inline constexpr double kVoicingThreshold = 0.3;

// Framewise normalized autocorrelation over lags [0, max_lag]. Frames are
// ceil(2 * fs / fmin) samples long with a 10 ms hop; each frame has its mean
// removed. r(t) = sum x[n] x[n+t] / sqrt(E_head(t) * E_tail(t)) over the
// overlapping part, so an exactly periodic frame gives r = 1 at its period.
struct PeriodicityAnalysis {
  int sample_rate = 0;
  double fmin = 60.0;
  double fmax = 500.0;
  std::size_t min_lag = 0;
  std::size_t max_lag = 0;
  std::vector<std::vector<double>> frames;  // r(0..max_lag) per frame; empty if silent
};

// Errors: SignalTooShort when len < 2 * fs / fmin.
PeriodicityAnalysis analyze_periodicity(std::span<const double> samples, int sample_rate,
                                        double fmin = 60.0, double fmax = 500.0);

inline constexpr double kPeakFraction = 0.8;

// Median of per-frame F0 over voiced frames (best peak r >= 0.3). Peaks are
// refined by parabolic interpolation; each frame takes the shortest-lag peak
// reaching kPeakFraction of its best peak. nullopt means unvoiced.
std::optional<double> estimate_f0(const PeriodicityAnalysis& analysis);
std::optional<double> estimate_f0(std::span<const double> samples, int sample_rate,
                                  double fmin = 60.0, double fmax = 500.0);

struct CycleMarks {
  std::vector<double> peak_times;  // seconds, strictly increasing
  std::vector<double> peak_amps;   // > 0
};

// Anchors on the largest sample in the first three periods, then walks
// forwards and backwards taking the largest sample within +/-40% of one
// period around each predicted cycle, refined by parabolic interpolation.
// Errors: Unvoiced (f0 <= 0), TooFewCycles (< 3 marks).
CycleMarks detect_cycles(std::span<const double> samples, int sample_rate, double f0);

inline constexpr int kResidualOrder = 12;
inline constexpr double kResidualCutoffHz = 1000.0;

// Excitation estimate: the signal inverse-filtered by its own order-12 LPC
// polynomial (whole-signal Hann-windowed autocorrelation), then low-passed at
// cutoff_hz with a zero-phase windowed sinc. Each glottal pulse becomes one
// compact peak, free of the formant ringing carried over from the previous
// cycle. Same length and alignment as the input.
std::vector<double> glottal_residual(std::span<const double> samples, int sample_rate,
                                     double cutoff_hz = kResidualCutoffHz);

inline constexpr double kCycleResidualCutoffHz = 2000.0;

// Cycle marks used for jitter and shimmer: times are the peaks picked by
// detect_cycles on the 2 kHz glottal residual (excitation instants), and each
// amplitude is the local |max| of the waveform itself within half a period
// after its mark. Errors as detect_cycles.
CycleMarks glottal_cycles(std::span<const double> samples, int sample_rate, double f0);

// 100 * mean|T_i - T_{i-1}| / mean(T) over consecutive peak intervals.
double jitter_local(const CycleMarks& marks);
// 100 * mean|A_i - A_{i+1}| / mean(A).
double shimmer_local(const CycleMarks& marks);

inline constexpr double kHnrFloorDb = -20.0;
inline constexpr double kHnrCeilingDb = 40.0;

// 10 log10(r / (1 - r)) clamped to [-20, 40] dB.
double hnr_from_correlation(double r);

// Mean framewise HNR over voiced frames, r taken as the interpolated
// correlation peak within +/-10% of the F0 lag. Errors: Unvoiced.
double hnr(const PeriodicityAnalysis& analysis, double f0);
double hnr(std::span<const double> samples, int sample_rate, double f0);

struct FormantEstimate {
  std::array<double, 3> hz = {kSentinel, kSentinel, kSentinel};
  bool complete = false;  // false: fewer than 3 qualifying roots, slots are sentinels
};

inline constexpr double kFormantRate = 11025.0;
inline constexpr int kLpcOrder = 12;

// Pre-emphasis (0.97), resampling to 11.025 kHz, 50 ms Hamming frames with a
// 25 ms hop, order-12 autocorrelation LPC (Levinson-Durbin), polynomial roots
// with positive imaginary part, bandwidth < 400 Hz and frequency in
// [90, 5000] Hz. The lowest three roots of each frame that has three are
// median-aggregated per slot; the estimate is complete only when at least half
// of the non-silent frames resolve three roots. Errors: SignalTooShort (< 50 ms).
FormantEstimate formants_lpc(std::span<const double> samples, int sample_rate);

// Levinson-Durbin on autocorrelation r[0..order]; returns a[0..order] with
// a[0] = 1 for A(z) = sum a_k z^-k.
std::vector<double> levinson_durbin(std::span<const double> r, int order);

// Roots of A(z) (poles of the LPC model), via companion-matrix eigenvalues.
std::vector<std::complex<double>> lpc_roots(std::span<const double> a);

inline constexpr std::size_t kFeatureCount = 21;

// [gender, f0, jitter, shimmer, hnr, f1, f2, f3, mfcc0..mfcc12]
struct FeatureVector21 {
  enum Index : std::size_t {
    kGender = 0,
    kF0 = 1,
    kJitter = 2,
    kShimmer = 3,
    kHnr = 4,
    kF1 = 5,
    kF2 = 6,
    kF3 = 7,
    kMfcc0 = 8,
  };

  std::array<double, kFeatureCount> values{};

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  std::size_t size() const { return values.size(); }
  std::size_t sentinel_count() const;
};

const std::array<std::string, kFeatureCount>& feature_names();

// Runs every extractor; failures become sentinels rather than errors.
FeatureVector21 assemble_features(const Recording& rec);

// Features plus the CNN input, sharing one mel analysis.
struct ProcessedRecording {
  std::string recording_id;
  std::string speaker_id;
  Diagnosis diagnosis = Diagnosis::Healthy;
  FeatureVector21 features;
  MelSpectrogram spectrogram;
};

ProcessedRecording process_recording(const Recording& rec, const SpectroConfig& cfg = {});

// Feature table CSV:
// recording_id,speaker_id,diagnosis,gender,f0,jitter,shimmer,hnr,f1,f2,f3,mfcc0..mfcc12
void write_feature_table(std::ostream& out, std::span<const ProcessedRecording> rows);
// Rows come back without spectrograms.
std::vector<ProcessedRecording> read_feature_table(std::istream& in);

}  // namespace vt
