#include "voicetriage/biomarkers.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <istream>
#include <numbers>
#include <ostream>

#include "voicetriage/csv.hpp"
#include "voicetriage/error.hpp"
#include "voicetriage/fft.hpp"

namespace vt {
namespace {

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Vertex of the parabola through (i-1, i, i+1): offset in [-0.5, 0.5] and value.
std::pair<double, double> parabolic_peak(double left, double centre, double right) {
  const double denom = left - 2.0 * centre + right;
  if (!(denom < 0.0)) return {0.0, centre};
  const double delta = std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
  return {delta, centre - 0.25 * (left - right) * delta};
}

}  // namespace

PeriodicityAnalysis analyze_periodicity(std::span<const double> samples, int sample_rate, double fmin,
                                        double fmax) {
  if (sample_rate <= 0 || !(fmin > 0.0 && fmin < fmax)) {
    fail(ErrorKind::InvalidArgument, "periodicity: bad rate or pitch range");
  }
  const auto frame_len = static_cast<std::size_t>(std::ceil(2.0 * sample_rate / fmin));
  if (samples.size() < frame_len) {
    fail(ErrorKind::SignalTooShort, "periodicity: need at least " + std::to_string(frame_len) + " samples");
  }
  PeriodicityAnalysis out;
  out.sample_rate = sample_rate;
  out.fmin = fmin;
  out.fmax = fmax;
  out.min_lag = std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(sample_rate / fmax)));
  out.max_lag = std::min(static_cast<std::size_t>(std::ceil(sample_rate / fmin)), frame_len - 2);

  const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.01 * sample_rate)));
  const std::size_t n_frames = 1 + (samples.size() - frame_len) / hop;
  const std::size_t nfft = next_pow2(2 * frame_len);
  RealFft& fft = fft_for(nfft);

  std::vector<double> x(frame_len);
  std::vector<double> cum(frame_len + 1);
  std::vector<std::complex<double>> spec(nfft / 2 + 1);
  std::vector<double> acf(nfft);
  std::vector<double> energies(n_frames);
  for (std::size_t f = 0; f < n_frames; ++f) {
    double e = 0.0;
    for (std::size_t i = 0; i < frame_len; ++i) e += samples[f * hop + i] * samples[f * hop + i];
    energies[f] = e;
  }
  const double max_energy = *std::max_element(energies.begin(), energies.end());

  out.frames.resize(n_frames);
  for (std::size_t f = 0; f < n_frames; ++f) {
    if (!(energies[f] > 1e-10 * max_energy) || max_energy == 0.0) continue;
    const auto frame = samples.subspan(f * hop, frame_len);
    double mean = 0.0;
    for (double v : frame) mean += v;
    mean /= static_cast<double>(frame_len);
    cum[0] = 0.0;
    for (std::size_t i = 0; i < frame_len; ++i) {
      x[i] = frame[i] - mean;
      cum[i + 1] = cum[i] + x[i] * x[i];
    }
    if (!(cum[frame_len] > 0.0)) continue;
    fft.forward(x, spec);
    for (auto& c : spec) c = std::norm(c);
    fft.inverse(spec, acf);
    auto& r = out.frames[f];
    r.assign(out.max_lag + 2, 0.0);
    for (std::size_t lag = 0; lag < r.size(); ++lag) {
      const double head = cum[frame_len - lag];
      const double tail = cum[frame_len] - cum[lag];
      const double denom = std::sqrt(head * tail);
      r[lag] = denom > 0.0 ? acf[lag] / static_cast<double>(nfft) / denom : 0.0;
    }
  }
  return out;
}

std::optional<double> estimate_f0(const PeriodicityAnalysis& analysis) {
  const double fs = analysis.sample_rate;
  std::vector<double> voiced;
  std::vector<std::pair<double, double>> peaks;
  for (const auto& r : analysis.frames) {
    if (r.empty()) continue;
    peaks.clear();
    double best = -1.0;
    for (std::size_t lag = analysis.min_lag; lag <= analysis.max_lag; ++lag) {
      if (!(r[lag] > r[lag - 1] && r[lag] >= r[lag + 1])) continue;
      const auto [delta, peak] = parabolic_peak(r[lag - 1], r[lag], r[lag + 1]);
      peaks.emplace_back(static_cast<double>(lag) + delta, peak);
      best = std::max(best, peak);
    }
    if (best < kVoicingThreshold) continue;
    const auto chosen = std::find_if(peaks.begin(), peaks.end(),
                                     [&](const auto& p) { return p.second >= kPeakFraction * best; });
    const double f0 = fs / chosen->first;
    if (f0 >= analysis.fmin && f0 <= analysis.fmax) voiced.push_back(f0);
  }
  if (voiced.empty()) return std::nullopt;
  return median(std::move(voiced));
}

std::optional<double> estimate_f0(std::span<const double> samples, int sample_rate, double fmin, double fmax) {
  return estimate_f0(analyze_periodicity(samples, sample_rate, fmin, fmax));
}

CycleMarks detect_cycles(std::span<const double> samples, int sample_rate, double f0) {
  if (!(f0 > 0.0) || sample_rate <= 0) fail(ErrorKind::Unvoiced, "detect_cycles: f0 must be voiced");
  const double period = sample_rate / f0;
  const auto n = static_cast<long>(samples.size());
  if (n < 3) fail(ErrorKind::TooFewCycles, "detect_cycles: signal too short");

  struct Mark {
    double pos;
    double amp;
  };
  auto refine = [&](long i) {
    if (i <= 0 || i >= n - 1) return Mark{static_cast<double>(i), std::abs(samples[static_cast<std::size_t>(i)])};
    const auto [delta, value] = parabolic_peak(samples[static_cast<std::size_t>(i - 1)],
                                               samples[static_cast<std::size_t>(i)],
                                               samples[static_cast<std::size_t>(i + 1)]);
    return Mark{static_cast<double>(i) + delta, std::abs(value)};
  };
  auto argmax = [&](long lo, long hi) {
    long best = lo;
    for (long i = lo + 1; i <= hi; ++i) {
      if (samples[static_cast<std::size_t>(i)] > samples[static_cast<std::size_t>(best)]) best = i;
    }
    return best;
  };

  const long anchor_end = std::min(n - 1, static_cast<long>(std::ceil(3.0 * period)));
  const Mark anchor = refine(argmax(0, anchor_end));

  std::vector<Mark> forward{anchor};
  for (;;) {
    const double last = forward.back().pos;
    if (last + period > static_cast<double>(n - 1)) break;
    const auto lo = static_cast<long>(std::ceil(last + 0.6 * period));
    const auto hi = std::min(n - 1, static_cast<long>(std::floor(last + 1.4 * period)));
    if (lo > hi) break;
    const Mark m = refine(argmax(lo, hi));
    if (m.pos <= last) break;
    forward.push_back(m);
  }
  std::vector<Mark> backward;
  for (double last = anchor.pos;;) {
    if (last - period < 0.0) break;
    const auto lo = std::max(0L, static_cast<long>(std::ceil(last - 1.4 * period)));
    const auto hi = static_cast<long>(std::floor(last - 0.6 * period));
    if (lo > hi) break;
    const Mark m = refine(argmax(lo, hi));
    if (m.pos >= last) break;
    backward.push_back(m);
    last = m.pos;
  }

  CycleMarks marks;
  for (auto it = backward.rbegin(); it != backward.rend(); ++it) {
    if (it->amp > 0.0) {
      marks.peak_times.push_back(it->pos / sample_rate);
      marks.peak_amps.push_back(it->amp);
    }
  }
  for (const Mark& m : forward) {
    if (m.amp > 0.0) {
      marks.peak_times.push_back(m.pos / sample_rate);
      marks.peak_amps.push_back(m.amp);
    }
  }
  if (marks.peak_times.size() < 3) {
    fail(ErrorKind::TooFewCycles,
         "detect_cycles: found " + std::to_string(marks.peak_times.size()) + " cycles, need 3");
  }
  return marks;
}

std::vector<double> glottal_residual(std::span<const double> samples, int sample_rate, double cutoff_hz) {
  if (sample_rate <= 0 || !(cutoff_hz > 0.0 && cutoff_hz < 0.5 * sample_rate)) {
    fail(ErrorKind::InvalidArgument, "glottal_residual: bad rate or cutoff");
  }
  const std::size_t n = samples.size();
  if (n <= static_cast<std::size_t>(kResidualOrder)) {
    fail(ErrorKind::SignalTooShort, "glottal_residual: signal shorter than the LPC order");
  }
  std::vector<double> windowed(n);
  for (std::size_t i = 0; i < n; ++i) {
    windowed[i] = samples[i] * (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                                     static_cast<double>(n - 1)));
  }
  std::vector<double> r(kResidualOrder + 1, 0.0);
  for (std::size_t lag = 0; lag < r.size(); ++lag) {
    for (std::size_t i = lag; i < n; ++i) r[lag] += windowed[i] * windowed[i - lag];
  }
  if (!(r[0] > 0.0)) return std::vector<double>(n, 0.0);
  r[0] *= 1.0 + 1e-9;
  const auto a = levinson_durbin(r, kResidualOrder);

  const double fc = cutoff_hz / sample_rate;
  const auto half = static_cast<long>(std::ceil(4.0 / fc));
  std::vector<double> lowpass(static_cast<std::size_t>(2 * half + 1));
  double gain = 0.0;
  for (long k = -half; k <= half; ++k) {
    const double x = std::numbers::pi * static_cast<double>(k);
    double v = k == 0 ? 2.0 * fc : std::sin(2.0 * fc * x) / x;
    v *= 0.5 + 0.5 * std::cos(x / static_cast<double>(half + 1));
    lowpass[static_cast<std::size_t>(k + half)] = v;
    gain += v;
  }
  std::vector<double> kernel(lowpass.size() + a.size() - 1, 0.0);
  for (std::size_t i = 0; i < lowpass.size(); ++i) {
    for (std::size_t j = 0; j < a.size(); ++j) kernel[i + j] += lowpass[i] * a[j] / gain;
  }

  const std::size_t nfft = next_pow2(n + kernel.size());
  RealFft& fft = fft_for(nfft);
  std::vector<std::complex<double>> xs(nfft / 2 + 1);
  std::vector<std::complex<double>> ks(nfft / 2 + 1);
  fft.forward(samples, xs);
  fft.forward(kernel, ks);
  for (std::size_t k = 0; k < xs.size(); ++k) xs[k] *= ks[k] / static_cast<double>(nfft);
  std::vector<double> full(nfft);
  fft.inverse(xs, full);
  return std::vector<double>(full.begin() + half, full.begin() + half + static_cast<long>(n));
}

CycleMarks glottal_cycles(std::span<const double> samples, int sample_rate, double f0) {
  const auto residual = glottal_residual(samples, sample_rate, kCycleResidualCutoffHz);
  CycleMarks marks = detect_cycles(residual, sample_rate, f0);
  const double period = sample_rate / f0;
  const auto n = static_cast<long>(samples.size());
  CycleMarks out;
  for (double t : marks.peak_times) {
    const auto lo = static_cast<long>(std::floor(t * sample_rate));
    const long hi = std::min(n - 1, lo + static_cast<long>(0.5 * period));
    long best = std::max(0L, lo);
    for (long i = best + 1; i <= hi; ++i) {
      if (std::abs(samples[static_cast<std::size_t>(i)]) > std::abs(samples[static_cast<std::size_t>(best)])) {
        best = i;
      }
    }
    double amp = std::abs(samples[static_cast<std::size_t>(best)]);
    if (best > 0 && best < n - 1) {
      const double sign = samples[static_cast<std::size_t>(best)] < 0.0 ? -1.0 : 1.0;
      amp = sign * parabolic_peak(sign * samples[static_cast<std::size_t>(best - 1)],
                                  sign * samples[static_cast<std::size_t>(best)],
                                  sign * samples[static_cast<std::size_t>(best + 1)])
                       .second;
      amp = std::abs(amp);
    }
    if (amp > 0.0) {
      out.peak_times.push_back(t);
      out.peak_amps.push_back(amp);
    }
  }
  if (out.peak_times.size() < 3) fail(ErrorKind::TooFewCycles, "glottal_cycles: fewer than 3 cycles");
  return out;
}

double jitter_local(const CycleMarks& marks) {
  const auto& t = marks.peak_times;
  if (t.size() < 3) fail(ErrorKind::TooFewCycles, "jitter needs at least 3 cycles");
  double sum_period = 0.0;
  double sum_diff = 0.0;
  double prev = t[1] - t[0];
  sum_period += prev;
  for (std::size_t i = 2; i < t.size(); ++i) {
    const double period = t[i] - t[i - 1];
    sum_diff += std::abs(period - prev);
    sum_period += period;
    prev = period;
  }
  const double mean_period = sum_period / static_cast<double>(t.size() - 1);
  const double mean_diff = sum_diff / static_cast<double>(t.size() - 2);
  return 100.0 * mean_diff / mean_period;
}

double shimmer_local(const CycleMarks& marks) {
  const auto& a = marks.peak_amps;
  if (a.size() < 3) fail(ErrorKind::TooFewCycles, "shimmer needs at least 3 cycles");
  double sum_amp = 0.0;
  double sum_diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sum_amp += a[i];
    if (i + 1 < a.size()) sum_diff += std::abs(a[i] - a[i + 1]);
  }
  const double mean_amp = sum_amp / static_cast<double>(a.size());
  return 100.0 * (sum_diff / static_cast<double>(a.size() - 1)) / mean_amp;
}

double hnr_from_correlation(double r) {
  if (!(r > 0.0)) return kHnrFloorDb;
  if (r >= 1.0) return kHnrCeilingDb;
  return std::clamp(10.0 * std::log10(r / (1.0 - r)), kHnrFloorDb, kHnrCeilingDb);
}

double hnr(const PeriodicityAnalysis& analysis, double f0) {
  if (!(f0 > 0.0)) fail(ErrorKind::Unvoiced, "hnr: f0 must be voiced");
  const double lag0 = analysis.sample_rate / f0;
  const auto lo = std::max<long>(1, static_cast<long>(std::floor(0.9 * lag0)));
  const auto hi = std::min<long>(static_cast<long>(analysis.max_lag), static_cast<long>(std::ceil(1.1 * lag0)));
  if (lo > hi) fail(ErrorKind::Unvoiced, "hnr: F0 lag outside the analysis range");
  double total = 0.0;
  std::size_t voiced = 0;
  for (const auto& r : analysis.frames) {
    if (r.empty()) continue;
    long best = lo;
    for (long lag = lo + 1; lag <= hi; ++lag) {
      if (r[static_cast<std::size_t>(lag)] > r[static_cast<std::size_t>(best)]) best = lag;
    }
    const auto b = static_cast<std::size_t>(best);
    double peak = r[b];
    if (best > lo && best < hi) peak = parabolic_peak(r[b - 1], r[b], r[b + 1]).second;
    if (peak < kVoicingThreshold) continue;
    total += hnr_from_correlation(peak);
    ++voiced;
  }
  if (voiced == 0) fail(ErrorKind::Unvoiced, "hnr: no voiced frames");
  return total / static_cast<double>(voiced);
}

double hnr(std::span<const double> samples, int sample_rate, double f0) {
  return hnr(analyze_periodicity(samples, sample_rate), f0);
}

std::vector<double> levinson_durbin(std::span<const double> r, int order) {
  std::vector<double> a(static_cast<std::size_t>(order) + 1, 0.0);
  a[0] = 1.0;
  double err = r[0];
  std::vector<double> prev(a.size());
  for (int i = 1; i <= order && err > 0.0; ++i) {
    double acc = r[static_cast<std::size_t>(i)];
    for (int j = 1; j < i; ++j) acc += a[static_cast<std::size_t>(j)] * r[static_cast<std::size_t>(i - j)];
    const double k = -acc / err;
    prev = a;
    for (int j = 1; j < i; ++j) {
      a[static_cast<std::size_t>(j)] = prev[static_cast<std::size_t>(j)] + k * prev[static_cast<std::size_t>(i - j)];
    }
    a[static_cast<std::size_t>(i)] = k;
    err *= 1.0 - k * k;
  }
  return a;
}

std::vector<std::complex<double>> lpc_roots(std::span<const double> a) {
  const auto order = static_cast<Eigen::Index>(a.size()) - 1;
  if (order < 1) return {};
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(order, order);
  for (Eigen::Index j = 0; j < order; ++j) companion(0, j) = -a[static_cast<std::size_t>(j + 1)] / a[0];
  for (Eigen::Index i = 1; i < order; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  std::vector<std::complex<double>> roots;
  for (Eigen::Index i = 0; i < order; ++i) roots.push_back(solver.eigenvalues()[i]);
  return roots;
}

FormantEstimate formants_lpc(std::span<const double> samples, int sample_rate) {
  if (sample_rate <= 0) fail(ErrorKind::InvalidArgument, "formants: bad sample rate");
  if (static_cast<double>(samples.size()) < 0.05 * sample_rate) {
    fail(ErrorKind::SignalTooShort, "formants: need at least 50 ms of signal");
  }
  std::vector<double> emphasized(samples.size());
  emphasized[0] = samples[0];
  for (std::size_t i = 1; i < samples.size(); ++i) emphasized[i] = samples[i] - 0.97 * samples[i - 1];
  const auto target = static_cast<int>(kFormantRate);
  const std::vector<double> x = resample(emphasized, sample_rate, target);

  const auto frame_len = std::min(x.size(), static_cast<std::size_t>(std::lround(0.05 * kFormantRate)));
  const auto hop = static_cast<std::size_t>(std::lround(0.025 * kFormantRate));
  std::vector<double> window(frame_len);
  for (std::size_t i = 0; i < frame_len; ++i) {
    window[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                       static_cast<double>(frame_len - 1));
  }
  const std::size_t n_frames = 1 + (x.size() - frame_len) / hop;

  std::vector<std::vector<double>> autocorr(n_frames);
  double max_r0 = 0.0;
  std::vector<double> frame(frame_len);
  for (std::size_t f = 0; f < n_frames; ++f) {
    for (std::size_t i = 0; i < frame_len; ++i) frame[i] = x[f * hop + i] * window[i];
    auto& r = autocorr[f];
    r.assign(kLpcOrder + 1, 0.0);
    for (int lag = 0; lag <= kLpcOrder; ++lag) {
      double acc = 0.0;
      for (std::size_t i = static_cast<std::size_t>(lag); i < frame_len; ++i) {
        acc += frame[i] * frame[i - static_cast<std::size_t>(lag)];
      }
      r[static_cast<std::size_t>(lag)] = acc;
    }
    max_r0 = std::max(max_r0, r[0]);
  }

  std::array<std::vector<double>, 3> slots;
  std::size_t analysed = 0;
  for (auto& r : autocorr) {
    if (!(r[0] > 1e-8 * max_r0) || max_r0 == 0.0) continue;
    ++analysed;
    r[0] *= 1.0 + 1e-9;
    const auto a = levinson_durbin(r, kLpcOrder);
    std::vector<double> candidates;
    for (const auto& z : lpc_roots(a)) {
      if (z.imag() <= 0.0) continue;
      const double freq = std::arg(z) * kFormantRate / (2.0 * std::numbers::pi);
      const double bw = -std::log(std::abs(z)) * kFormantRate / std::numbers::pi;
      if (bw < 400.0 && freq >= 90.0 && freq <= 5000.0) candidates.push_back(freq);
    }
    if (candidates.size() < 3) continue;
    std::sort(candidates.begin(), candidates.end());
    for (std::size_t s = 0; s < 3; ++s) slots[s].push_back(candidates[s]);
  }
  FormantEstimate out;
  if (slots[0].empty() || 2 * slots[0].size() < analysed) return out;
  for (std::size_t s = 0; s < 3; ++s) out.hz[s] = median(slots[s]);
  out.complete = true;
  return out;
}

std::size_t FeatureVector21::sentinel_count() const {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), is_sentinel));
}

const std::array<std::string, kFeatureCount>& feature_names() {
  static const std::array<std::string, kFeatureCount> names = [] {
    std::array<std::string, kFeatureCount> n = {"gender", "f0", "jitter", "shimmer", "hnr", "f1", "f2", "f3"};
    for (std::size_t k = 0; k < 13; ++k) n[FeatureVector21::kMfcc0 + k] = "mfcc" + std::to_string(k);
    return n;
  }();
  return names;
}

namespace {

void fill_voice_features(FeatureVector21& fv, const Recording& rec) {
  try {
    const auto analysis = analyze_periodicity(rec.samples, rec.sample_rate);
    const auto f0 = estimate_f0(analysis);
    if (!f0) return;
    fv[FeatureVector21::kF0] = *f0;
    try {
      fv[FeatureVector21::kHnr] = hnr(analysis, *f0);
    } catch (const Error&) {
    }
    try {
      const auto marks = glottal_cycles(rec.samples, rec.sample_rate, *f0);
      fv[FeatureVector21::kJitter] = jitter_local(marks);
      fv[FeatureVector21::kShimmer] = shimmer_local(marks);
    } catch (const Error&) {
    }
  } catch (const Error&) {
  }
}

void fill_formants(FeatureVector21& fv, const Recording& rec) {
  try {
    const auto est = formants_lpc(rec.samples, rec.sample_rate);
    for (std::size_t s = 0; s < 3; ++s) fv[FeatureVector21::kF1 + s] = est.hz[s];
  } catch (const Error&) {
  }
}

FeatureVector21 blank_features(const Recording& rec) {
  FeatureVector21 fv;
  fv.values.fill(kSentinel);
  fv[FeatureVector21::kGender] = rec.gender == Gender::Male ? 1.0 : 0.0;
  return fv;
}

Matrix mel_power_padded(const Recording& rec, const SpectroConfig& cfg) {
  const auto n = static_cast<std::size_t>(cfg.fft_size);
  if (rec.samples.size() >= n) return mel_power(rec.samples, cfg);
  std::vector<double> padded(rec.samples);
  padded.resize(n, 0.0);
  return mel_power(padded, cfg);
}

}  // namespace

FeatureVector21 assemble_features(const Recording& rec) {
  FeatureVector21 fv = blank_features(rec);
  fill_voice_features(fv, rec);
  fill_formants(fv, rec);
  try {
    SpectroConfig cfg;
    cfg.sample_rate = rec.sample_rate;
    cfg.mel_fmax = 0.5 * rec.sample_rate;
    if (rec.samples.size() >= static_cast<std::size_t>(cfg.fft_size)) {
      const auto c = mfcc(rec.samples, cfg);
      for (std::size_t k = 0; k < c.size(); ++k) fv[FeatureVector21::kMfcc0 + k] = c[k];
    }
  } catch (const Error&) {
  }
  return fv;
}

ProcessedRecording process_recording(const Recording& rec, const SpectroConfig& cfg) {
  if (rec.sample_rate != cfg.sample_rate) {
    fail(ErrorKind::InvalidArgument, "process_recording: recording rate " + std::to_string(rec.sample_rate) +
                                         " differs from analysis rate " + std::to_string(cfg.sample_rate));
  }
  ProcessedRecording out;
  out.recording_id = rec.recording_id;
  out.speaker_id = rec.speaker_id;
  out.diagnosis = rec.diagnosis;
  out.features = blank_features(rec);
  fill_voice_features(out.features, rec);
  fill_formants(out.features, rec);
  const Matrix mel = mel_power_padded(rec, cfg);
  if (rec.samples.size() >= static_cast<std::size_t>(cfg.fft_size)) {
    const auto c = mfcc_from_mel_power(mel);
    for (std::size_t k = 0; k < c.size(); ++k) out.features[FeatureVector21::kMfcc0 + k] = c[k];
  }
  out.spectrogram = log_mel_from_mel_power(mel, cfg);
  return out;
}

void write_feature_table(std::ostream& out, std::span<const ProcessedRecording> rows) {
  out << "recording_id,speaker_id,diagnosis";
  for (const auto& name : feature_names()) out << ',' << name;
  out << '\n';
  for (const auto& row : rows) {
    out << csv::escape(row.recording_id) << ',' << csv::escape(row.speaker_id) << ','
        << diagnosis_name(row.diagnosis);
    for (double v : row.features.values) out << ',' << csv::format_double(v);
    out << '\n';
  }
}

std::vector<ProcessedRecording> read_feature_table(std::istream& in) {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    const auto text = csv::chomp(line);
    if (text.empty() || text.front() == '#') continue;
    header = csv::split_line(text);
    break;
  }
  if (header.size() != 3 + kFeatureCount || header[0] != "recording_id" || header[1] != "speaker_id" ||
      header[2] != "diagnosis") {
    fail(ErrorKind::MissingColumn, "feature table header does not match the expected columns");
  }
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    if (header[3 + k] != feature_names()[k]) {
      fail(ErrorKind::MissingColumn, "feature table column " + std::to_string(3 + k) + " should be " +
                                         feature_names()[k]);
    }
  }
  std::vector<ProcessedRecording> rows;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    const auto text = csv::chomp(line);
    if (text.empty() || text.front() == '#') continue;
    ++row;
    const auto f = csv::split_line(text);
    if (f.size() != header.size()) {
      fail(ErrorKind::MissingColumn, "feature table row " + std::to_string(row) + " has wrong field count");
    }
    ProcessedRecording r;
    r.recording_id = f[0];
    r.speaker_id = f[1];
    const auto dx = parse_diagnosis(f[2]);
    if (!dx) fail(ErrorKind::UnknownEnum, "feature table row " + std::to_string(row) + ": unknown diagnosis");
    r.diagnosis = *dx;
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
      const auto& s = f[3 + k];
      if (s == "nan") {
        r.features[k] = kSentinel;
        continue;
      }
      try {
        std::size_t used = 0;
        r.features[k] = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
      } catch (const std::exception&) {
        fail(ErrorKind::BadValue, "feature table row " + std::to_string(row) + ": bad number \"" + s + "\"");
      }
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace vt
