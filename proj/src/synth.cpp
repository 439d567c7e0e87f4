#include "voicetriage/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "voicetriage/error.hpp"
#include "voicetriage/rng.hpp"

namespace vt {

void validate(const SynthParams& p) {
  if (!(p.f0 >= 60.0 && p.f0 <= 500.0)) fail(ErrorKind::InvalidArgument, "synth: f0 outside [60, 500]");
  if (!(p.duration > 0.0)) fail(ErrorKind::InvalidArgument, "synth: duration must be positive");
  if (p.sample_rate <= 0) fail(ErrorKind::InvalidArgument, "synth: sample rate must be positive");
  if (p.jitter_pct < 0.0 || p.shimmer_pct < 0.0) {
    fail(ErrorKind::InvalidArgument, "synth: perturbations must be non-negative");
  }
  for (const auto& f : p.formants) {
    if (!(f.bandwidth_hz > 0.0)) fail(ErrorKind::InvalidArgument, "synth: bandwidths must be positive");
    if (!(f.center_hz > 0.0 && f.center_hz < 0.5 * p.sample_rate)) {
      fail(ErrorKind::InvalidArgument, "synth: formant outside (0, Nyquist)");
    }
  }
}

namespace {

constexpr int kPulseHalfWidth = 16;

// Hann-windowed sinc: a unit impulse at fractional position `d` samples away.
double pulse_kernel(double d) {
  if (std::abs(d) >= kPulseHalfWidth) return 0.0;
  const double w = 0.5 + 0.5 * std::cos(std::numbers::pi * d / kPulseHalfWidth);
  if (d == 0.0) return w;
  const double px = std::numbers::pi * d;
  return w * std::sin(px) / px;
}

void resonate(std::vector<double>& x, const Formant& f, int fs) {
  const double r = std::exp(-std::numbers::pi * f.bandwidth_hz / fs);
  const double a1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * f.center_hz / fs);
  const double a2 = -r * r;
  const double gain = 1.0 - a1 - a2;
  double y1 = 0.0;
  double y2 = 0.0;
  for (double& v : x) {
    const double y = gain * v + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    v = y;
  }
}

}  // namespace

Audio synth_phonation(const SynthParams& p) {
  validate(p);
  Rng rng(p.seed);
  const int fs = p.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(p.duration * fs));
  std::vector<double> x(n, 0.0);

  // For u, u' ~ U(-h, h) independent, E|u - u'| = 2h/3, so h = 1.5 * pct/100
  // makes the expected local perturbation equal the requested percentage.
  const double period = static_cast<double>(fs) / p.f0;
  const double jitter_h = 1.5 * p.jitter_pct / 100.0;
  const double shimmer_h = 1.5 * p.shimmer_pct / 100.0;

  double t = 0.5 * period;
  while (t < static_cast<double>(n)) {
    const double amp = 1.0 + rng.uniform(-shimmer_h, shimmer_h);
    const auto lo = static_cast<long>(std::ceil(t - kPulseHalfWidth));
    const auto hi = static_cast<long>(std::floor(t + kPulseHalfWidth));
    for (long k = std::max(0L, lo); k <= hi && k < static_cast<long>(n); ++k) {
      x[static_cast<std::size_t>(k)] += amp * pulse_kernel(static_cast<double>(k) - t);
    }
    t += period * (1.0 + rng.uniform(-jitter_h, jitter_h));
  }

  for (const auto& f : p.formants) resonate(x, f, fs);

  double power = 0.0;
  for (double v : x) power += v * v;
  power /= static_cast<double>(std::max<std::size_t>(n, 1));
  const double sigma = std::sqrt(power / std::pow(10.0, p.noise_snr_db / 10.0));
  for (double& v : x) v += sigma * rng.normal();

  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (double& v : x) v *= 0.5 / peak;
  }
  return Audio{std::move(x), fs};
}

namespace {

struct ClassProfile {
  double jitter_pct;
  double shimmer_pct;
  double snr_db;
  double f0_factor;
  double f1_factor;
  double f2_factor;
  double female_share;  // from the cohort demographics table
  double table_count;
};

// Group level sets the perturbation and noise regime (healthy: clean;
// functional/psychogenic: moderate; structural/inflammatory: strong);
// subtypes within a group differ by smaller pitch and formant offsets.
ClassProfile profile_for(Diagnosis d) {
  switch (d) {
    case Diagnosis::Healthy: return {0.35, 1.8, 30.0, 1.00, 1.00, 1.00, 0.620, 681};
    case Diagnosis::HyperfunctionalDysphonia: return {1.2, 3.4, 21.0, 1.12, 1.06, 1.03, 0.757, 173};
    case Diagnosis::FunctionalDysphonia: return {1.5, 3.0, 20.0, 0.95, 1.00, 0.96, 0.674, 92};
    case Diagnosis::Dysodia: return {1.1, 4.0, 19.0, 1.04, 0.93, 1.02, 0.686, 51};
    case Diagnosis::PsychogenicDysphonia: return {1.6, 3.7, 18.0, 0.90, 1.05, 1.05, 0.659, 44};
    case Diagnosis::Laryngitis: return {2.4, 6.0, 11.0, 0.95, 1.00, 1.00, 0.410, 117};
    case Diagnosis::ContactPachydermia: return {2.9, 5.0, 13.0, 0.88, 1.06, 0.97, 0.048, 42};
    case Diagnosis::ReinkeEdema: return {2.1, 7.2, 12.0, 0.78, 0.95, 1.02, 0.829, 35};
    case Diagnosis::VocalCordPolyp: return {3.3, 5.4, 9.5, 1.02, 1.02, 1.05, 0.308, 26};
  }
  return {};
}

std::array<Formant, 3> vowel_formants(Vowel v) {
  switch (v) {
    case Vowel::A: return {{{800.0, 80.0}, {1250.0, 90.0}, {2700.0, 120.0}}};
    case Vowel::I: return {{{320.0, 60.0}, {2300.0, 100.0}, {3000.0, 130.0}}};
    case Vowel::U: return {{{340.0, 60.0}, {850.0, 80.0}, {2400.0, 120.0}}};
  }
  return {};
}

double pitch_factor(Pitch p) {
  switch (p) {
    case Pitch::Neutral: return 1.0;
    case Pitch::High: return 1.35;
    case Pitch::Low: return 0.8;
    case Pitch::Glide: return 1.1;
  }
  return 1.0;
}

std::string pad_number(std::size_t v, int width) {
  std::string s = std::to_string(v);
  if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
  return s;
}

}  // namespace

std::vector<CohortItem> generate_cohort(const CohortConfig& cfg) {
  if (cfg.speakers < kNumDiagnoses) {
    fail(ErrorKind::InvalidArgument, "cohort needs at least one speaker per class");
  }
  // Speakers per class: equal shares, or largest-remainder allocation of the
  // demographics-table counts (at least one speaker per class).
  std::array<std::size_t, kNumDiagnoses> per_class{};
  if (cfg.balanced) {
    for (std::size_t c = 0; c < kNumDiagnoses; ++c) {
      per_class[c] = cfg.speakers / kNumDiagnoses + (c < cfg.speakers % kNumDiagnoses ? 1 : 0);
    }
  } else {
    double total = 0.0;
    for (Diagnosis d : kAllDiagnoses) total += profile_for(d).table_count;
    std::size_t assigned = 0;
    std::array<double, kNumDiagnoses> remainder{};
    const std::size_t extra = cfg.speakers - kNumDiagnoses;
    for (Diagnosis d : kAllDiagnoses) {
      const double exact = static_cast<double>(extra) * profile_for(d).table_count / total;
      per_class[index_of(d)] = 1 + static_cast<std::size_t>(exact);
      remainder[index_of(d)] = exact - std::floor(exact);
      assigned += per_class[index_of(d)];
    }
    while (assigned < cfg.speakers) {
      const auto it = std::max_element(remainder.begin(), remainder.end());
      ++per_class[static_cast<std::size_t>(it - remainder.begin())];
      *it = -1.0;
      ++assigned;
    }
  }

  Rng rng(cfg.seed);
  std::vector<CohortItem> items;
  std::size_t speaker_index = 0;
  for (Diagnosis dx : kAllDiagnoses) {
    const ClassProfile prof = profile_for(dx);
    for (std::size_t s = 0; s < per_class[index_of(dx)]; ++s, ++speaker_index) {
      const std::string speaker = "spk" + pad_number(speaker_index, 4);
      const Gender gender = rng.uniform() < prof.female_share ? Gender::Female : Gender::Male;
      const double age = std::round(rng.uniform(18.0, 85.0));
      const double base_f0 = (gender == Gender::Female ? 205.0 : 115.0) * prof.f0_factor *
                             std::exp(0.08 * rng.normal());
      const double tract = (gender == Gender::Female ? 1.0 : 0.88) * std::exp(0.03 * rng.normal());
      const double jitter = prof.jitter_pct * std::exp(0.2 * rng.normal());
      const double shimmer = prof.shimmer_pct * std::exp(0.2 * rng.normal());
      const double snr = prof.snr_db + 2.5 * rng.normal();

      std::size_t take = 0;
      for (Vowel v : {Vowel::A, Vowel::I, Vowel::U}) {
        for (Pitch p : {Pitch::Neutral, Pitch::High, Pitch::Low, Pitch::Glide}) {
          CohortItem item;
          auto& d = item.descriptor;
          d.recording_id = speaker + "_" + pad_number(take++, 2);
          d.path = d.recording_id + ".wav";
          d.speaker_id = speaker;
          d.gender = gender;
          d.age = age;
          d.vowel = v;
          d.pitch = p;
          d.diagnosis = dx;

          SynthParams& sp = item.params;
          sp.f0 = std::clamp(base_f0 * pitch_factor(p) * std::exp(0.03 * rng.normal()), 65.0, 480.0);
          sp.jitter_pct = jitter * std::exp(0.1 * rng.normal());
          sp.shimmer_pct = shimmer * std::exp(0.1 * rng.normal());
          sp.noise_snr_db = snr + 1.5 * rng.normal();
          sp.formants = vowel_formants(v);
          sp.formants[0].center_hz *= tract * prof.f1_factor;
          sp.formants[1].center_hz *= tract * prof.f2_factor;
          sp.formants[2].center_hz *= tract;
          sp.duration = cfg.duration;
          sp.sample_rate = cfg.sample_rate;
          sp.seed = rng.next();
          items.push_back(std::move(item));
        }
      }
    }
  }
  return items;
}

Recording synthesize_recording(const CohortItem& item) {
  Audio audio = synth_phonation(item.params);
  Recording rec;
  const auto& d = item.descriptor;
  rec.recording_id = d.recording_id;
  rec.speaker_id = d.speaker_id;
  rec.samples = resample(audio.samples, audio.sample_rate, kAnalysisRate);
  rec.sample_rate = kAnalysisRate;
  rec.vowel = d.vowel;
  rec.pitch = d.pitch;
  rec.gender = d.gender;
  rec.age = d.age;
  rec.diagnosis = d.diagnosis;
  return rec;
}

}  // namespace vt
