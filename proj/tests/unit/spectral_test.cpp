#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "expect_error.hpp"
#include "voicetriage/rng.hpp"
#include "voicetriage/spectral.hpp"

using namespace vt;

namespace {

std::vector<double> sine(double hz, double seconds, double amp = 1.0, int rate = kAnalysisRate) {
  std::vector<double> x(static_cast<std::size_t>(seconds * rate));
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * hz * i / rate);
  return x;
}

std::vector<double> noise(std::size_t n, std::uint64_t seed, double sigma = 0.1) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (double& v : x) v = sigma * rng.normal();
  return x;
}

// Mel scale written out independently of the library.
double oracle_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double oracle_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

TEST_CASE("frame count arithmetic") {
  const SpectroConfig cfg;
  CHECK(stft_frame_count(1024, cfg) == 1);
  CHECK(stft_frame_count(1152, cfg) == 2);
  CHECK(stft_frame_count(44100, cfg) == 337);
  CHECK(stft_power(std::vector<double>(1152, 0.1), cfg).cols() == 2);
  CHECK_ERROR_KIND(stft_power(std::vector<double>(1000, 0.1), cfg), ErrorKind::SignalTooShort);
}

TEST_CASE("440 Hz sine peaks at FFT bin 10 in every frame") {
  const SpectroConfig cfg;
  const Matrix p = stft_power(sine(440.0, 1.0), cfg);
  REQUIRE(p.rows() == 513);
  // Brute-force DFT of the first frame agrees on the peak.
  const auto x = sine(440.0, 1.0);
  std::size_t dft_peak = 0;
  double dft_best = -1.0;
  for (std::size_t k = 0; k < 40; ++k) {
    double re = 0.0;
    double im = 0.0;
    for (std::size_t n = 0; n < 1024; ++n) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / 1024.0);
      re += w * x[n] * std::cos(2.0 * std::numbers::pi * k * n / 1024.0);
      im -= w * x[n] * std::sin(2.0 * std::numbers::pi * k * n / 1024.0);
    }
    if (re * re + im * im > dft_best) {
      dft_best = re * re + im * im;
      dft_peak = k;
    }
  }
  CHECK(dft_peak == 10);
  for (std::size_t f = 0; f < p.cols(); ++f) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < p.rows(); ++k) {
      if (p(k, f) > p(best, f)) best = k;
    }
    CHECK(best == 10);
  }
}

TEST_CASE("property: STFT power obeys Parseval per frame") {
  SpectroConfig cfg;
  const auto x = noise(4096, 5);
  const Matrix p = stft_power(x, cfg);
  const std::size_t n = 1024;
  for (std::size_t f = 0; f < p.cols(); ++f) {
    double energy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
      energy += std::pow(w * x[f * 128 + i], 2);
    }
    double full = p(0, f) + p(n / 2, f);
    for (std::size_t k = 1; k < n / 2; ++k) full += 2.0 * p(k, f);
    CHECK(full / n == doctest::Approx(energy).epsilon(1e-6));
  }
}

TEST_CASE("mel filterbank centers match the mel formula") {
  const SpectroConfig cfg;
  const auto centers = mel_center_frequencies(cfg);
  REQUIRE(centers.size() == 128);
  const double lo = oracle_mel(0.0);
  const double hi = oracle_mel(22050.0);
  for (std::size_t i : {0u, 64u, 127u}) {
    const double want = oracle_hz(lo + (hi - lo) * (i + 1) / 129.0);
    CHECK(std::abs(centers[i] - want) < 0.5);
  }
  for (std::size_t i = 1; i < centers.size(); ++i) CHECK(centers[i] > centers[i - 1]);
  CHECK(hz_to_mel(1000.0) == doctest::Approx(oracle_mel(1000.0)).epsilon(1e-12));
  CHECK(mel_to_hz(hz_to_mel(3210.0)) == doctest::Approx(3210.0).epsilon(1e-12));

  const Matrix fb = mel_filterbank(cfg);
  CHECK(fb.rows() == 128);
  CHECK(fb.cols() == 513);
  for (std::size_t b = 0; b < fb.rows(); ++b) {
    double row = 0.0;
    for (std::size_t k = 0; k < fb.cols(); ++k) {
      CHECK(fb(b, k) >= 0.0);
      row += fb(b, k);
    }
    CHECK(row > 0.0);
  }
}

TEST_CASE("narrow bands still receive weight at coarse FFT resolution") {
  SpectroConfig cfg;
  cfg.fft_size = 64;
  cfg.hop = 32;
  const Matrix fb = mel_filterbank(cfg);
  for (std::size_t b = 0; b < fb.rows(); ++b) {
    double row = 0.0;
    for (std::size_t k = 0; k < fb.cols(); ++k) row += fb(b, k);
    CHECK(row > 0.0);
  }
}

TEST_CASE("log-mel image shape and normalization") {
  const SpectroConfig cfg;
  const auto x = sine(440.0, 1.0, 0.5);
  const MelSpectrogram m = log_mel_spectrogram(x, cfg);
  CHECK(m.rows == 128);
  CHECK(m.cols == 256);
  double mean = 0.0;
  for (float v : m.values) mean += v;
  mean /= m.values.size();
  double var = 0.0;
  for (float v : m.values) var += (v - mean) * (v - mean);
  var /= m.values.size();
  CHECK(std::abs(mean) < 1e-6);
  CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-6));

  // Short signals are right-padded with the floor.
  const MelSpectrogram s = log_mel_spectrogram(sine(440.0, 0.2, 0.5), cfg);
  CHECK(s.cols == 256);
  CHECK(s(0, 255) == s(127, 255));
}

TEST_CASE("silence normalizes to all zeros") {
  const MelSpectrogram m = log_mel_spectrogram(std::vector<double>(2 * kAnalysisRate, 0.0), SpectroConfig{});
  CHECK(m.values.size() == 128u * 256u);
  CHECK(std::all_of(m.values.begin(), m.values.end(), [](float v) { return v == 0.0f; }));
}

TEST_CASE("440 Hz sine peaks in the mel band centered nearest 440 Hz") {
  const SpectroConfig cfg;
  const Matrix db = relative_db(mel_power(sine(440.0, 1.0), cfg), cfg);
  const auto centers = mel_center_frequencies(cfg);
  std::size_t nearest = 0;
  for (std::size_t b = 1; b < centers.size(); ++b) {
    if (std::abs(centers[b] - 440.0) < std::abs(centers[nearest] - 440.0)) nearest = b;
  }
  for (std::size_t f = 0; f < db.cols(); f += 50) {
    std::size_t best = 0;
    for (std::size_t b = 1; b < db.rows(); ++b) {
      if (db(b, f) > db(best, f)) best = b;
    }
    CHECK(best == nearest);
  }
}

TEST_CASE("property: log-mel output ignores global gain") {
  const SpectroConfig cfg;
  auto x = noise(kAnalysisRate, 9, 0.05);
  const auto tone = sine(300.0, 1.0, 0.3);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += tone[i];
  const MelSpectrogram ref = log_mel_spectrogram(x, cfg);
  for (double gain : {0.1, 3.0}) {
    std::vector<double> y = x;
    for (double& v : y) v *= gain;
    const MelSpectrogram m = log_mel_spectrogram(y, cfg);
    double worst = 0.0;
    for (std::size_t i = 0; i < m.values.size(); ++i) worst = std::max(worst, double(std::abs(m.values[i] - ref.values[i])));
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("MFCC of a constant log-mel frame is zero beyond c0") {
  Matrix log_mel(128, 7, -3.25);
  const auto c = mfcc_from_log_mel(log_mel);
  REQUIRE(c.size() == 13);
  CHECK(c[0] != 0.0);
  CHECK(c[0] == doctest::Approx(-3.25 * std::sqrt(128.0)).epsilon(1e-12));
  for (std::size_t k = 1; k < 13; ++k) CHECK(std::abs(c[k]) < 1e-12);
}

TEST_CASE("MFCC matches a naive DCT-II on white noise") {
  const SpectroConfig cfg;
  const auto x = noise(kAnalysisRate / 2, 21);
  const Matrix mp = mel_power(x, cfg);
  const auto got = mfcc(x, cfg);
  REQUIRE(got.size() == 13);
  const std::size_t bands = mp.rows();
  std::vector<double> want(13, 0.0);
  for (std::size_t f = 0; f < mp.cols(); ++f) {
    for (std::size_t k = 0; k < 13; ++k) {
      double s = 0.0;
      for (std::size_t b = 0; b < bands; ++b) {
        s += std::log(std::max(mp(b, f), 1e-10)) * std::cos(std::numbers::pi * k * (2.0 * b + 1.0) / (2.0 * bands));
      }
      want[k] += s * std::sqrt((k == 0 ? 1.0 : 2.0) / bands);
    }
  }
  for (std::size_t k = 0; k < 13; ++k) {
    want[k] /= static_cast<double>(mp.cols());
    CHECK(std::isfinite(got[k]));
    CHECK(got[k] == doctest::Approx(want[k]).epsilon(1e-9));
  }
}

TEST_CASE("property: a constant log-mel offset only moves c0") {
  Rng rng(4);
  Matrix a(128, 20);
  for (double& v : a.data()) v = rng.normal();
  Matrix b = a;
  for (double& v : b.data()) v += 2.5;
  const auto ca = mfcc_from_log_mel(a);
  const auto cb = mfcc_from_log_mel(b);
  CHECK(cb[0] - ca[0] == doctest::Approx(2.5 * std::sqrt(128.0)).epsilon(1e-12));
  for (std::size_t k = 1; k < 13; ++k) CHECK(cb[k] == doctest::Approx(ca[k]).epsilon(1e-9));
}

TEST_CASE("spectrogram dump round trip and rejects damage") {
  const MelSpectrogram m = log_mel_spectrogram(sine(220.0, 0.5, 0.4), SpectroConfig{});
  auto bytes = encode_spectrogram(m);
  CHECK(bytes.size() == 16 + 128 * 256 * 4);
  const MelSpectrogram back = decode_spectrogram(bytes);
  CHECK(back.rows == m.rows);
  CHECK(back.cols == m.cols);
  CHECK(back.values == m.values);
  bytes.pop_back();
  CHECK_ERROR_KIND(decode_spectrogram(bytes), ErrorKind::TruncatedFile);
  bytes[0] = 'X';
  CHECK_ERROR_KIND(decode_spectrogram(bytes), ErrorKind::MalformedHeader);
}

TEST_CASE("config validation") {
  SpectroConfig cfg;
  cfg.hop = 2048;
  CHECK_ERROR_KIND(cfg.validate(), ErrorKind::InvalidArgument);
  cfg = SpectroConfig{};
  cfg.mel_bands = 1;
  CHECK_ERROR_KIND(cfg.validate(), ErrorKind::InvalidArgument);
  cfg = SpectroConfig{};
  cfg.fixed_frames = 0;
  CHECK_ERROR_KIND(cfg.validate(), ErrorKind::InvalidArgument);
}
