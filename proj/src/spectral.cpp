#include "voicetriage/spectral.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <limits>
#include <numbers>

#include "voicetriage/error.hpp"
#include "voicetriage/fft.hpp"

namespace vt {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

void SpectroConfig::validate() const {
  if (sample_rate <= 0 || fft_size < 2 || hop < 1) fail(ErrorKind::InvalidArgument, "spectro: bad sizes");
  if (hop > fft_size) fail(ErrorKind::InvalidArgument, "spectro: hop exceeds fft_size");
  if (mel_bands < 2) fail(ErrorKind::InvalidArgument, "spectro: need at least 2 mel bands");
  if (fixed_frames < 1) fail(ErrorKind::InvalidArgument, "spectro: fixed_frames must be >= 1");
  if (!(mel_fmin >= 0.0 && mel_fmin < mel_fmax && mel_fmax <= 0.5 * sample_rate)) {
    fail(ErrorKind::InvalidArgument, "spectro: mel range must satisfy 0 <= fmin < fmax <= Nyquist");
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::size_t stft_frame_count(std::size_t length, const SpectroConfig& cfg) {
  const auto n = static_cast<std::size_t>(cfg.fft_size);
  if (length < n) return 0;
  return 1 + (length - n) / static_cast<std::size_t>(cfg.hop);
}

Matrix stft_power(std::span<const double> samples, const SpectroConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(cfg.fft_size);
  if (samples.size() < n) {
    fail(ErrorKind::SignalTooShort, "stft: signal of " + std::to_string(samples.size()) +
                                        " samples is shorter than one window");
  }
  const std::size_t frames = stft_frame_count(samples.size(), cfg);
  const std::size_t bins = n / 2 + 1;

  std::vector<double> window(n);
  for (std::size_t i = 0; i < n; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  RealFft& fft = fft_for(n);
  std::vector<double> frame(n);
  std::vector<std::complex<double>> spec(bins);
  Matrix power(bins, frames);
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t start = f * static_cast<std::size_t>(cfg.hop);
    for (std::size_t i = 0; i < n; ++i) frame[i] = samples[start + i] * window[i];
    fft.forward(frame, spec);
    for (std::size_t k = 0; k < bins; ++k) power(k, f) = std::norm(spec[k]);
  }
  return power;
}

std::vector<double> mel_center_frequencies(const SpectroConfig& cfg) {
  const double lo = hz_to_mel(cfg.mel_fmin);
  const double hi = hz_to_mel(cfg.mel_fmax);
  const auto m = static_cast<std::size_t>(cfg.mel_bands);
  std::vector<double> centers(m);
  for (std::size_t i = 0; i < m; ++i) {
    centers[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i + 1) / static_cast<double>(m + 1));
  }
  return centers;
}

namespace {

// Integral of the triangle (lo, peak, hi) over [a, b].
double triangle_integral(double lo, double peak, double hi, double a, double b) {
  double total = 0.0;
  const double r0 = std::max(a, lo);
  const double r1 = std::min(b, peak);
  if (r1 > r0) total += ((r1 - lo) * (r1 - lo) - (r0 - lo) * (r0 - lo)) / (2.0 * (peak - lo));
  const double f0 = std::max(a, peak);
  const double f1 = std::min(b, hi);
  if (f1 > f0) total += ((hi - f0) * (hi - f0) - (hi - f1) * (hi - f1)) / (2.0 * (hi - peak));
  return total;
}

}  // namespace

Matrix mel_filterbank(const SpectroConfig& cfg) {
  cfg.validate();
  const auto bands = static_cast<std::size_t>(cfg.mel_bands);
  const auto bins = static_cast<std::size_t>(cfg.bins());
  const double lo = hz_to_mel(cfg.mel_fmin);
  const double hi = hz_to_mel(cfg.mel_fmax);
  std::vector<double> edges(bands + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bands + 1));
  }
  const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.fft_size;
  Matrix fb(bands, bins);
  for (std::size_t m = 0; m < bands; ++m) {
    double row_sum = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double centre = static_cast<double>(k) * bin_hz;
      const double w =
          triangle_integral(edges[m], edges[m + 1], edges[m + 2], centre - 0.5 * bin_hz, centre + 0.5 * bin_hz) /
          bin_hz;
      fb(m, k) = w;
      row_sum += w;
    }
    if (!(row_sum > 0.0)) {
      fail(ErrorKind::InvalidArgument,
           "mel filterbank: band " + std::to_string(m) + " is empty at this FFT resolution");
    }
  }
  return fb;
}

Matrix mel_power(std::span<const double> samples, const SpectroConfig& cfg) {
  const Matrix power = stft_power(samples, cfg);
  const Matrix fb = mel_filterbank(cfg);
  const std::size_t frames = power.cols();
  Matrix mel(fb.rows(), frames);
  for (std::size_t m = 0; m < fb.rows(); ++m) {
    const auto weights = fb.row(m);
    std::size_t first = 0;
    while (first < weights.size() && weights[first] == 0.0) ++first;
    std::size_t last = weights.size();
    while (last > first && weights[last - 1] == 0.0) --last;
    auto out = mel.row(m);
    for (std::size_t k = first; k < last; ++k) {
      const double w = weights[k];
      const auto in = power.row(k);
      for (std::size_t f = 0; f < frames; ++f) out[f] += w * in[f];
    }
  }
  return mel;
}

Matrix relative_db(const Matrix& mel_power_matrix, const SpectroConfig& cfg) {
  Matrix db(mel_power_matrix.rows(), mel_power_matrix.cols());
  double ref = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < db.size(); ++i) {
    db.data()[i] = 10.0 * std::log10(std::max(mel_power_matrix.data()[i], 1e-10));
    ref = std::max(ref, db.data()[i]);
  }
  for (double& v : db.data()) v = std::max(v - ref, cfg.db_floor);
  return db;
}

MelSpectrogram log_mel_from_mel_power(const Matrix& mel_power_matrix, const SpectroConfig& cfg) {
  const Matrix db = relative_db(mel_power_matrix, cfg);
  MelSpectrogram out;
  out.rows = db.rows();
  out.cols = static_cast<std::size_t>(cfg.fixed_frames);
  std::vector<double> cells(out.rows * out.cols, cfg.db_floor);
  const std::size_t keep = std::min(db.cols(), out.cols);
  for (std::size_t r = 0; r < out.rows; ++r) {
    for (std::size_t c = 0; c < keep; ++c) cells[r * out.cols + c] = db(r, c);
  }
  double mean = 0.0;
  for (double v : cells) mean += v;
  mean /= static_cast<double>(cells.size());
  double var = 0.0;
  for (double v : cells) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(cells.size()));
  out.values.resize(cells.size());
  if (!(sd > 1e-12)) {
    std::fill(out.values.begin(), out.values.end(), 0.0f);
  } else {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      out.values[i] = static_cast<float>((cells[i] - mean) / sd);
    }
  }
  return out;
}

MelSpectrogram log_mel_spectrogram(std::span<const double> samples, const SpectroConfig& cfg) {
  return log_mel_from_mel_power(mel_power(samples, cfg), cfg);
}

std::vector<double> mfcc_from_log_mel(const Matrix& log_mel, std::size_t n_coeffs) {
  const std::size_t bands = log_mel.rows();
  const std::size_t frames = log_mel.cols();
  if (bands == 0 || frames == 0) fail(ErrorKind::InvalidArgument, "mfcc: empty log-mel input");
  n_coeffs = std::min(n_coeffs, bands);
  Matrix dct(n_coeffs, bands);
  for (std::size_t k = 0; k < n_coeffs; ++k) {
    const double s = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(bands));
    for (std::size_t n = 0; n < bands; ++n) {
      dct(k, n) = s * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(n) + 1.0) /
                               (2.0 * static_cast<double>(bands)));
    }
  }
  std::vector<double> out(n_coeffs, 0.0);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t k = 0; k < n_coeffs; ++k) {
      double acc = 0.0;
      for (std::size_t n = 0; n < bands; ++n) acc += dct(k, n) * log_mel(n, f);
      out[k] += acc;
    }
  }
  for (double& v : out) v /= static_cast<double>(frames);
  return out;
}

std::vector<double> mfcc_from_mel_power(const Matrix& mel_power_matrix, std::size_t n_coeffs) {
  Matrix logmel(mel_power_matrix.rows(), mel_power_matrix.cols());
  for (std::size_t i = 0; i < logmel.size(); ++i) {
    logmel.data()[i] = std::log(std::max(mel_power_matrix.data()[i], 1e-10));
  }
  return mfcc_from_log_mel(logmel, n_coeffs);
}

std::vector<double> mfcc(std::span<const double> samples, const SpectroConfig& cfg, std::size_t n_coeffs) {
  return mfcc_from_mel_power(mel_power(samples, cfg), n_coeffs);
}

namespace {
constexpr char kSpectroMagic[8] = {'V', 'T', 'M', 'E', 'L', 'S', 'P', 'C'};
}

std::vector<std::uint8_t> encode_spectrogram(const MelSpectrogram& m) {
  std::vector<std::uint8_t> out(16 + m.values.size() * 4);
  std::memcpy(out.data(), kSpectroMagic, 8);
  const auto rows = static_cast<std::uint32_t>(m.rows);
  const auto cols = static_cast<std::uint32_t>(m.cols);
  std::memcpy(out.data() + 8, &rows, 4);
  std::memcpy(out.data() + 12, &cols, 4);
  std::memcpy(out.data() + 16, m.values.data(), m.values.size() * 4);
  return out;
}

MelSpectrogram decode_spectrogram(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kSpectroMagic, 8) != 0) {
    fail(ErrorKind::MalformedHeader, "not a spectrogram dump");
  }
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::memcpy(&rows, bytes.data() + 8, 4);
  std::memcpy(&cols, bytes.data() + 12, 4);
  const std::size_t count = static_cast<std::size_t>(rows) * cols;
  if (bytes.size() != 16 + count * 4) fail(ErrorKind::TruncatedFile, "spectrogram dump size mismatch");
  MelSpectrogram m;
  m.rows = rows;
  m.cols = cols;
  m.values.resize(count);
  std::memcpy(m.values.data(), bytes.data() + 16, count * 4);
  return m;
}

}  // namespace vt
