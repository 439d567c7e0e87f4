#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "voicetriage/audio.hpp"
#include "voicetriage/matrix.hpp"

namespace vt {

struct SpectroConfig {
  int sample_rate = kAnalysisRate;
  int fft_size = 1024;
  int hop = 128;
  int mel_bands = 128;
  int fixed_frames = 256;
  double mel_fmin = 0.0;
  double mel_fmax = 22050.0;
  double db_floor = -80.0;

  // Throws InvalidArgument when hop > fft_size, mel_bands < 2,
  // fixed_frames < 1 or the mel range is empty or above Nyquist.
  void validate() const;
  int bins() const { return fft_size / 2 + 1; }
};

// Normalized log-mel image (mel_bands x fixed_frames), stored as float.
struct MelSpectrogram {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;  // row-major, band-major

  float operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

std::size_t stft_frame_count(std::size_t length, const SpectroConfig& cfg);

// Hann-windowed power spectra, bins x frames. Frames start at sample 0 with
// no centering. Errors: SignalTooShort.
Matrix stft_power(std::span<const double> samples, const SpectroConfig& cfg);

// Center frequencies (Hz) of the mel bands, equally spaced in mel between
// fmin and fmax (exclusive of the two edge points).
std::vector<double> mel_center_frequencies(const SpectroConfig& cfg);

// mel_bands x bins. Each triangular filter is integrated over each FFT bin's
// frequency interval, so narrow low-frequency filters still receive weight
// from the bin they overlap. Errors: InvalidArgument if a row is empty.
Matrix mel_filterbank(const SpectroConfig& cfg);

// Mel power (bands x frames) of a signal.
Matrix mel_power(std::span<const double> samples, const SpectroConfig& cfg);

// Relative dB image before time fitting and normalization: dB of mel power,
// referenced to its maximum and floored at db_floor.
Matrix relative_db(const Matrix& mel_power_matrix, const SpectroConfig& cfg);

// Full CNN input: relative dB, truncated or right-padded (with db_floor) to
// fixed_frames, then z-normalized over all cells. A zero-variance image
// normalizes to all zeros.
MelSpectrogram log_mel_spectrogram(std::span<const double> samples, const SpectroConfig& cfg);
MelSpectrogram log_mel_from_mel_power(const Matrix& mel_power_matrix, const SpectroConfig& cfg);

// Orthonormal DCT-II of each frame's log-mel energies, first n_coeffs kept,
// averaged over frames.
std::vector<double> mfcc_from_log_mel(const Matrix& log_mel, std::size_t n_coeffs = 13);

// Frame-averaged MFCCs of a signal; log-mel energies are ln(max(p, 1e-10)).
std::vector<double> mfcc(std::span<const double> samples, const SpectroConfig& cfg,
                         std::size_t n_coeffs = 13);
std::vector<double> mfcc_from_mel_power(const Matrix& mel_power_matrix, std::size_t n_coeffs = 13);

// Binary dump: 8-byte magic "VTMELSPC", u32 rows, u32 cols, then
// little-endian float32 values row-major.
std::vector<std::uint8_t> encode_spectrogram(const MelSpectrogram& m);
MelSpectrogram decode_spectrogram(std::span<const std::uint8_t> bytes);

}  // namespace vt
