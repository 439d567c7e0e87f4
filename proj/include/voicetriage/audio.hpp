#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace vt {

// Canonical analysis rate; every recording is resampled to it before feature
// extraction.
inline constexpr int kAnalysisRate = 44100;

struct Audio {
  std::vector<double> samples;  // mono, in [-1, 1]
  int sample_rate = 0;
};

// RIFF/WAVE PCM16 little-endian, mono or stereo. Samples are scaled by
// 1/32768 and stereo is averaged to mono.
// Errors: MalformedHeader, UnsupportedCodec, EmptyData.
Audio decode_wav(std::span<const std::uint8_t> bytes);

// Writes interleaved PCM16. Values are scaled by 32768, rounded and clipped.
std::vector<std::uint8_t> encode_wav(std::span<const double> interleaved, int sample_rate,
                                     int channels = 1);

Audio read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Audio& audio);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// Band-limited resampling with a 64-tap Kaiser-windowed sinc. Output length is
// round(len * to_rate / from_rate); equal rates return the input unchanged.
std::vector<double> resample(std::span<const double> samples, int from_rate, int to_rate);

}  // namespace vt
