#include "voicetriage/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <string>

#include "voicetriage/error.hpp"

namespace vt {
namespace {

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | b[at + 1] << 8);
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

}  // namespace

Audio decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE")) {
    fail(ErrorKind::MalformedHeader, "not a RIFF/WAVE container");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint16_t bits = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = read_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (tag_is(bytes, pos, "fmt ")) {
      if (size < 16 || body + size > bytes.size()) {
        fail(ErrorKind::MalformedHeader, "truncated fmt chunk");
      }
      const std::uint16_t format = read_u16(bytes, body);
      channels = read_u16(bytes, body + 2);
      rate = read_u32(bytes, body + 4);
      bits = read_u16(bytes, body + 14);
      if (format != 1 || bits != 16) {
        fail(ErrorKind::UnsupportedCodec,
             "only PCM 16-bit is supported (format " + std::to_string(format) + ", " +
                 std::to_string(bits) + " bits)");
      }
      if (channels != 1 && channels != 2) {
        fail(ErrorKind::UnsupportedCodec, "unsupported channel count " + std::to_string(channels));
      }
      if (rate == 0) fail(ErrorKind::MalformedHeader, "zero sample rate");
      have_fmt = true;
    } else if (tag_is(bytes, pos, "data")) {
      if (!have_fmt) fail(ErrorKind::MalformedHeader, "data chunk before fmt chunk");
      // Tolerate a data size that overruns the file, as streaming writers
      // leave it unpatched; read what is present.
      const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
      const std::size_t frame_bytes = 2u * channels;
      const std::size_t frames = avail / frame_bytes;
      if (frames == 0) fail(ErrorKind::EmptyData, "no audio frames in data chunk");
      Audio audio;
      audio.sample_rate = static_cast<int>(rate);
      audio.samples.resize(frames);
      for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          const auto raw = static_cast<std::int16_t>(read_u16(bytes, body + f * frame_bytes + 2 * c));
          acc += raw / 32768.0;
        }
        audio.samples[f] = acc / channels;
      }
      return audio;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) fail(ErrorKind::MalformedHeader, "missing fmt chunk");
  fail(ErrorKind::EmptyData, "missing data chunk");
}

std::vector<std::uint8_t> encode_wav(std::span<const double> interleaved, int sample_rate,
                                     int channels) {
  if (sample_rate <= 0 || channels < 1 || channels > 2) {
    fail(ErrorKind::InvalidArgument, "encode_wav: bad rate or channel count");
  }
  const auto data_bytes = static_cast<std::uint32_t>(interleaved.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, static_cast<std::uint16_t>(channels));
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate * channels * 2));
  put_u16(out, static_cast<std::uint16_t>(channels * 2));
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  for (double x : interleaved) {
    const double scaled = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::IoError, "short write to " + path.string());
}

Audio read_wav(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_wav(bytes);
}

void write_wav(const std::filesystem::path& path, const Audio& audio) {
  write_file_bytes(path, encode_wav(audio.samples, audio.sample_rate));
}

namespace {

constexpr int kResampleTaps = 64;
constexpr double kKaiserBeta = 8.6;
constexpr double kRolloff = 0.95;

double kaiser(double u) {
  if (std::abs(u) >= 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - u * u)) /
         std::cyl_bessel_i(0.0, kKaiserBeta);
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

std::vector<double> resample(std::span<const double> samples, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) {
    fail(ErrorKind::InvalidArgument, "resample: sample rates must be positive");
  }
  if (from_rate == to_rate) return {samples.begin(), samples.end()};

  const long g = std::gcd(from_rate, to_rate);
  const long up = to_rate / g;
  const long down = from_rate / g;
  const double ratio = static_cast<double>(to_rate) / from_rate;
  const double scale = std::min(1.0, ratio);
  const double cutoff = 0.5 * scale * kRolloff;  // cycles per input sample
  const double half_width = 0.5 * kResampleTaps / scale;  // input samples
  const long reach = static_cast<long>(std::ceil(half_width));

  const auto in_len = static_cast<long>(samples.size());
  const auto out_len = static_cast<long>(
      std::llround(static_cast<double>(samples.size()) * to_rate / from_rate));

  auto weight = [&](double d) { return 2.0 * cutoff * sinc(2.0 * cutoff * d) * kaiser(d / half_width); };

  // Rational rates give `up` distinct fractional phases; their kernels are
  // tabulated once. Pathological rate pairs fall back to direct evaluation.
  const bool tabulate = up <= 8192;
  const long span_len = 2 * reach + 1;
  std::vector<double> table;
  if (tabulate) {
    table.resize(static_cast<std::size_t>(up * span_len));
    for (long phase = 0; phase < up; ++phase) {
      const double frac = static_cast<double>(phase) / up;
      for (long j = 0; j < span_len; ++j) {
        const long k = j - reach;  // tap offset from floor(t)
        table[static_cast<std::size_t>(phase * span_len + j)] = weight(frac - k);
      }
    }
  }

  std::vector<double> out(static_cast<std::size_t>(out_len));
  for (long n = 0; n < out_len; ++n) {
    const long num = n * down;
    const long base = num / up;
    const long phase = num % up;
    const double frac = static_cast<double>(phase) / up;
    double acc = 0.0;
    for (long j = 0; j < span_len; ++j) {
      const long k = base + j - reach;
      if (k < 0 || k >= in_len) continue;
      const double w = tabulate ? table[static_cast<std::size_t>(phase * span_len + j)]
                                : weight(frac - (j - reach));
      acc += w * samples[static_cast<std::size_t>(k)];
    }
    out[static_cast<std::size_t>(n)] = acc;
  }
  return out;
}

}  // namespace vt
