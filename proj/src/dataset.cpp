#include "voicetriage/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "voicetriage/csv.hpp"
#include "voicetriage/error.hpp"
#include "voicetriage/rng.hpp"

namespace vt {

std::string_view partition_name(Partition p) {
  switch (p) {
    case Partition::Train: return "train";
    case Partition::Validation: return "val";
    case Partition::Test: return "test";
  }
  return "";
}

std::optional<Partition> parse_partition(std::string_view token) {
  for (Partition p : {Partition::Train, Partition::Validation, Partition::Test}) {
    if (partition_name(p) == token) return p;
  }
  return std::nullopt;
}

namespace {

[[noreturn]] void row_error(ErrorKind kind, std::size_t row, const std::string& what) {
  fail(kind, "row " + std::to_string(row) + ": " + what);
}

template <typename T, typename Parser>
T parse_enum(const std::string& token, std::size_t row, const char* column, Parser parser) {
  const auto value = parser(token);
  if (!value) {
    row_error(ErrorKind::UnknownEnum, row,
              std::string("unknown ") + column + " \"" + token + "\"");
  }
  return *value;
}

}  // namespace

std::vector<RecordingDescriptor> parse_manifest(std::istream& in) {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    const auto text = csv::chomp(line);
    if (text.empty() || text.front() == '#') continue;
    header = csv::split_line(text);
    break;
  }
  if (header.empty()) fail(ErrorKind::MissingColumn, "manifest has no header row");

  std::array<std::size_t, kManifestColumns.size()> col{};
  for (std::size_t c = 0; c < kManifestColumns.size(); ++c) {
    const auto it = std::find(header.begin(), header.end(), kManifestColumns[c]);
    if (it == header.end()) {
      fail(ErrorKind::MissingColumn, std::string("manifest missing column ") + kManifestColumns[c]);
    }
    col[c] = static_cast<std::size_t>(it - header.begin());
  }
  const auto split_it = std::find(header.begin(), header.end(), "split");
  const bool has_split = split_it != header.end();
  const auto split_col = static_cast<std::size_t>(split_it - header.begin());

  std::vector<RecordingDescriptor> rows;
  std::set<std::string> seen;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    const auto text = csv::chomp(line);
    if (text.empty() || text.front() == '#') continue;
    ++row;
    const auto f = csv::split_line(text);
    if (f.size() < header.size()) {
      row_error(ErrorKind::MissingColumn, row,
                "expected " + std::to_string(header.size()) + " fields, got " +
                    std::to_string(f.size()));
    }
    RecordingDescriptor d;
    d.recording_id = f[col[0]];
    d.path = f[col[1]];
    d.speaker_id = f[col[2]];
    if (d.recording_id.empty()) row_error(ErrorKind::BadValue, row, "empty recording_id");
    if (d.speaker_id.empty()) row_error(ErrorKind::BadValue, row, "empty speaker_id");
    d.gender = parse_enum<Gender>(f[col[3]], row, "gender", parse_gender);
    if (!f[col[4]].empty()) {
      double age = 0.0;
      const auto& s = f[col[4]];
      const auto res = std::from_chars(s.data(), s.data() + s.size(), age);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(age)) {
        row_error(ErrorKind::BadValue, row, "bad age \"" + s + "\"");
      }
      d.age = age;
    }
    d.vowel = parse_enum<Vowel>(f[col[5]], row, "vowel", parse_vowel);
    d.pitch = parse_enum<Pitch>(f[col[6]], row, "pitch", parse_pitch);
    d.diagnosis = parse_enum<Diagnosis>(f[col[7]], row, "diagnosis", parse_diagnosis);
    if (has_split) d.split = parse_enum<Partition>(f[split_col], row, "split", parse_partition);
    if (!seen.insert(d.recording_id).second) {
      row_error(ErrorKind::DuplicateId, row, "duplicate recording_id \"" + d.recording_id + "\"");
    }
    rows.push_back(std::move(d));
  }
  return rows;
}

std::vector<RecordingDescriptor> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open manifest " + path.string());
  return parse_manifest(in);
}

void write_manifest(std::ostream& out, const std::vector<RecordingDescriptor>& rows,
                    bool with_split) {
  for (std::size_t c = 0; c < kManifestColumns.size(); ++c) {
    out << (c ? "," : "") << kManifestColumns[c];
  }
  if (with_split) out << ",split";
  out << '\n';
  for (const auto& d : rows) {
    std::vector<std::string> f = {
        d.recording_id,
        d.path,
        d.speaker_id,
        std::string(gender_token(d.gender)),
        d.age ? csv::format_double(*d.age) : std::string(),
        std::string(vowel_token(d.vowel)),
        std::string(pitch_token(d.pitch)),
        std::string(diagnosis_name(d.diagnosis)),
    };
    if (with_split) {
      if (!d.split) fail(ErrorKind::InvalidArgument, "row " + d.recording_id + " has no split");
      f.emplace_back(partition_name(*d.split));
    }
    out << csv::join(f) << '\n';
  }
}

Recording load_recording(const RecordingDescriptor& desc, const std::filesystem::path& base_dir) {
  const std::filesystem::path p(desc.path);
  Audio audio = read_wav(p.is_absolute() ? p : base_dir / p);
  Recording rec;
  rec.recording_id = desc.recording_id;
  rec.speaker_id = desc.speaker_id;
  rec.samples = resample(audio.samples, audio.sample_rate, kAnalysisRate);
  rec.sample_rate = kAnalysisRate;
  rec.vowel = desc.vowel;
  rec.pitch = desc.pitch;
  rec.gender = desc.gender;
  rec.age = desc.age;
  rec.diagnosis = desc.diagnosis;
  for (double& x : rec.samples) x = std::clamp(x, -1.0, 1.0);
  return rec;
}

Partition SplitAssignment::at(const std::string& speaker_id) const {
  const auto it = by_speaker_.find(speaker_id);
  if (it == by_speaker_.end()) fail(ErrorKind::InvalidArgument, "unknown speaker " + speaker_id);
  return it->second;
}

std::size_t SplitAssignment::count(Partition p) const {
  return static_cast<std::size_t>(std::count_if(
      by_speaker_.begin(), by_speaker_.end(), [p](const auto& kv) { return kv.second == p; }));
}

SplitAssignment split_speakers(const std::vector<RecordingDescriptor>& descriptors,
                               const SplitRatios& ratios, std::uint64_t seed) {
  if (ratios.train <= 0 || ratios.validation <= 0 || ratios.test <= 0 ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    fail(ErrorKind::InvalidArgument, "split ratios must be positive and sum to 1");
  }
  std::map<std::string, Diagnosis> speaker_dx;
  for (const auto& d : descriptors) {
    const auto [it, inserted] = speaker_dx.emplace(d.speaker_id, d.diagnosis);
    if (!inserted && it->second != d.diagnosis) {
      fail(ErrorKind::InconsistentSpeaker,
           "speaker " + d.speaker_id + " has recordings with different diagnoses");
    }
  }
  std::array<std::vector<std::string>, kNumDiagnoses> strata;
  for (const auto& [speaker, dx] : speaker_dx) strata[index_of(dx)].push_back(speaker);

  Rng rng(seed);
  std::map<std::string, Partition> assignment;
  std::vector<SplitWarning> warnings;
  for (Diagnosis dx : kAllDiagnoses) {
    auto& speakers = strata[index_of(dx)];
    const std::size_t n = speakers.size();
    if (n == 0) continue;
    if (n < 3) {
      for (const auto& s : speakers) assignment[s] = Partition::Train;
      warnings.push_back({dx, n,
                          "stratum " + std::string(diagnosis_name(dx)) + " has " +
                              std::to_string(n) + " speaker(s); assigned to train only"});
      continue;
    }
    rng.shuffle(std::span<std::string>(speakers));
    const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.train));
    const auto n_val =
        static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.validation));
    for (std::size_t i = 0; i < n; ++i) {
      Partition p = Partition::Test;
      if (i < n_train) {
        p = Partition::Train;
      } else if (i < n_train + n_val) {
        p = Partition::Validation;
      }
      assignment[speakers[i]] = p;
    }
  }
  return SplitAssignment(std::move(assignment), std::move(warnings));
}

}  // namespace vt
