#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "voicetriage/audio.hpp"
#include "voicetriage/labels.hpp"

namespace vt {

// One decoded sustained-vowel recording.
struct Recording {
  std::string recording_id;
  std::string speaker_id;
  std::vector<double> samples;
  int sample_rate = 0;
  Vowel vowel = Vowel::A;
  Pitch pitch = Pitch::Neutral;
  Gender gender = Gender::Female;
  std::optional<double> age;
  Diagnosis diagnosis = Diagnosis::Healthy;
};

enum class Partition { Train, Validation, Test };
std::string_view partition_name(Partition p);
std::optional<Partition> parse_partition(std::string_view token);

// One manifest row. `split` is only present in manifests written by `split`.
struct RecordingDescriptor {
  std::string recording_id;
  std::string path;
  std::string speaker_id;
  Gender gender = Gender::Female;
  std::optional<double> age;
  Vowel vowel = Vowel::A;
  Pitch pitch = Pitch::Neutral;
  Diagnosis diagnosis = Diagnosis::Healthy;
  std::optional<Partition> split;
};

inline constexpr std::array<const char*, 8> kManifestColumns = {
    "recording_id", "path", "speaker_id", "gender", "age", "vowel", "pitch", "diagnosis"};

// Parses the cohort CSV. Lines starting with '#' are provenance comments and
// are skipped. An optional trailing `split` column is accepted.
// Errors (with 1-based data row numbers): MissingColumn, UnknownEnum,
// DuplicateId.
std::vector<RecordingDescriptor> parse_manifest(std::istream& in);
std::vector<RecordingDescriptor> read_manifest(const std::filesystem::path& path);

void write_manifest(std::ostream& out, const std::vector<RecordingDescriptor>& rows,
                    bool with_split);

// Decodes the audio behind a descriptor (path relative to `base_dir`) and
// resamples it to the analysis rate.
Recording load_recording(const RecordingDescriptor& desc, const std::filesystem::path& base_dir);

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct SplitWarning {
  Diagnosis stratum;
  std::size_t speakers;
  std::string message;
};

// Immutable speaker -> partition map.
class SplitAssignment {
 public:
  SplitAssignment() = default;
  SplitAssignment(std::map<std::string, Partition> by_speaker, std::vector<SplitWarning> warnings)
      : by_speaker_(std::move(by_speaker)), warnings_(std::move(warnings)) {}

  Partition at(const std::string& speaker_id) const;
  bool contains(const std::string& speaker_id) const { return by_speaker_.count(speaker_id) > 0; }
  const std::map<std::string, Partition>& speakers() const { return by_speaker_; }
  const std::vector<SplitWarning>& warnings() const { return warnings_; }
  std::size_t count(Partition p) const;

 private:
  std::map<std::string, Partition> by_speaker_;
  std::vector<SplitWarning> warnings_;
};

// Speaker-grouped split stratified by diagnosis. Within each stratum speakers
// are ordered by id, shuffled with `seed`, and allocated round(n*train),
// round(n*val), remainder. Strata with fewer than 3 speakers go entirely to
// Train and produce a warning.
SplitAssignment split_speakers(const std::vector<RecordingDescriptor>& descriptors,
                               const SplitRatios& ratios, std::uint64_t seed);

}  // namespace vt
