#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace vt {

enum class Vowel { A, I, U };
enum class Pitch { Neutral, High, Low, Glide };
// Encoded as Female=0, Male=1 in feature vectors.
enum class Gender { Female, Male };

enum class Diagnosis {
  Healthy,
  HyperfunctionalDysphonia,
  Laryngitis,
  FunctionalDysphonia,
  Dysodia,
  PsychogenicDysphonia,
  ContactPachydermia,
  ReinkeEdema,
  VocalCordPolyp,
};
inline constexpr std::size_t kNumDiagnoses = 9;

enum class EtiologyGroup { Healthy, FunctionalPsychogenic, StructuralInflammatory };
inline constexpr std::size_t kNumGroups = 3;

// Stage-1 screening classes, index 0 = NonPathological, 1 = Pathological.
enum class Screening { NonPathological, Pathological };

inline constexpr std::array<Diagnosis, kNumDiagnoses> kAllDiagnoses = {
    Diagnosis::Healthy,         Diagnosis::HyperfunctionalDysphonia,
    Diagnosis::Laryngitis,      Diagnosis::FunctionalDysphonia,
    Diagnosis::Dysodia,         Diagnosis::PsychogenicDysphonia,
    Diagnosis::ContactPachydermia, Diagnosis::ReinkeEdema,
    Diagnosis::VocalCordPolyp,
};
inline constexpr std::array<EtiologyGroup, kNumGroups> kAllGroups = {
    EtiologyGroup::Healthy, EtiologyGroup::FunctionalPsychogenic,
    EtiologyGroup::StructuralInflammatory};

EtiologyGroup map_group(Diagnosis d);
Screening map_screening(Diagnosis d);

// Manifest tokens: diagnosis names as printed in the cohort table
// ("Reinke Edema"), vowels a/i/u, pitches neutral/high/low/glide, gender F/M.
std::string_view diagnosis_name(Diagnosis d);
std::string_view group_name(EtiologyGroup g);
std::string_view screening_name(Screening s);
std::string_view vowel_token(Vowel v);
std::string_view pitch_token(Pitch p);
std::string_view gender_token(Gender g);

std::optional<Diagnosis> parse_diagnosis(std::string_view token);
std::optional<Vowel> parse_vowel(std::string_view token);
std::optional<Pitch> parse_pitch(std::string_view token);
std::optional<Gender> parse_gender(std::string_view token);

constexpr std::size_t index_of(Diagnosis d) { return static_cast<std::size_t>(d); }
constexpr std::size_t index_of(EtiologyGroup g) { return static_cast<std::size_t>(g); }
constexpr std::size_t index_of(Screening s) { return static_cast<std::size_t>(s); }

}  // namespace vt
