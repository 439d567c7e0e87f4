#include "voicetriage/labels.hpp"

namespace vt {

EtiologyGroup map_group(Diagnosis d) {
  switch (d) {
    case Diagnosis::Healthy:
      return EtiologyGroup::Healthy;
    case Diagnosis::HyperfunctionalDysphonia:
    case Diagnosis::FunctionalDysphonia:
    case Diagnosis::Dysodia:
    case Diagnosis::PsychogenicDysphonia:
      return EtiologyGroup::FunctionalPsychogenic;
    case Diagnosis::Laryngitis:
    case Diagnosis::ContactPachydermia:
    case Diagnosis::ReinkeEdema:
    case Diagnosis::VocalCordPolyp:
      return EtiologyGroup::StructuralInflammatory;
  }
  return EtiologyGroup::Healthy;
}

Screening map_screening(Diagnosis d) {
  return d == Diagnosis::Healthy ? Screening::NonPathological : Screening::Pathological;
}

std::string_view diagnosis_name(Diagnosis d) {
  switch (d) {
    case Diagnosis::Healthy: return "Healthy";
    case Diagnosis::HyperfunctionalDysphonia: return "Hyperfunctional Dysphonia";
    case Diagnosis::Laryngitis: return "Laryngitis";
    case Diagnosis::FunctionalDysphonia: return "Functional Dysphonia";
    case Diagnosis::Dysodia: return "Dysodia";
    case Diagnosis::PsychogenicDysphonia: return "Psychogenic Dysphonia";
    case Diagnosis::ContactPachydermia: return "Contact Pachydermia";
    case Diagnosis::ReinkeEdema: return "Reinke Edema";
    case Diagnosis::VocalCordPolyp: return "Vocal Cord Polyp";
  }
  return "";
}

std::string_view group_name(EtiologyGroup g) {
  switch (g) {
    case EtiologyGroup::Healthy: return "Healthy";
    case EtiologyGroup::FunctionalPsychogenic: return "Functional/Psychogenic";
    case EtiologyGroup::StructuralInflammatory: return "Structural/Inflammatory";
  }
  return "";
}

std::string_view screening_name(Screening s) {
  return s == Screening::NonPathological ? "Non-Pathological" : "Pathological";
}

std::string_view vowel_token(Vowel v) {
  switch (v) {
    case Vowel::A: return "a";
    case Vowel::I: return "i";
    case Vowel::U: return "u";
  }
  return "";
}

std::string_view pitch_token(Pitch p) {
  switch (p) {
    case Pitch::Neutral: return "neutral";
    case Pitch::High: return "high";
    case Pitch::Low: return "low";
    case Pitch::Glide: return "glide";
  }
  return "";
}

std::string_view gender_token(Gender g) { return g == Gender::Female ? "F" : "M"; }

std::optional<Diagnosis> parse_diagnosis(std::string_view token) {
  for (Diagnosis d : kAllDiagnoses) {
    if (diagnosis_name(d) == token) return d;
  }
  return std::nullopt;
}

std::optional<Vowel> parse_vowel(std::string_view token) {
  for (Vowel v : {Vowel::A, Vowel::I, Vowel::U}) {
    if (vowel_token(v) == token) return v;
  }
  return std::nullopt;
}

std::optional<Pitch> parse_pitch(std::string_view token) {
  for (Pitch p : {Pitch::Neutral, Pitch::High, Pitch::Low, Pitch::Glide}) {
    if (pitch_token(p) == token) return p;
  }
  return std::nullopt;
}

std::optional<Gender> parse_gender(std::string_view token) {
  if (token == "F") return Gender::Female;
  if (token == "M") return Gender::Male;
  return std::nullopt;
}

}  // namespace vt
