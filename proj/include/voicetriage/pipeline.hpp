#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "voicetriage/biomarkers.hpp"
#include "voicetriage/classifiers.hpp"
#include "voicetriage/cnn.hpp"
#include "voicetriage/labels.hpp"
#include "voicetriage/spectral.hpp"

namespace vt {

inline constexpr std::size_t kStage1Dim = 23;
inline constexpr std::size_t kStage2Dim = 22;
inline constexpr std::size_t kStage3Dim = 25;
static_assert(kStage1Dim == kFeatureCount + 2);
static_assert(kStage2Dim == kFeatureCount + 1);
static_assert(kStage3Dim == kFeatureCount + 1 + kNumGroups);

// Throws DimensionMismatch unless v has exactly `expected` entries.
void require_dimension(std::span<const double> v, std::size_t expected, const char* what);

// [21 biomarkers, p_nonpath, p_path]. Errors: InvalidArgument when the
// probabilities are outside [0, 1] or do not sum to 1 within 1e-6.
std::vector<double> build_stage1_vector(const FeatureVector21& f, std::array<double, 2> cnn_probs);

// The Stage-1 binary output; p = 0.5 counts as Pathological.
Screening screening_from_probability(double p_path);

// [21 biomarkers, indicator]; indicator is 1 for Pathological. In soft mode
// the indicator is replaced by p_path.
std::vector<double> build_stage2_vector(const FeatureVector21& f, double stage1_indicator);
std::vector<double> build_stage2_vector(const FeatureVector21& f, Screening stage1);

// [21 biomarkers, indicator, one-hot group (Healthy, FunctionalPsychogenic,
// StructuralInflammatory)]. Soft mode passes group probabilities instead.
std::vector<double> build_stage3_vector(const FeatureVector21& f, double stage1_indicator,
                                        std::array<double, kNumGroups> group_code);
std::vector<double> build_stage3_vector(const FeatureVector21& f, Screening stage1, EtiologyGroup group);

std::array<double, kNumGroups> one_hot(EtiologyGroup g);

enum class Augmentation { Hard, Soft };

struct PipelineConfig {
  std::uint64_t seed = 0;
  CnnConfig cnn;
  SpectroConfig spectro;
  std::size_t cv_folds = 5;
  double smo_tol = 1e-3;
  // Empty grids fall back to default_grid for the stage's kernel.
  std::vector<GridPoint> grid1;
  std::vector<GridPoint> grid2;
  std::vector<GridPoint> grid3;
  TreeEnsembleOptions trees;
  Augmentation augmentation = Augmentation::Hard;
  std::size_t threads = 1;

  std::vector<GridPoint> stage_grid(int stage) const;
};

inline constexpr std::uint32_t kBundleVersion = 1;

struct ModelBundle {
  std::uint32_t version = kBundleVersion;
  CnnModel cnn;
  Scaler scaler1;
  Scaler scaler2;
  Scaler scaler3;
  Scaler scaler_flat;
  SvmBinary stage1;  // +1 = Pathological
  OvoSvm stage2;     // classes are EtiologyGroup indices
  OvoSvm stage3;     // classes are Diagnosis indices
  TreeEnsemble flat;
  Augmentation augmentation = Augmentation::Hard;
  // Seed, grids, selected hyperparameters, data digest, label tables.
  nlohmann::ordered_json provenance;
};

// Everything besides the bundle that training produces.
struct TrainingArtifacts {
  std::vector<CnnEpochLog> cnn_log;
  int cnn_best_epoch = 0;
  GridSearchResult cv1;
  GridSearchResult cv2;
  GridSearchResult cv3;
};

// Sequential training: CNN on spectrograms (binary labels), Stage-1
// Gaussian SVM on 23-vectors, Stage-2 cubic one-vs-one SVM on 22-vectors
// built from Stage-1 predictions, Stage-3 quadratic one-vs-one SVM on
// 25-vectors from the predicted Stage-1/Stage-2 outputs, and flat bagged
// trees on the 21 biomarkers. Scalers and grid searches (speaker-grouped
// K-fold CV) see only the training partition. Support vectors are rounded to
// float32 as each stage is fitted, so a saved bundle predicts exactly as the
// in-memory one. Errors: EmptyData, MissingClass, DimensionMismatch,
// Diverged.
ModelBundle train_pipeline(std::span<const ProcessedRecording> train, std::span<const ProcessedRecording> val,
                           const PipelineConfig& cfg, TrainingArtifacts* artifacts = nullptr);

struct PredictOptions {
  // NonPathological at Stage 1 short-circuits group and subtype to Healthy.
  bool hard_gate = false;
  // Ground-truth upstream outputs replace the predicted ones in v2 / v3.
  std::optional<Screening> oracle_stage1;
  std::optional<EtiologyGroup> oracle_stage2;
};

struct PipelinePrediction {
  std::array<double, 2> cnn_probs{};
  std::vector<double> v1;
  std::vector<double> v2;
  std::vector<double> v3;
  double stage1_decision = 0.0;
  double p_pathological = 0.0;  // logistic of the Stage-1 decision value
  Screening binary = Screening::NonPathological;
  std::vector<double> stage2_scores;  // 3 summed one-vs-one decisions
  EtiologyGroup group = EtiologyGroup::Healthy;
  std::vector<double> stage3_scores;  // 9
  Diagnosis subtype = Diagnosis::Healthy;
  std::vector<double> flat_scores;  // 9 vote fractions
  Diagnosis flat_subtype = Diagnosis::Healthy;
  bool gated = false;  // labels overridden by the hard gate; scores are the ungated ones
};

// Stages run in order, each consuming the previous stage's output. Errors:
// NotFitted, DimensionMismatch.
PipelinePrediction predict_pipeline(const ModelBundle& bundle, const ProcessedRecording& rec,
                                    const PredictOptions& opt = {});
std::vector<PipelinePrediction> predict_batch(const ModelBundle& bundle, std::span<const ProcessedRecording> recs,
                                              const PredictOptions& opt = {});

// Single-file container: "VTBUNDLE", u32 version, u32 section count, a table
// of (16-byte name, u64 offset, u64 size), the section payloads, then a
// SHA-256 of everything before it. Weights and support vectors are
// little-endian float32; biases, scalers and tree thresholds are float64; the
// "meta" section is JSON.
std::vector<std::uint8_t> encode_bundle(const ModelBundle& bundle);
// Errors: MalformedHeader, VersionMismatch, TruncatedFile, ChecksumMismatch.
ModelBundle decode_bundle(std::span<const std::uint8_t> bytes);
void save_bundle(const std::filesystem::path& path, const ModelBundle& bundle);
ModelBundle load_bundle(const std::filesystem::path& path);

// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
// Digest of recording ids, labels and feature values, in order.
std::string feature_digest(std::span<const ProcessedRecording> rows);

}  // namespace vt
