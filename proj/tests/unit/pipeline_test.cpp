#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "expect_error.hpp"
#include "voicetriage/dataset.hpp"
#include "voicetriage/pipeline.hpp"
#include "voicetriage/rng.hpp"
#include "voicetriage/synth.hpp"

using namespace vt;

namespace {

FeatureVector21 random_features(Rng& rng) {
  FeatureVector21 f;
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = rng.normal();
  return f;
}

PipelineConfig small_config() {
  PipelineConfig cfg;
  cfg.seed = 3;
  cfg.cnn.filters = {4, 4, 4};
  cfg.cnn.max_epochs = 2;
  cfg.cv_folds = 3;
  cfg.grid1 = {{1.0, KernelSpec::gaussian(1.0 / 23.0)}, {10.0, KernelSpec::gaussian(1.0 / 23.0)}};
  cfg.grid2 = {{1.0, KernelSpec::polynomial(3, 22.0)}};
  cfg.grid3 = {{1.0, KernelSpec::polynomial(2, 25.0)}};
  cfg.trees.trees = 10;
  return cfg;
}

struct Cohort {
  std::vector<ProcessedRecording> train;
  std::vector<ProcessedRecording> val;
  std::vector<ProcessedRecording> test;
};

const Cohort& cohort() {
  static const Cohort c = [] {
    CohortConfig cc;
    cc.speakers = 54;
    cc.duration = 0.5;
    cc.seed = 11;
    const auto items = generate_cohort(cc);
    std::vector<RecordingDescriptor> desc;
    for (const auto& i : items) desc.push_back(i.descriptor);
    const auto split = split_speakers(desc, {0.67, 0.17, 0.16}, 11);
    Cohort out;
    for (const auto& i : items) {
      const Partition p = split.at(i.descriptor.speaker_id);
      auto& dst = p == Partition::Train ? out.train : p == Partition::Validation ? out.val : out.test;
      dst.push_back(process_recording(synthesize_recording(i)));
    }
    return out;
  }();
  return c;
}

const ModelBundle& trained() {
  static const ModelBundle b = train_pipeline(cohort().train, cohort().val, small_config());
  return b;
}

void check_same(const PipelinePrediction& a, const PipelinePrediction& b) {
  CHECK(a.p_pathological == b.p_pathological);
  CHECK(a.binary == b.binary);
  CHECK(a.stage2_scores == b.stage2_scores);
  CHECK(a.group == b.group);
  CHECK(a.stage3_scores == b.stage3_scores);
  CHECK(a.subtype == b.subtype);
  CHECK(a.flat_scores == b.flat_scores);
  CHECK(a.flat_subtype == b.flat_subtype);
}

}  // namespace

TEST_CASE("stage 1 vector layout") {
  Rng rng(1);
  const FeatureVector21 f = random_features(rng);
  const auto v = build_stage1_vector(f, {0.5, 0.5});
  REQUIRE(v.size() == 23);
  CHECK(v[21] == 0.5);
  CHECK(v[22] == 0.5);
  for (std::size_t i = 0; i < 21; ++i) CHECK(v[i] == f[i]);

  FeatureVector21 zero;
  const auto z = build_stage1_vector(zero, {1.0, 0.0});
  CHECK(std::count_if(z.begin(), z.end(), [](double x) { return x != 0.0; }) == 1);
  CHECK(z[21] == 1.0);
  CHECK_ERROR_KIND(build_stage1_vector(f, {0.7, 0.7}), ErrorKind::InvalidArgument);
  CHECK_ERROR_KIND(build_stage1_vector(f, {-0.2, 1.2}), ErrorKind::InvalidArgument);
}

TEST_CASE("stage 2 vector and the 0.5 boundary") {
  CHECK(screening_from_probability(0.9) == Screening::Pathological);
  CHECK(screening_from_probability(0.5) == Screening::Pathological);
  CHECK(screening_from_probability(0.4999) == Screening::NonPathological);
  Rng rng(2);
  const FeatureVector21 f = random_features(rng);
  const auto v = build_stage2_vector(f, screening_from_probability(0.9));
  REQUIRE(v.size() == 22);
  CHECK(v[21] == 1.0);
  CHECK(build_stage2_vector(f, Screening::NonPathological)[21] == 0.0);
  CHECK(build_stage2_vector(f, 0.37)[21] == 0.37);
}

TEST_CASE("stage 3 vector one-hot suffix") {
  Rng rng(3);
  const FeatureVector21 f = random_features(rng);
  const auto h = build_stage3_vector(f, Screening::NonPathological, EtiologyGroup::Healthy);
  REQUIRE(h.size() == 25);
  CHECK(h[21] == 0.0);
  CHECK(h[22] == 1.0);
  CHECK(h[23] == 0.0);
  CHECK(h[24] == 0.0);
  for (EtiologyGroup g : kAllGroups) {
    const auto v = build_stage3_vector(f, Screening::Pathological, g);
    CHECK(v.size() == 25);
    CHECK(v[22] + v[23] + v[24] == 1.0);
    CHECK(v[22 + index_of(g)] == 1.0);
  }
}

TEST_CASE("dimension guard fails fast") {
  const std::vector<double> v(24, 0.0);
  CHECK_ERROR_KIND(require_dimension(v, 23, "v1"), ErrorKind::DimensionMismatch);
  CHECK_NOTHROW(require_dimension(v, 24, "v"));
}

TEST_CASE("training without a class is rejected") {
  std::vector<ProcessedRecording> train;
  for (const auto& r : cohort().train) {
    if (r.diagnosis != Diagnosis::ReinkeEdema) train.push_back(r);
  }
  CHECK_ERROR_KIND(train_pipeline(train, cohort().val, small_config()), ErrorKind::MissingClass);
  CHECK_ERROR_KIND(train_pipeline(cohort().train, {}, small_config()), ErrorKind::EmptyData);
}

TEST_CASE("trained bundle invariants and stage consistency") {
  const ModelBundle& b = trained();
  CHECK(b.version == kBundleVersion);
  CHECK(b.stage2.classes.size() == 3);
  CHECK(b.stage3.classes.size() == 9);
  CHECK(b.stage3.machines.size() == 36);
  CHECK(b.flat.classes.size() == 9);
  CHECK(b.scaler1.dim() == 23);
  CHECK(b.scaler2.dim() == 22);
  CHECK(b.scaler3.dim() == 25);
  CHECK(b.scaler_flat.dim() == 21);
  CHECK(b.stage1.support_vectors.cols() == 23);
  CHECK(b.provenance.contains("seed"));

  for (const auto& rec : cohort().test) {
    const PipelinePrediction p = predict_pipeline(b, rec);
    CHECK(p.v1.size() == 23);
    CHECK(p.v2.size() == 22);
    CHECK(p.v3.size() == 25);
    CHECK(p.stage2_scores.size() == 3);
    CHECK(p.stage3_scores.size() == 9);
    CHECK(p.flat_scores.size() == 9);
    CHECK(std::abs(p.cnn_probs[0] + p.cnn_probs[1] - 1.0) <= 1e-6);
    CHECK(p.binary == screening_from_probability(p.p_pathological));
    const double indicator = p.binary == Screening::Pathological ? 1.0 : 0.0;
    CHECK(p.v2[21] == indicator);
    CHECK(p.v3[21] == indicator);
    const auto code = one_hot(p.group);
    for (std::size_t g = 0; g < 3; ++g) CHECK(p.v3[22 + g] == code[g]);
    CHECK_FALSE(p.gated);
  }
}

TEST_CASE("hard gate forces Healthy after a non-pathological screen") {
  const ModelBundle& b = trained();
  PredictOptions gate;
  gate.hard_gate = true;
  for (const auto& rec : cohort().test) {
    const PipelinePrediction free = predict_pipeline(b, rec);
    const PipelinePrediction p = predict_pipeline(b, rec, gate);
    CHECK(p.stage3_scores == free.stage3_scores);
    if (p.binary == Screening::NonPathological) {
      CHECK(p.group == EtiologyGroup::Healthy);
      CHECK(p.subtype == Diagnosis::Healthy);
    } else {
      CHECK(p.subtype == free.subtype);
    }
  }
}

TEST_CASE("oracle upstream keeps Healthy apart from disorders") {
  const ModelBundle& b = trained();
  std::size_t confusions = 0;
  for (const auto& rec : cohort().test) {
    PredictOptions opt;
    opt.oracle_stage1 = rec.diagnosis == Diagnosis::Healthy ? Screening::NonPathological : Screening::Pathological;
    opt.oracle_stage2 = map_group(rec.diagnosis);
    const PipelinePrediction p = predict_pipeline(b, rec, opt);
    CHECK(p.v3[21] == (rec.diagnosis == Diagnosis::Healthy ? 0.0 : 1.0));
    if ((p.subtype == Diagnosis::Healthy) != (rec.diagnosis == Diagnosis::Healthy)) ++confusions;
  }
  CHECK(confusions == 0);
}

TEST_CASE("bundle round trip predicts identically") {
  const ModelBundle& b = trained();
  const auto bytes = encode_bundle(b);
  const ModelBundle back = decode_bundle(bytes);
  CHECK(encode_bundle(back) == bytes);
  CHECK(back.provenance == b.provenance);

  const auto path = std::filesystem::temp_directory_path() / "voicetriage_pipeline_test.vtb";
  save_bundle(path, b);
  const ModelBundle loaded = load_bundle(path);
  std::filesystem::remove(path);

  Rng rng(5);
  std::size_t probes = 0;
  for (std::size_t i = 0; probes < 100; ++i, ++probes) {
    ProcessedRecording rec = cohort().test[i % cohort().test.size()];
    for (std::size_t k = 1; k < rec.features.size(); ++k) rec.features[k] *= 1.0 + 0.05 * rng.normal();
    check_same(predict_pipeline(b, rec), predict_pipeline(loaded, rec));
  }
}

TEST_CASE("damaged bundles are rejected with the right error") {
  const auto bytes = encode_bundle(trained());
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  CHECK_ERROR_KIND(decode_bundle(flipped), ErrorKind::ChecksumMismatch);

  auto version = bytes;
  version[8] = 0;
  version[9] = 0;
  version[10] = 0;
  version[11] = 0;
  CHECK_ERROR_KIND(decode_bundle(version), ErrorKind::VersionMismatch);

  CHECK_ERROR_KIND(decode_bundle(std::span(bytes).first(bytes.size() - 100)), ErrorKind::TruncatedFile);
  CHECK_ERROR_KIND(decode_bundle(std::span(bytes).first(12)), ErrorKind::TruncatedFile);

  auto magic = bytes;
  magic[0] = 'X';
  CHECK_ERROR_KIND(decode_bundle(magic), ErrorKind::MalformedHeader);
  CHECK_ERROR_KIND(load_bundle("/nonexistent/model.vtb"), ErrorKind::IoError);
}

TEST_CASE("training is deterministic per seed") {
  const ModelBundle again = train_pipeline(cohort().train, cohort().val, small_config());
  const auto a = encode_bundle(trained());
  const auto b = encode_bundle(again);
  CHECK(sha256_hex(a) == sha256_hex(b));

  PipelineConfig threaded = small_config();
  threaded.threads = 3;
  const auto c = encode_bundle(train_pipeline(cohort().train, cohort().val, threaded));
  CHECK(sha256_hex(c) == sha256_hex(a));
}

TEST_CASE("digests") {
  CHECK(sha256_hex({}) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const std::string abc = "abc";
  CHECK(sha256_hex({reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()}) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  auto rows = cohort().test;
  const std::string d = feature_digest(rows);
  CHECK(feature_digest(rows) == d);
  rows[0].features[3] += 1e-9;
  CHECK(feature_digest(rows) != d);
}
