#include "voicetriage/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "voicetriage/error.hpp"

namespace vt {

void require_dimension(std::span<const double> v, std::size_t expected, const char* what) {
  if (v.size() != expected) {
    fail(ErrorKind::DimensionMismatch, std::string(what) + ": expected " + std::to_string(expected) +
                                           " values, got " + std::to_string(v.size()));
  }
}

std::array<double, kNumGroups> one_hot(EtiologyGroup g) {
  std::array<double, kNumGroups> code{};
  code[index_of(g)] = 1.0;
  return code;
}

Screening screening_from_probability(double p_path) {
  return p_path >= 0.5 ? Screening::Pathological : Screening::NonPathological;
}

std::vector<double> build_stage1_vector(const FeatureVector21& f, std::array<double, 2> cnn_probs) {
  for (double p : cnn_probs) {
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::InvalidArgument, "stage 1: CNN probability outside [0, 1]");
  }
  if (std::abs(cnn_probs[0] + cnn_probs[1] - 1.0) > 1e-6) {
    fail(ErrorKind::InvalidArgument, "stage 1: CNN probabilities must sum to 1");
  }
  std::vector<double> v(f.values.begin(), f.values.end());
  v.push_back(cnn_probs[0]);
  v.push_back(cnn_probs[1]);
  require_dimension(v, kStage1Dim, "stage 1 vector");
  return v;
}

std::vector<double> build_stage2_vector(const FeatureVector21& f, double stage1_indicator) {
  std::vector<double> v(f.values.begin(), f.values.end());
  v.push_back(stage1_indicator);
  require_dimension(v, kStage2Dim, "stage 2 vector");
  return v;
}

std::vector<double> build_stage2_vector(const FeatureVector21& f, Screening stage1) {
  return build_stage2_vector(f, stage1 == Screening::Pathological ? 1.0 : 0.0);
}

std::vector<double> build_stage3_vector(const FeatureVector21& f, double stage1_indicator,
                                        std::array<double, kNumGroups> group_code) {
  std::vector<double> v(f.values.begin(), f.values.end());
  v.push_back(stage1_indicator);
  v.insert(v.end(), group_code.begin(), group_code.end());
  require_dimension(v, kStage3Dim, "stage 3 vector");
  return v;
}

std::vector<double> build_stage3_vector(const FeatureVector21& f, Screening stage1, EtiologyGroup group) {
  return build_stage3_vector(f, stage1 == Screening::Pathological ? 1.0 : 0.0, one_hot(group));
}

std::vector<GridPoint> PipelineConfig::stage_grid(int stage) const {
  switch (stage) {
    case 1: return grid1.empty() ? default_grid(KernelKind::Gaussian, 3, kStage1Dim) : grid1;
    case 2: return grid2.empty() ? default_grid(KernelKind::Polynomial, 3, kStage2Dim) : grid2;
    case 3: return grid3.empty() ? default_grid(KernelKind::Polynomial, 2, kStage3Dim) : grid3;
    default: fail(ErrorKind::InvalidArgument, "pipeline: stages are numbered 1 to 3");
  }
}

namespace {

constexpr std::size_t kCnnChunk = 32;

double logistic(double f) { return 1.0 / (1.0 + std::exp(-f)); }

std::array<double, kNumGroups> softmax3(std::span<const double> s) {
  const double mx = std::max({s[0], s[1], s[2]});
  std::array<double, kNumGroups> p{};
  double sum = 0.0;
  for (std::size_t i = 0; i < kNumGroups; ++i) {
    p[i] = std::exp(s[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

void round_to_float(SvmBinary& m) {
  for (double& v : m.support_vectors.data()) v = static_cast<double>(static_cast<float>(v));
  for (double& v : m.coef) v = static_cast<double>(static_cast<float>(v));
}

void round_to_float(OvoSvm& m) {
  for (auto& machine : m.machines) round_to_float(machine);
}

void check_spectrogram(const ProcessedRecording& r, const CnnConfig& cfg) {
  if (r.spectrogram.rows != cfg.input_rows || r.spectrogram.cols != cfg.input_cols ||
      r.spectrogram.values.size() != cfg.input_rows * cfg.input_cols) {
    fail(ErrorKind::ShapeMismatch, "pipeline: spectrogram of " + r.recording_id + " is " +
                                       std::to_string(r.spectrogram.rows) + "x" +
                                       std::to_string(r.spectrogram.cols) + ", the CNN expects " +
                                       std::to_string(cfg.input_rows) + "x" + std::to_string(cfg.input_cols));
  }
}

ImageSet image_set(std::span<const ProcessedRecording> rows, const CnnConfig& cfg) {
  ImageSet set;
  set.rows = cfg.input_rows;
  set.cols = cfg.input_cols;
  set.pixels.reserve(rows.size() * set.rows * set.cols);
  for (const auto& r : rows) {
    check_spectrogram(r, cfg);
    set.pixels.insert(set.pixels.end(), r.spectrogram.values.begin(), r.spectrogram.values.end());
    set.labels.push_back(static_cast<int>(index_of(map_screening(r.diagnosis))));
  }
  return set;
}

std::vector<std::array<double, 2>> cnn_probabilities(const CnnModel& model, std::span<const ProcessedRecording> rows) {
  std::vector<std::array<double, 2>> out;
  out.reserve(rows.size());
  std::vector<float> pixels;
  for (std::size_t start = 0; start < rows.size(); start += kCnnChunk) {
    const std::size_t count = std::min(kCnnChunk, rows.size() - start);
    pixels.clear();
    for (std::size_t i = start; i < start + count; ++i) {
      check_spectrogram(rows[i], model.config);
      pixels.insert(pixels.end(), rows[i].spectrogram.values.begin(), rows[i].spectrogram.values.end());
    }
    const auto probs = cnn_predict(model, std::span<const float>(pixels), count);
    out.insert(out.end(), probs.begin(), probs.end());
  }
  return out;
}

Matrix stack(const std::vector<std::vector<double>>& rows, std::size_t dim, const char* what) {
  Matrix m(rows.size(), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require_dimension(rows[i], dim, what);
    std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
  }
  return m;
}

nlohmann::ordered_json grid_json(const std::vector<GridPoint>& grid) {
  nlohmann::ordered_json a = nlohmann::ordered_json::array();
  for (const auto& g : grid) {
    nlohmann::ordered_json e;
    e["c"] = g.C;
    e["kernel"] = g.kernel.describe();
    a.push_back(e);
  }
  return a;
}

nlohmann::ordered_json selection_json(const GridSearchResult& r) {
  nlohmann::ordered_json e;
  e["c"] = r.best.C;
  e["kernel"] = r.best.kernel.describe();
  e["cv_accuracy"] = r.table[r.best_index].mean_accuracy;
  return e;
}

std::vector<int> to_int(const std::vector<std::size_t>& v) { return {v.begin(), v.end()}; }

}  // namespace

ModelBundle train_pipeline(std::span<const ProcessedRecording> train, std::span<const ProcessedRecording> val,
                           const PipelineConfig& cfg, TrainingArtifacts* artifacts) {
  if (train.empty() || val.empty()) fail(ErrorKind::EmptyData, "train: both partitions must be non-empty");
  std::array<bool, kNumDiagnoses> seen{};
  for (const auto& r : train) seen[index_of(r.diagnosis)] = true;
  for (Diagnosis d : kAllDiagnoses) {
    if (!seen[index_of(d)]) {
      fail(ErrorKind::MissingClass, "train: no training recordings of class " + std::string(diagnosis_name(d)));
    }
  }
  const std::size_t n = train.size();
  std::vector<std::string> groups(n);
  for (std::size_t i = 0; i < n; ++i) groups[i] = train[i].speaker_id;
  const bool soft = cfg.augmentation == Augmentation::Soft;
  CvOptions cv;
  cv.folds = cfg.cv_folds;
  cv.seed = cfg.seed;
  cv.tol = cfg.smo_tol;
  cv.threads = cfg.threads;

  ModelBundle bundle;
  bundle.augmentation = cfg.augmentation;
  TrainingArtifacts local;
  TrainingArtifacts& art = artifacts ? *artifacts : local;

  // CNN screener on binary labels.
  CnnConfig ccfg = cfg.cnn;
  ccfg.seed = cfg.seed;
  const ImageSet train_images = image_set(train, ccfg);
  const ImageSet val_images = image_set(val, ccfg);
  auto trained = cnn_train(train_images, val_images, ccfg);
  bundle.cnn = std::move(trained.model);
  art.cnn_log = std::move(trained.log);
  art.cnn_best_epoch = trained.best_epoch;
  const auto probs = cnn_probabilities(bundle.cnn, train);

  // Stage 1: Gaussian SVM on [biomarkers, CNN probabilities].
  std::vector<std::vector<double>> rows1(n);
  std::vector<int> y1(n);
  std::vector<int> pm1(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows1[i] = build_stage1_vector(train[i].features, probs[i]);
    y1[i] = static_cast<int>(index_of(map_screening(train[i].diagnosis)));
    pm1[i] = y1[i] == 1 ? 1 : -1;
  }
  const Matrix raw1 = stack(rows1, kStage1Dim, "stage 1 vector");
  bundle.scaler1 = scaler_fit(raw1);
  const Matrix z1 = bundle.scaler1.apply(raw1);
  const auto grid1 = cfg.stage_grid(1);
  art.cv1 = grid_search_cv(z1, y1, groups, grid1, cv);
  SmoOptions smo;
  smo.tol = cfg.smo_tol;
  smo.C = art.cv1.best.C;
  bundle.stage1 = smo_train(z1, pm1, art.cv1.best.kernel, smo);
  round_to_float(bundle.stage1);
  std::vector<double> s1(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = logistic(svm_decision(bundle.stage1, z1.row(i)));
    s1[i] = soft ? p : (screening_from_probability(p) == Screening::Pathological ? 1.0 : 0.0);
  }

  // Stage 2: cubic one-vs-one SVM over the three etiology groups.
  std::vector<std::vector<double>> rows2(n);
  std::vector<std::size_t> y2(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows2[i] = build_stage2_vector(train[i].features, s1[i]);
    y2[i] = index_of(map_group(train[i].diagnosis));
  }
  const Matrix raw2 = stack(rows2, kStage2Dim, "stage 2 vector");
  bundle.scaler2 = scaler_fit(raw2);
  const Matrix z2 = bundle.scaler2.apply(raw2);
  const auto grid2 = cfg.stage_grid(2);
  const std::vector<int> y2i = to_int(y2);
  art.cv2 = grid_search_cv(z2, y2i, groups, grid2, cv);
  smo.C = art.cv2.best.C;
  bundle.stage2 = ovo_fit(z2, y2i, art.cv2.best.kernel, smo);
  round_to_float(bundle.stage2);

  // Stage 3: quadratic one-vs-one SVM over the nine subtypes.
  std::vector<std::vector<double>> rows3(n);
  std::vector<std::size_t> y3(n);
  for (std::size_t i = 0; i < n; ++i) {
    const OvoPrediction g = ovo_predict(bundle.stage2, z2.row(i));
    const auto code = soft ? softmax3(g.scores) : one_hot(kAllGroups[g.class_index]);
    rows3[i] = build_stage3_vector(train[i].features, s1[i], code);
    y3[i] = index_of(train[i].diagnosis);
  }
  const Matrix raw3 = stack(rows3, kStage3Dim, "stage 3 vector");
  bundle.scaler3 = scaler_fit(raw3);
  const Matrix z3 = bundle.scaler3.apply(raw3);
  const auto grid3 = cfg.stage_grid(3);
  const std::vector<int> y3i = to_int(y3);
  art.cv3 = grid_search_cv(z3, y3i, groups, grid3, cv);
  smo.C = art.cv3.best.C;
  bundle.stage3 = ovo_fit(z3, y3i, art.cv3.best.kernel, smo);
  round_to_float(bundle.stage3);

  // Flat baseline on the raw biomarkers.
  Matrix rawf(n, kFeatureCount);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(train[i].features.values.begin(), train[i].features.values.end(), rawf.row(i).begin());
  }
  bundle.scaler_flat = scaler_fit(rawf);
  TreeEnsembleOptions topt = cfg.trees;
  topt.seed = cfg.seed;
  bundle.flat = bagged_trees_train(bundle.scaler_flat.apply(rawf), y3i, topt);

  auto& p = bundle.provenance;
  p["seed"] = cfg.seed;
  p["train_recordings"] = train.size();
  p["validation_recordings"] = val.size();
  p["train_digest"] = feature_digest(train);
  p["validation_digest"] = feature_digest(val);
  p["augmentation"] = soft ? "soft" : "hard";
  p["cv_folds"] = cfg.cv_folds;
  p["smo_tol"] = cfg.smo_tol;
  nlohmann::ordered_json cnn;
  cnn["filters"] = ccfg.filters;
  cnn["input"] = {ccfg.input_rows, ccfg.input_cols};
  cnn["max_epochs"] = ccfg.max_epochs;
  cnn["patience"] = ccfg.patience;
  cnn["batch_size"] = ccfg.batch_size;
  cnn["learning_rate"] = ccfg.learning_rate;
  cnn["best_epoch"] = art.cnn_best_epoch;
  cnn["epochs_run"] = art.cnn_log.size();
  p["cnn"] = cnn;
  p["grids"] = {{"stage1", grid_json(grid1)}, {"stage2", grid_json(grid2)}, {"stage3", grid_json(grid3)}};
  p["selected"] = {{"stage1", selection_json(art.cv1)},
                   {"stage2", selection_json(art.cv2)},
                   {"stage3", selection_json(art.cv3)}};
  p["flat"] = {{"trees", topt.trees}, {"min_leaf", topt.min_leaf}, {"bootstrap", topt.bootstrap}};
  nlohmann::ordered_json labels;
  for (Diagnosis d : kAllDiagnoses) {
    labels.push_back({{"diagnosis", diagnosis_name(d)}, {"group", group_name(map_group(d))},
                      {"screening", screening_name(map_screening(d))}});
  }
  p["labels"] = labels;
  return bundle;
}

namespace {

void check_bundle(const ModelBundle& b) {
  if (b.scaler1.dim() != kStage1Dim || b.scaler2.dim() != kStage2Dim || b.scaler3.dim() != kStage3Dim ||
      b.scaler_flat.dim() != kFeatureCount) {
    fail(ErrorKind::NotFitted, "predict: bundle scalers are missing or mis-sized");
  }
  if (b.stage1.support_vectors.rows() == 0 || b.stage2.num_classes() != kNumGroups ||
      b.stage3.num_classes() != kNumDiagnoses || b.flat.num_classes() != kNumDiagnoses) {
    fail(ErrorKind::NotFitted, "predict: bundle classifiers are incomplete");
  }
}

PipelinePrediction predict_one(const ModelBundle& bundle, const ProcessedRecording& rec, std::array<double, 2> cnn,
                               const PredictOptions& opt) {
  const bool soft = bundle.augmentation == Augmentation::Soft;
  PipelinePrediction out;
  out.cnn_probs = cnn;

  out.v1 = build_stage1_vector(rec.features, cnn);
  require_dimension(out.v1, kStage1Dim, "stage 1 vector");
  out.stage1_decision = svm_decision(bundle.stage1, bundle.scaler1.apply(out.v1));
  out.p_pathological = logistic(out.stage1_decision);
  out.binary = screening_from_probability(out.p_pathological);

  double s1 = soft ? out.p_pathological : (out.binary == Screening::Pathological ? 1.0 : 0.0);
  if (opt.oracle_stage1) s1 = *opt.oracle_stage1 == Screening::Pathological ? 1.0 : 0.0;
  out.v2 = build_stage2_vector(rec.features, s1);
  require_dimension(out.v2, kStage2Dim, "stage 2 vector");
  const OvoPrediction g = ovo_predict(bundle.stage2, bundle.scaler2.apply(out.v2));
  out.stage2_scores = g.scores;
  out.group = kAllGroups[g.class_index];

  std::array<double, kNumGroups> code = soft ? softmax3(g.scores) : one_hot(out.group);
  if (opt.oracle_stage2) code = one_hot(*opt.oracle_stage2);
  out.v3 = build_stage3_vector(rec.features, s1, code);
  require_dimension(out.v3, kStage3Dim, "stage 3 vector");
  const OvoPrediction d = ovo_predict(bundle.stage3, bundle.scaler3.apply(out.v3));
  out.stage3_scores = d.scores;
  out.subtype = kAllDiagnoses[d.class_index];

  const EnsemblePrediction f = bagged_trees_predict(bundle.flat, bundle.scaler_flat.apply(rec.features.values));
  out.flat_scores = f.fractions;
  out.flat_subtype = kAllDiagnoses[f.class_index];

  if (opt.hard_gate && out.binary == Screening::NonPathological) {
    out.gated = true;
    out.group = EtiologyGroup::Healthy;
    out.subtype = Diagnosis::Healthy;
  }
  return out;
}

}  // namespace

PipelinePrediction predict_pipeline(const ModelBundle& bundle, const ProcessedRecording& rec,
                                    const PredictOptions& opt) {
  return predict_batch(bundle, std::span<const ProcessedRecording>(&rec, 1), opt).front();
}

std::vector<PipelinePrediction> predict_batch(const ModelBundle& bundle, std::span<const ProcessedRecording> recs,
                                              const PredictOptions& opt) {
  check_bundle(bundle);
  const auto probs = cnn_probabilities(bundle.cnn, recs);
  std::vector<PipelinePrediction> out;
  out.reserve(recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) out.push_back(predict_one(bundle, recs[i], probs[i], opt));
  return out;
}

}  // namespace vt
