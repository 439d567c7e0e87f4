// Command-line front end: synth-cohort, split, extract, train, evaluate,
// predict, fuse, estimate-fusion.

#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>
#include <unistd.h>

#include "voicetriage/audio.hpp"
#include "voicetriage/biomarkers.hpp"
#include "voicetriage/config.hpp"
#include "voicetriage/csv.hpp"
#include "voicetriage/dataset.hpp"
#include "voicetriage/error.hpp"
#include "voicetriage/evaluation.hpp"
#include "voicetriage/fusion.hpp"
#include "voicetriage/pipeline.hpp"
#include "voicetriage/spectral.hpp"
#include "voicetriage/synth.hpp"

namespace fs = std::filesystem;

namespace {

using namespace vt;

// Writes into a sibling staging directory and renames it into place on
// commit. An abandoned staging directory is removed.
class StagedDir {
 public:
  StagedDir(fs::path target, bool force) : target_(std::move(target)) {
    if (fs::exists(target_)) {
      if (!fs::is_directory(target_)) fail(ErrorKind::InvalidArgument, target_.string() + " exists and is not a directory");
      if (!fs::is_empty(target_) && !force) {
        fail(ErrorKind::InvalidArgument, target_.string() + " is not empty (pass --force to replace it)");
      }
    }
    staging_ = target_;
    staging_ += ".partial-" + std::to_string(::getpid());
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;
  ~StagedDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }

  fs::path operator/(const std::string& name) const { return staging_ / name; }
  const fs::path& path() const { return staging_; }

  void commit() {
    fs::remove_all(target_);
    if (target_.has_parent_path()) fs::create_directories(target_.parent_path());
    fs::rename(staging_, target_);
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path staging_;
  bool committed_ = false;
};

// Same idea for a single file.
void write_atomically(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".partial-" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(ErrorKind::IoError, "cannot write " + tmp.string());
    out << text;
    if (!out) fail(ErrorKind::IoError, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
}

std::string comment_line(std::uint64_t seed, const std::string& digest) {
  nlohmann::ordered_json p;
  p["seed"] = seed;
  p["config_digest"] = digest;
  p["format_version"] = kBundleVersion;
  return provenance_comment(p);
}

template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& body) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// Flags shared by the commands that read a run configuration.
struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
  bool deterministic = false;
  bool hard_gate = false;
  bool soft = false;
  bool force = false;
};

RunConfig resolve_config(const CommonOptions& o) {
  RunConfig cfg;
  cfg.pipeline.seed = default_seed(0);
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) fail(ErrorKind::IoError, "cannot read config " + o.config);
    const auto kv = parse_key_values(in);
    apply_key_values(cfg, kv);
    bool has_seed = false;
    for (const auto& [k, v] : kv) has_seed |= k == "seed";
    if (!has_seed) cfg.pipeline.seed = default_seed(0);
  }
  if (o.seed) cfg.pipeline.seed = *o.seed;
  if (o.threads > 0) cfg.pipeline.threads = o.threads;
  if (o.hard_gate) cfg.hard_gate = true;
  if (o.soft) cfg.pipeline.augmentation = Augmentation::Soft;
  if (o.deterministic) cfg.deterministic = true;
  if (cfg.deterministic) cfg.pipeline.threads = 1;
  return cfg;
}

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "key=value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Seed (default: $VOICETRIAGE_SEED, else 0)");
  cmd->add_option("--threads", o.threads, "Worker threads");
  cmd->add_flag("--deterministic", o.deterministic, "Single-threaded run");
}

// Loads features.csv and the spectrogram dumps written by `extract`,
// keeping the recordings of one partition when a split manifest is given.
std::vector<ProcessedRecording> load_extracted(const fs::path& dir, const std::string& manifest,
                                               std::optional<Partition> partition, bool spectrograms) {
  std::ifstream in(dir / "features.csv");
  if (!in) fail(ErrorKind::IoError, "cannot read " + (dir / "features.csv").string());
  std::vector<ProcessedRecording> rows = read_feature_table(in);
  if (partition) {
    if (manifest.empty()) fail(ErrorKind::InvalidArgument, "a split manifest is required to select a partition");
    std::map<std::string, Partition> split;
    for (const auto& d : read_manifest(manifest)) {
      if (!d.split) fail(ErrorKind::MissingColumn, "manifest " + manifest + " has no split column");
      split[d.recording_id] = *d.split;
    }
    std::vector<ProcessedRecording> kept;
    for (auto& r : rows) {
      const auto it = split.find(r.recording_id);
      if (it == split.end()) fail(ErrorKind::BadValue, "recording " + r.recording_id + " is missing from the manifest");
      if (it->second == *partition) kept.push_back(std::move(r));
    }
    rows = std::move(kept);
  }
  if (spectrograms) {
    for (auto& r : rows) {
      r.spectrogram = decode_spectrogram(read_file_bytes(dir / "spectrograms" / (r.recording_id + ".vtspec")));
    }
  }
  return rows;
}

Partition parse_partition_option(const std::string& s) {
  const auto p = parse_partition(s);
  if (!p) fail(ErrorKind::InvalidArgument, "unknown partition '" + s + "'");
  return *p;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t speakers = 200;
  double duration = 0.8;
  bool unbalanced = false;
  CommonOptions common;
};

int run_synth(const SynthArgs& a) {
  CohortConfig cc;
  cc.speakers = a.speakers;
  cc.duration = a.duration;
  cc.balanced = !a.unbalanced;
  cc.seed = a.common.seed.value_or(default_seed(1));
  const auto items = generate_cohort(cc);
  StagedDir dir(a.out, a.common.force);
  fs::create_directories(dir / "wav");
  parallel_for(items.size(), a.common.deterministic ? 1 : std::max<std::size_t>(1, a.common.threads),
               [&](std::size_t i) {
                 const Recording rec = synthesize_recording(items[i]);
                 write_wav(dir / items[i].descriptor.path, Audio{rec.samples, rec.sample_rate});
               });
  std::vector<RecordingDescriptor> rows;
  for (const auto& it : items) rows.push_back(it.descriptor);
  std::ostringstream digest_src;
  digest_src << "speakers=" << cc.speakers << "\nduration=" << csv::format_double(cc.duration)
             << "\nbalanced=" << cc.balanced << "\n";
  const std::string text = digest_src.str();
  const std::string digest = sha256_hex({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
  std::ostringstream m;
  m << comment_line(cc.seed, digest) << '\n';
  write_manifest(m, rows, false);
  write_text(dir / "manifest.csv", m.str());
  dir.commit();
  std::cerr << "synth-cohort: " << rows.size() << " recordings from " << cc.speakers << " speakers\n";
  return 0;
}

struct SplitArgs {
  std::string manifest;
  std::string out;
  CommonOptions common;
};

int run_split(const SplitArgs& a) {
  const RunConfig cfg = resolve_config(a.common);
  auto rows = read_manifest(a.manifest);
  const SplitAssignment split = split_speakers(rows, cfg.split, cfg.pipeline.seed);
  for (const auto& w : split.warnings()) std::cerr << "warning: " << w.message << '\n';
  for (auto& r : rows) r.split = split.at(r.speaker_id);
  std::ostringstream m;
  m << comment_line(cfg.pipeline.seed, config_digest(cfg)) << '\n';
  write_manifest(m, rows, true);
  write_atomically(a.out, m.str());
  std::cerr << "split: train " << split.count(Partition::Train) << ", validation "
            << split.count(Partition::Validation) << ", test " << split.count(Partition::Test) << " speakers\n";
  return 0;
}

struct ExtractArgs {
  std::string manifest;
  std::string audio_dir;
  std::string out;
  CommonOptions common;
};

int run_extract(const ExtractArgs& a) {
  const RunConfig cfg = resolve_config(a.common);
  const auto rows = read_manifest(a.manifest);
  if (rows.empty()) fail(ErrorKind::EmptyData, "manifest " + a.manifest + " has no recordings");
  const fs::path base = a.audio_dir.empty() ? fs::path(a.manifest).parent_path() : fs::path(a.audio_dir);
  std::vector<ProcessedRecording> out(rows.size());
  StagedDir dir(a.out, a.common.force);
  fs::create_directories(dir / "spectrograms");
  parallel_for(rows.size(), cfg.pipeline.threads, [&](std::size_t i) {
    out[i] = process_recording(load_recording(rows[i], base), cfg.pipeline.spectro);
    write_file_bytes(dir / "spectrograms" / (rows[i].recording_id + ".vtspec"),
                     encode_spectrogram(out[i].spectrogram));
  });
  std::ostringstream f;
  f << comment_line(cfg.pipeline.seed, config_digest(cfg)) << '\n';
  write_feature_table(f, out);
  write_text(dir / "features.csv", f.str());
  std::size_t sentinels = 0;
  for (const auto& r : out) sentinels += r.features.sentinel_count();
  dir.commit();
  std::cerr << "extract: " << out.size() << " recordings, " << sentinels << " missing feature values\n";
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string manifest;
  std::string out;
  CommonOptions common;
};

int run_train(const TrainArgs& a) {
  const RunConfig cfg = resolve_config(a.common);
  const auto train = load_extracted(a.data, a.manifest, Partition::Train, true);
  const auto val = load_extracted(a.data, a.manifest, Partition::Validation, true);
  TrainingArtifacts art;
  ModelBundle bundle = train_pipeline(train, val, cfg.pipeline, &art);
  const std::string digest = config_digest(cfg);
  bundle.provenance["config_digest"] = digest;

  StagedDir dir(a.out, a.common.force);
  save_bundle(dir / "model.vtb", bundle);
  const std::string header = comment_line(cfg.pipeline.seed, digest) + '\n';
  {
    std::ostringstream s;
    s << header;
    write_training_log(s, art.cnn_log);
    write_text(dir / "cnn_log.csv", s.str());
  }
  const std::pair<const char*, const GridSearchResult*> tables[] = {
      {"cv_stage1.csv", &art.cv1}, {"cv_stage2.csv", &art.cv2}, {"cv_stage3.csv", &art.cv3}};
  for (const auto& [name, result] : tables) {
    std::ostringstream s;
    s << header;
    write_cv_table(s, *result);
    write_text(dir / name, s.str());
  }
  nlohmann::ordered_json prov = bundle.provenance;
  prov["format_version"] = bundle.version;
  write_text(dir / "provenance.json", prov.dump(2) + "\n");
  write_text(dir / "config.txt", "# format_version=" + std::to_string(kBundleVersion) + "\n" + canonical_config(cfg));
  dir.commit();
  std::cerr << "train: " << train.size() << " training and " << val.size() << " validation recordings; CNN best epoch "
            << art.cnn_best_epoch << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string bundle;
  std::string data;
  std::string manifest;
  std::string partition = "test";
  std::string out;
  bool no_oracle = false;
  CommonOptions common;
};

int run_evaluate(const EvaluateArgs& a) {
  const ModelBundle bundle = load_bundle(a.bundle);
  const auto test = load_extracted(a.data, a.manifest, parse_partition_option(a.partition), true);
  EvalOptions opt;
  opt.hard_gate = a.common.hard_gate;
  opt.oracle_upstream = !a.no_oracle;
  const EvalReport report = evaluate_pipeline(bundle, test, opt);
  StagedDir dir(a.out, a.common.force);
  write_eval_outputs(dir.path(), report);
  dir.commit();
  for (const auto& [name, r] : report.stages) {
    std::cerr << name << ": accuracy " << std::fixed << std::setprecision(4) << r.accuracy;
    if (r.macro_roc_auc) std::cerr << ", macro ROC-AUC " << *r.macro_roc_auc;
    std::cerr << '\n';
  }
  return 0;
}

std::string score_header(const char* prefix, std::string_view name) {
  return csv::escape(std::string(prefix) + "[" + std::string(name) + "]");
}

struct PredictArgs {
  std::string bundle;
  std::string data;
  std::string manifest;
  std::string partition;
  std::string out;
  CommonOptions common;
};

int run_predict(const PredictArgs& a) {
  const ModelBundle bundle = load_bundle(a.bundle);
  std::optional<Partition> part;
  if (!a.partition.empty()) part = parse_partition_option(a.partition);
  const auto recs = load_extracted(a.data, a.manifest, part, true);
  if (recs.empty()) fail(ErrorKind::EmptyData, "predict: no recordings selected");
  PredictOptions opt;
  opt.hard_gate = a.common.hard_gate;
  const auto preds = predict_batch(bundle, recs, opt);

  std::ostringstream out;
  out << comment_line(bundle.provenance.value("seed", std::uint64_t{0}),
                      bundle.provenance.value("config_digest", std::string("none")))
      << '\n';
  out << "recording_id,speaker_id,true_label,binary,p_pathological,group,subtype,flat_subtype,gated";
  for (Diagnosis d : kAllDiagnoses) out << ',' << score_header("stage3", diagnosis_name(d));
  for (Diagnosis d : kAllDiagnoses) out << ',' << score_header("flat", diagnosis_name(d));
  out << '\n';
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& p = preds[i];
    out << csv::escape(recs[i].recording_id) << ',' << csv::escape(recs[i].speaker_id) << ','
        << csv::escape(diagnosis_name(recs[i].diagnosis)) << ',' << csv::escape(screening_name(p.binary)) << ','
        << csv::format_double(p.p_pathological) << ',' << csv::escape(group_name(p.group)) << ','
        << csv::escape(diagnosis_name(p.subtype)) << ',' << csv::escape(diagnosis_name(p.flat_subtype)) << ','
        << (p.gated ? 1 : 0);
    for (double s : p.stage3_scores) out << ',' << csv::format_double(s);
    for (double s : p.flat_scores) out << ',' << csv::format_double(s);
    out << '\n';
  }
  write_atomically(a.out, out.str());
  return 0;
}

struct FuseArgs {
  std::string predictions;
  std::string out;
  std::string source = "stage3";
  std::size_t k = 0;
};

int run_fuse(const FuseArgs& a) {
  if (a.source != "stage3" && a.source != "flat") fail(ErrorKind::InvalidArgument, "--source is stage3 or flat");
  std::ifstream in(a.predictions);
  if (!in) fail(ErrorKind::IoError, "cannot read " + a.predictions);
  std::string line;
  std::string provenance;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    const auto body = csv::chomp(line);
    if (body.empty()) continue;
    if (body.front() == '#') {
      if (provenance.empty()) provenance = std::string(body);
      continue;
    }
    header = csv::split_line(body);
    break;
  }
  auto column = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    fail(ErrorKind::MissingColumn, "predictions: missing column " + name);
  };
  const std::size_t c_speaker = column("speaker_id");
  const std::size_t c_truth = column("true_label");
  const std::size_t c_label = column(a.source == "stage3" ? "subtype" : "flat_subtype");
  std::vector<std::size_t> c_scores;
  for (Diagnosis d : kAllDiagnoses) {
    c_scores.push_back(column(a.source + "[" + std::string(diagnosis_name(d)) + "]"));
  }

  struct Subject {
    std::vector<std::size_t> labels;
    std::vector<std::vector<double>> scores;
    std::size_t truth = 0;
  };
  std::map<std::string, Subject> subjects;
  std::size_t row = 0;
  auto parse_label = [&](const std::string& s) {
    const auto d = parse_diagnosis(s);
    if (!d) fail(ErrorKind::UnknownEnum, "predictions row " + std::to_string(row) + ": unknown label '" + s + "'");
    return index_of(*d);
  };
  while (std::getline(in, line)) {
    const auto body = csv::chomp(line);
    if (body.empty() || body.front() == '#') continue;
    ++row;
    const auto f = csv::split_line(body);
    if (f.size() != header.size()) {
      fail(ErrorKind::BadValue, "predictions row " + std::to_string(row) + ": expected " +
                                    std::to_string(header.size()) + " fields");
    }
    Subject& s = subjects[f[c_speaker]];
    if (a.k > 0 && s.labels.size() >= a.k) continue;
    const std::size_t truth = parse_label(f[c_truth]);
    if (!s.labels.empty() && truth != s.truth) {
      fail(ErrorKind::InconsistentSpeaker, "speaker " + f[c_speaker] + " has more than one true label");
    }
    s.truth = truth;
    s.labels.push_back(parse_label(f[c_label]));
    std::vector<double> sc;
    for (std::size_t c : c_scores) {
      try {
        sc.push_back(std::stod(f[c]));
      } catch (const std::exception&) {
        fail(ErrorKind::BadValue, "predictions row " + std::to_string(row) + ": bad score '" + f[c] + "'");
      }
    }
    s.scores.push_back(std::move(sc));
  }
  if (subjects.empty()) fail(ErrorKind::EmptyData, "predictions: no rows");

  std::ostringstream out;
  if (!provenance.empty()) out << provenance << '\n';
  out << "speaker_id,n_recordings,fused_label,true_label\n";
  std::size_t correct = 0;
  for (const auto& [speaker, s] : subjects) {
    const FusedDecision d = majority_vote_fuse(s.labels, s.scores, kNumDiagnoses);
    correct += d.label == s.truth ? 1 : 0;
    out << csv::escape(speaker) << ',' << s.labels.size() << ',' << csv::escape(diagnosis_name(kAllDiagnoses[d.label]))
        << ',' << csv::escape(diagnosis_name(kAllDiagnoses[s.truth])) << '\n';
  }
  write_atomically(a.out, out.str());
  std::cerr << "fuse: " << subjects.size() << " speakers, fused accuracy " << std::fixed << std::setprecision(4)
            << static_cast<double>(correct) / static_cast<double>(subjects.size()) << '\n';
  return 0;
}

int run_estimate(double p, int k) {
  std::cout << std::fixed << std::setprecision(4) << subject_accuracy_estimate(p, k) << '\n';
  return 0;
}

int report_error(std::string_view kind, const std::string& message, int code) {
  std::string flat = message;
  for (char& c : flat) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::cerr << "error: " << kind << ": " << flat << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical voice-pathology triage"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "voicetriage bundle format " + std::to_string(kBundleVersion));

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth-cohort", "Generate a synthetic 9-class cohort (WAVs + manifest)");
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--speakers", synth.speakers, "Number of speakers")->check(CLI::Range(9, 100000));
  c_synth->add_option("--duration", synth.duration, "Seconds per recording")->check(CLI::Range(0.2, 10.0));
  c_synth->add_flag("--unbalanced", synth.unbalanced, "Use the cohort-table class proportions");
  c_synth->add_option("--seed", synth.common.seed, "Seed (default: $VOICETRIAGE_SEED, else 1)");
  c_synth->add_option("--threads", synth.common.threads, "Worker threads");
  c_synth->add_flag("--deterministic", synth.common.deterministic, "Single-threaded run");
  c_synth->add_flag("--force", synth.common.force, "Replace a non-empty output directory");

  SplitArgs split;
  auto* c_split = app.add_subcommand("split", "Speaker-grouped stratified train/validation/test split");
  c_split->add_option("--manifest", split.manifest, "Cohort manifest")->required()->check(CLI::ExistingFile);
  c_split->add_option("--out", split.out, "Manifest with a split column")->required();
  add_common(c_split, split.common);

  ExtractArgs extract;
  auto* c_extract = app.add_subcommand("extract", "Biomarkers and log-mel spectrograms per recording");
  c_extract->add_option("--manifest", extract.manifest, "Cohort manifest")->required()->check(CLI::ExistingFile);
  c_extract->add_option("--audio-dir", extract.audio_dir, "Base directory for audio paths (default: manifest dir)");
  c_extract->add_option("--out", extract.out, "Output directory")->required();
  c_extract->add_flag("--force", extract.common.force, "Replace a non-empty output directory");
  add_common(c_extract, extract.common);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train the CNN, the three stages and the flat baseline");
  c_train->add_option("--data", train.data, "Directory written by extract")->required()->check(CLI::ExistingDirectory);
  c_train->add_option("--manifest", train.manifest, "Manifest with a split column")->required()->check(CLI::ExistingFile);
  c_train->add_option("--out", train.out, "Output directory")->required();
  c_train->add_flag("--soft", train.common.soft, "Feed upstream probabilities instead of hard labels");
  c_train->add_flag("--force", train.common.force, "Replace a non-empty output directory");
  add_common(c_train, train.common);

  EvaluateArgs eval;
  auto* c_eval = app.add_subcommand("evaluate", "Report and curve CSVs for stages 1-3 and the flat baseline");
  c_eval->add_option("--bundle", eval.bundle, "Model bundle")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--data", eval.data, "Directory written by extract")->required()->check(CLI::ExistingDirectory);
  c_eval->add_option("--manifest", eval.manifest, "Manifest with a split column")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--partition", eval.partition, "train, validation or test");
  c_eval->add_option("--out", eval.out, "Output directory")->required();
  c_eval->add_flag("--hard-gate", eval.common.hard_gate, "Non-pathological screening forces Healthy downstream");
  c_eval->add_flag("--no-oracle", eval.no_oracle, "Skip the ground-truth-upstream variants");
  c_eval->add_flag("--force", eval.common.force, "Replace a non-empty output directory");

  PredictArgs predict;
  auto* c_predict = app.add_subcommand("predict", "Per-recording predictions CSV");
  c_predict->add_option("--bundle", predict.bundle, "Model bundle")->required()->check(CLI::ExistingFile);
  c_predict->add_option("--data", predict.data, "Directory written by extract")->required()->check(CLI::ExistingDirectory);
  c_predict->add_option("--manifest", predict.manifest, "Manifest with a split column")->check(CLI::ExistingFile);
  c_predict->add_option("--partition", predict.partition, "Restrict to one partition");
  c_predict->add_option("--out", predict.out, "Predictions CSV")->required();
  c_predict->add_flag("--hard-gate", predict.common.hard_gate, "Non-pathological screening forces Healthy downstream");

  FuseArgs fuse;
  auto* c_fuse = app.add_subcommand("fuse", "Subject-level majority vote over a speaker's recordings");
  c_fuse->add_option("--predictions", fuse.predictions, "CSV written by predict")->required()->check(CLI::ExistingFile);
  c_fuse->add_option("--out", fuse.out, "Subject-level CSV")->required();
  c_fuse->add_option("--source", fuse.source, "stage3 or flat");
  c_fuse->add_option("--k", fuse.k, "Fuse at most the first k recordings per speaker (0: all)");

  double est_p = 0.0;
  int est_k = 1;
  auto* c_est = app.add_subcommand("estimate-fusion", "Binomial subject-level accuracy for k fused recordings");
  c_est->add_option("p", est_p, "Per-recording accuracy")->required();
  c_est->add_option("k", est_k, "Recordings per subject")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), 2);
  }

  try {
    if (*c_synth) return run_synth(synth);
    if (*c_split) return run_split(split);
    if (*c_extract) return run_extract(extract);
    if (*c_train) return run_train(train);
    if (*c_eval) return run_evaluate(eval);
    if (*c_predict) return run_predict(predict);
    if (*c_fuse) return run_fuse(fuse);
    if (*c_est) return run_estimate(est_p, est_k);
  } catch (const Error& e) {
    return report_error(error_kind_name(e.kind()), e.what(), exit_code_for(e.kind()));
  } catch (const fs::filesystem_error& e) {
    return report_error(error_kind_name(ErrorKind::IoError), e.what(), exit_code_for(ErrorKind::IoError));
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), 4);
  }
  return 2;
}
