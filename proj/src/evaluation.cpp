#include "voicetriage/evaluation.hpp"

#include <fstream>

#include "voicetriage/error.hpp"
#include "voicetriage/labels.hpp"

namespace vt {

namespace {

std::vector<std::string> diagnosis_names() {
  std::vector<std::string> out;
  for (Diagnosis d : kAllDiagnoses) out.emplace_back(diagnosis_name(d));
  return out;
}

std::vector<std::string> group_names() {
  std::vector<std::string> out;
  for (EtiologyGroup g : kAllGroups) out.emplace_back(group_name(g));
  return out;
}

ReportOptions subtype_options() {
  ReportOptions opt;
  opt.exclude_class = std::string(diagnosis_name(Diagnosis::Healthy));
  for (EtiologyGroup g : kAllGroups) {
    if (g == EtiologyGroup::Healthy) continue;
    std::vector<std::string> members;
    for (Diagnosis d : kAllDiagnoses) {
      if (map_group(d) == g) members.emplace_back(diagnosis_name(d));
    }
    opt.groups.emplace_back(std::string(group_name(g)), std::move(members));
  }
  return opt;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  return out;
}

}  // namespace

std::string provenance_comment(const nlohmann::ordered_json& provenance) {
  std::string line = "# seed=" + std::to_string(provenance.value("seed", std::uint64_t{0}));
  line += " config_digest=" + provenance.value("config_digest", std::string("none"));
  line += " format_version=" + std::to_string(provenance.value("format_version", kBundleVersion));
  return line;
}

const StageReport& EvalReport::stage(const std::string& name) const {
  for (const auto& [n, r] : stages) {
    if (n == name) return r;
  }
  fail(ErrorKind::InvalidArgument, "report has no stage '" + name + "'");
}

StagePredictions collect_predictions(std::span<const ProcessedRecording> recs,
                                     std::span<const PipelinePrediction> preds) {
  if (recs.size() != preds.size()) fail(ErrorKind::DimensionMismatch, "evaluate: one prediction per recording");
  StagePredictions s;
  s.stage1.classes = {std::string(screening_name(Screening::NonPathological)),
                      std::string(screening_name(Screening::Pathological))};
  s.stage2.classes = group_names();
  s.stage3.classes = diagnosis_names();
  s.flat.classes = s.stage3.classes;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const Diagnosis truth = recs[i].diagnosis;
    const PipelinePrediction& p = preds[i];
    s.stage1.truth.push_back(index_of(map_screening(truth)));
    s.stage1.predicted.push_back(index_of(p.binary));
    s.stage1.scores.push_back({1.0 - p.p_pathological, p.p_pathological});
    s.stage2.truth.push_back(index_of(map_group(truth)));
    s.stage2.predicted.push_back(index_of(p.group));
    s.stage2.scores.push_back(p.stage2_scores);
    s.stage3.truth.push_back(index_of(truth));
    s.stage3.predicted.push_back(index_of(p.subtype));
    s.stage3.scores.push_back(p.stage3_scores);
    s.flat.truth.push_back(index_of(truth));
    s.flat.predicted.push_back(index_of(p.flat_subtype));
    s.flat.scores.push_back(p.flat_scores);
  }
  return s;
}

EvalReport evaluate_pipeline(const ModelBundle& bundle, std::span<const ProcessedRecording> test,
                             const EvalOptions& opt) {
  if (test.empty()) fail(ErrorKind::EmptyData, "evaluate: empty evaluation set");
  EvalReport report;
  report.samples = test.size();
  report.provenance["format_version"] = bundle.version;
  report.provenance["seed"] = bundle.provenance.value("seed", std::uint64_t{0});
  report.provenance["config_digest"] = bundle.provenance.value("config_digest", std::string());
  report.provenance["train_digest"] = bundle.provenance.value("train_digest", std::string());
  report.provenance["test_digest"] = feature_digest(test);
  report.provenance["hard_gate"] = opt.hard_gate;
  report.provenance["augmentation"] = bundle.augmentation == Augmentation::Soft ? "soft" : "hard";

  PredictOptions popt;
  popt.hard_gate = opt.hard_gate;
  const auto preds = predict_batch(bundle, test, popt);
  const StagePredictions s = collect_predictions(test, preds);
  const ReportOptions sub = subtype_options();
  report.stages.emplace_back("stage1", evaluate_stage("stage1", s.stage1));
  report.stages.emplace_back("stage2", evaluate_stage("stage2", s.stage2));
  report.stages.emplace_back("stage3", evaluate_stage("stage3", s.stage3, sub));
  report.stages.emplace_back("flat", evaluate_stage("flat", s.flat, sub));

  if (opt.oracle_upstream) {
    std::vector<PipelinePrediction> oracle;
    oracle.reserve(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
      PredictOptions o = popt;
      o.oracle_stage1 = map_screening(test[i].diagnosis);
      o.oracle_stage2 = map_group(test[i].diagnosis);
      oracle.push_back(predict_pipeline(bundle, test[i], o));
    }
    const StagePredictions so = collect_predictions(test, oracle);
    report.stages.emplace_back("stage2_oracle_upstream", evaluate_stage("stage2_oracle_upstream", so.stage2));
    report.stages.emplace_back("stage3_oracle_upstream", evaluate_stage("stage3_oracle_upstream", so.stage3, sub));
  }
  return report;
}

nlohmann::ordered_json eval_report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["provenance"] = report.provenance;
  j["samples"] = report.samples;
  nlohmann::ordered_json stages = nlohmann::ordered_json::object();
  for (const auto& [name, r] : report.stages) stages[name] = stage_report_json(r);
  j["stages"] = stages;
  return j;
}

void write_eval_outputs(const std::filesystem::path& dir, const EvalReport& report) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_output(dir / "report.json");
    out << eval_report_json(report).dump(2) << '\n';
  }
  for (const auto& [name, r] : report.stages) {
    auto roc = open_output(dir / (name + "_roc.csv"));
    roc << provenance_comment(report.provenance) << '\n';
    write_roc_csv(roc, r);
    auto pr = open_output(dir / (name + "_pr.csv"));
    pr << provenance_comment(report.provenance) << '\n';
    write_pr_csv(pr, r);
  }
}

}  // namespace vt
