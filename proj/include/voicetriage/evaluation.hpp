#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "voicetriage/biomarkers.hpp"
#include "voicetriage/metrics.hpp"
#include "voicetriage/pipeline.hpp"

namespace vt {

struct EvalOptions {
  bool hard_gate = false;
  // Adds stage2/stage3 reports computed with ground-truth upstream outputs.
  bool oracle_upstream = true;
};

struct EvalReport {
  nlohmann::ordered_json provenance;
  std::size_t samples = 0;
  // stage1, stage2, stage3, flat, then the oracle-upstream variants.
  std::vector<std::pair<std::string, StageReport>> stages;

  const StageReport& stage(const std::string& name) const;
};

// Per-recording scored predictions for each stage, as fed to the report.
struct StagePredictions {
  ScoredPredictions stage1;
  ScoredPredictions stage2;
  ScoredPredictions stage3;
  ScoredPredictions flat;
};
StagePredictions collect_predictions(std::span<const ProcessedRecording> recs,
                                     std::span<const PipelinePrediction> preds);

// Errors: EmptyData, NotFitted, DimensionMismatch.
EvalReport evaluate_pipeline(const ModelBundle& bundle, std::span<const ProcessedRecording> test,
                             const EvalOptions& opt = {});

nlohmann::ordered_json eval_report_json(const EvalReport& report);

// "# seed=<n> config_digest=<hex> format_version=<n>", the first line of
// every CSV the tools write.
std::string provenance_comment(const nlohmann::ordered_json& provenance);

// report.json plus <stage>_roc.csv and <stage>_pr.csv per stage.
void write_eval_outputs(const std::filesystem::path& dir, const EvalReport& report);

}  // namespace vt
