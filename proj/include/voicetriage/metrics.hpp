#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace vt {

// K x K counts, row = true class, column = predicted class.
struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::size_t> counts;

  std::size_t num_classes() const { return classes.size(); }
  std::size_t at(std::size_t truth, std::size_t pred) const { return counts[truth * classes.size() + pred]; }
  std::size_t total() const;
  std::size_t tp(std::size_t c) const { return at(c, c); }
  std::size_t fp(std::size_t c) const;
  std::size_t fn(std::size_t c) const;
  std::size_t tn(std::size_t c) const { return total() - tp(c) - fp(c) - fn(c); }
  std::size_t support(std::size_t c) const { return tp(c) + fn(c); }
};

// Labels are class indices. Errors: DimensionMismatch, BadValue (label out of range).
ConfusionMatrix confusion(std::span<const std::size_t> truth, std::span<const std::size_t> pred,
                          std::vector<std::string> classes);

enum class Averaging { Macro, Micro, Weighted };

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  bool undefined = false;  // some 0/0 ratio was replaced by 0
};

// One-vs-rest metrics of class c; accuracy is (TP + TN) / total.
Prf class_prf(const ConfusionMatrix& cm, std::size_t c);
// Aggregated metrics; accuracy is the trace over the total. Macro and weighted
// F1 average the per-class F1 values. Errors: EmptyData.
Prf prf(const ConfusionMatrix& cm, Averaging averaging);

struct RocCurve {
  std::vector<double> threshold;  // descending; the first point is +inf
  std::vector<double> fpr;
  std::vector<double> tpr;
  double auc = 0.0;
};

struct PrCurve {
  std::vector<double> threshold;  // descending
  std::vector<double> precision;
  std::vector<double> recall;
  double average_precision = 0.0;
};

// Mann-Whitney AUC: the share of (positive, negative) pairs where the
// positive scores higher, ties counting 1/2. Curve points at every distinct
// threshold. Errors: DimensionMismatch, UndefinedMetric (one relevance value).
RocCurve roc_curve(std::span<const double> scores, std::span<const int> relevant);
double roc_auc(std::span<const double> scores, std::span<const int> relevant);

// Average precision: sum over distinct thresholds t of
// (R(t) - R(t_prev)) * P(t), i.e. each positive contributes the precision at
// the end of its tie group. Without ties this is the mean precision at the
// rank of each positive. Errors: DimensionMismatch, UndefinedMetric (no positives).
PrCurve pr_curve(std::span<const double> scores, std::span<const int> relevant);
double pr_auc(std::span<const double> scores, std::span<const int> relevant);

// Per-sample true class index and per-class scores for one stage.
struct ScoredPredictions {
  std::vector<std::string> classes;
  std::vector<std::size_t> truth;
  std::vector<std::size_t> predicted;
  std::vector<std::vector<double>> scores;
};

struct ClassReport {
  std::string name;
  Prf prf;
  std::size_t support = 0;
  std::optional<double> roc_auc;  // nullopt when undefined on this set
  std::optional<double> pr_auc;
  RocCurve roc;
  PrCurve pr;
};

struct GroupMean {
  std::string group;
  std::vector<std::string> members;
  std::optional<double> mean_roc_auc;
  std::optional<double> mean_pr_auc;
};

struct StageReport {
  std::string stage;
  std::size_t samples = 0;
  ConfusionMatrix cm;
  double accuracy = 0.0;
  Prf macro;
  Prf micro;
  Prf weighted;
  std::vector<ClassReport> per_class;
  std::optional<double> macro_roc_auc;  // over classes with a defined AUC
  std::optional<double> macro_pr_auc;
  // Same means without the excluded class (Healthy for subtype stages).
  std::optional<std::string> excluded_class;
  std::optional<double> macro_roc_auc_excluding;
  std::optional<double> macro_pr_auc_excluding;
  std::vector<GroupMean> group_means;
};

struct ReportOptions {
  std::optional<std::string> exclude_class;
  // Group name -> member class names, in output order.
  std::vector<std::pair<std::string, std::vector<std::string>>> groups;
};

// Errors: EmptyData, DimensionMismatch.
StageReport evaluate_stage(const std::string& stage, const ScoredPredictions& preds, const ReportOptions& opt = {});

// Fixed key order; undefined metrics are null.
nlohmann::ordered_json stage_report_json(const StageReport& r);

// threshold,fpr,tpr per class, with a leading class column.
void write_roc_csv(std::ostream& out, const StageReport& r);
// threshold,precision,recall per class, with a leading class column.
void write_pr_csv(std::ostream& out, const StageReport& r);

}  // namespace vt
