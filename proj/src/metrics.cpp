#include "voicetriage/metrics.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <ostream>

#include "voicetriage/csv.hpp"
#include "voicetriage/error.hpp"

namespace vt {

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

std::size_t ConfusionMatrix::fp(std::size_t c) const {
  std::size_t s = 0;
  for (std::size_t t = 0; t < num_classes(); ++t) s += t == c ? 0 : at(t, c);
  return s;
}

std::size_t ConfusionMatrix::fn(std::size_t c) const {
  std::size_t s = 0;
  for (std::size_t p = 0; p < num_classes(); ++p) s += p == c ? 0 : at(c, p);
  return s;
}

ConfusionMatrix confusion(std::span<const std::size_t> truth, std::span<const std::size_t> pred,
                          std::vector<std::string> classes) {
  if (truth.size() != pred.size()) fail(ErrorKind::DimensionMismatch, "confusion: label vectors differ in length");
  ConfusionMatrix cm;
  const std::size_t k = classes.size();
  cm.classes = std::move(classes);
  cm.counts.assign(k * k, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= k || pred[i] >= k) {
      fail(ErrorKind::BadValue, "confusion: label outside the class list at sample " + std::to_string(i));
    }
    ++cm.counts[truth[i] * k + pred[i]];
  }
  return cm;
}

namespace {

double ratio(double num, double den, bool& undefined) {
  if (den == 0.0) {
    undefined = true;
    return 0.0;
  }
  return num / den;
}

double harmonic(double p, double r, bool& undefined) { return ratio(2.0 * p * r, p + r, undefined); }

}  // namespace

Prf class_prf(const ConfusionMatrix& cm, std::size_t c) {
  Prf out;
  const auto tp = static_cast<double>(cm.tp(c));
  const auto fp = static_cast<double>(cm.fp(c));
  const auto fn = static_cast<double>(cm.fn(c));
  const auto tn = static_cast<double>(cm.tn(c));
  out.precision = ratio(tp, tp + fp, out.undefined);
  out.recall = ratio(tp, tp + fn, out.undefined);
  out.f1 = harmonic(out.precision, out.recall, out.undefined);
  out.accuracy = ratio(tp + tn, tp + tn + fp + fn, out.undefined);
  return out;
}

Prf prf(const ConfusionMatrix& cm, Averaging averaging) {
  const std::size_t k = cm.num_classes();
  const std::size_t total = cm.total();
  if (k == 0 || total == 0) fail(ErrorKind::EmptyData, "prf: empty confusion matrix");
  Prf out;
  double trace = 0.0;
  for (std::size_t c = 0; c < k; ++c) trace += static_cast<double>(cm.tp(c));
  out.accuracy = trace / static_cast<double>(total);

  if (averaging == Averaging::Micro) {
    double tp = 0.0;
    double fp = 0.0;
    double fn = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      tp += static_cast<double>(cm.tp(c));
      fp += static_cast<double>(cm.fp(c));
      fn += static_cast<double>(cm.fn(c));
    }
    out.precision = ratio(tp, tp + fp, out.undefined);
    out.recall = ratio(tp, tp + fn, out.undefined);
    out.f1 = harmonic(out.precision, out.recall, out.undefined);
    return out;
  }

  double wsum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const Prf pc = class_prf(cm, c);
    const double w = averaging == Averaging::Macro ? 1.0 : static_cast<double>(cm.support(c));
    out.precision += w * pc.precision;
    out.recall += w * pc.recall;
    out.f1 += w * pc.f1;
    out.undefined = out.undefined || pc.undefined;
    wsum += w;
  }
  out.precision /= wsum;
  out.recall /= wsum;
  out.f1 /= wsum;
  return out;
}

namespace {

struct Ranked {
  std::vector<std::size_t> order;  // indices by descending score, stable
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

Ranked rank(std::span<const double> scores, std::span<const int> relevant) {
  if (scores.size() != relevant.size()) fail(ErrorKind::DimensionMismatch, "auc: scores and labels differ in length");
  Ranked r;
  r.order.resize(scores.size());
  std::iota(r.order.begin(), r.order.end(), std::size_t{0});
  std::stable_sort(r.order.begin(), r.order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  for (int v : relevant) (v != 0 ? r.positives : r.negatives) += 1;
  return r;
}

}  // namespace

RocCurve roc_curve(std::span<const double> scores, std::span<const int> relevant) {
  const Ranked r = rank(scores, relevant);
  if (r.positives == 0 || r.negatives == 0) {
    fail(ErrorKind::UndefinedMetric, "roc: both relevant and irrelevant samples are required");
  }
  RocCurve c;
  c.threshold.push_back(std::numeric_limits<double>::infinity());
  c.fpr.push_back(0.0);
  c.tpr.push_back(0.0);
  // Pairs won: each positive beats every negative ranked strictly below, and
  // draws with the negatives in its own tie group.
  double won = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t i = 0;
  const std::size_t n = r.order.size();
  while (i < n) {
    const double s = scores[r.order[i]];
    std::size_t gp = 0;
    std::size_t gn = 0;
    for (; i < n && scores[r.order[i]] == s; ++i) (relevant[r.order[i]] != 0 ? gp : gn) += 1;
    won += static_cast<double>(gp) * static_cast<double>(r.negatives - fp - gn) +
           0.5 * static_cast<double>(gp) * static_cast<double>(gn);
    tp += gp;
    fp += gn;
    c.threshold.push_back(s);
    c.fpr.push_back(static_cast<double>(fp) / static_cast<double>(r.negatives));
    c.tpr.push_back(static_cast<double>(tp) / static_cast<double>(r.positives));
  }
  c.auc = won / (static_cast<double>(r.positives) * static_cast<double>(r.negatives));
  return c;
}

double roc_auc(std::span<const double> scores, std::span<const int> relevant) {
  return roc_curve(scores, relevant).auc;
}

PrCurve pr_curve(std::span<const double> scores, std::span<const int> relevant) {
  const Ranked r = rank(scores, relevant);
  if (r.positives == 0) fail(ErrorKind::UndefinedMetric, "pr: no relevant samples");
  PrCurve c;
  std::size_t tp = 0;
  std::size_t seen = 0;
  std::size_t i = 0;
  const std::size_t n = r.order.size();
  double ap = 0.0;
  while (i < n) {
    const double s = scores[r.order[i]];
    std::size_t gp = 0;
    for (; i < n && scores[r.order[i]] == s; ++i, ++seen) gp += relevant[r.order[i]] != 0 ? 1 : 0;
    tp += gp;
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += static_cast<double>(gp) * precision;
    c.threshold.push_back(s);
    c.precision.push_back(precision);
    c.recall.push_back(static_cast<double>(tp) / static_cast<double>(r.positives));
  }
  c.average_precision = ap / static_cast<double>(r.positives);
  return c;
}

double pr_auc(std::span<const double> scores, std::span<const int> relevant) {
  return pr_curve(scores, relevant).average_precision;
}

namespace {

std::optional<double> mean_of(const std::vector<std::optional<double>>& values) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& v : values) {
    if (!v) continue;
    s += *v;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

}  // namespace

StageReport evaluate_stage(const std::string& stage, const ScoredPredictions& preds, const ReportOptions& opt) {
  const std::size_t n = preds.truth.size();
  const std::size_t k = preds.classes.size();
  if (n == 0) fail(ErrorKind::EmptyData, "report: empty evaluation set for " + stage);
  if (preds.predicted.size() != n || preds.scores.size() != n) {
    fail(ErrorKind::DimensionMismatch, "report: prediction arrays differ in length for " + stage);
  }
  for (const auto& s : preds.scores) {
    if (s.size() != k) fail(ErrorKind::DimensionMismatch, "report: score vector length differs from class count");
  }
  StageReport r;
  r.stage = stage;
  r.samples = n;
  r.cm = confusion(preds.truth, preds.predicted, preds.classes);
  r.macro = prf(r.cm, Averaging::Macro);
  r.micro = prf(r.cm, Averaging::Micro);
  r.weighted = prf(r.cm, Averaging::Weighted);
  r.accuracy = r.micro.accuracy;

  std::vector<double> column(n);
  std::vector<int> rel(n);
  std::vector<std::optional<double>> rocs;
  std::vector<std::optional<double>> prs;
  for (std::size_t c = 0; c < k; ++c) {
    ClassReport cr;
    cr.name = preds.classes[c];
    cr.prf = class_prf(r.cm, c);
    cr.support = r.cm.support(c);
    for (std::size_t i = 0; i < n; ++i) {
      column[i] = preds.scores[i][c];
      rel[i] = preds.truth[i] == c ? 1 : 0;
    }
    try {
      cr.roc = roc_curve(column, rel);
      cr.roc_auc = cr.roc.auc;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::UndefinedMetric) throw;
    }
    try {
      cr.pr = pr_curve(column, rel);
      cr.pr_auc = cr.pr.average_precision;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::UndefinedMetric) throw;
    }
    rocs.push_back(cr.roc_auc);
    prs.push_back(cr.pr_auc);
    r.per_class.push_back(std::move(cr));
  }
  r.macro_roc_auc = mean_of(rocs);
  r.macro_pr_auc = mean_of(prs);

  auto lookup = [&](const std::string& name) -> std::size_t {
    for (std::size_t c = 0; c < k; ++c) {
      if (preds.classes[c] == name) return c;
    }
    fail(ErrorKind::InvalidArgument, "report: unknown class '" + name + "'");
  };
  if (opt.exclude_class) {
    const std::size_t skip = lookup(*opt.exclude_class);
    std::vector<std::optional<double>> a;
    std::vector<std::optional<double>> b;
    for (std::size_t c = 0; c < k; ++c) {
      if (c == skip) continue;
      a.push_back(rocs[c]);
      b.push_back(prs[c]);
    }
    r.excluded_class = opt.exclude_class;
    r.macro_roc_auc_excluding = mean_of(a);
    r.macro_pr_auc_excluding = mean_of(b);
  }
  for (const auto& [group, members] : opt.groups) {
    GroupMean g;
    g.group = group;
    g.members = members;
    std::vector<std::optional<double>> a;
    std::vector<std::optional<double>> b;
    for (const auto& m : members) {
      a.push_back(rocs[lookup(m)]);
      b.push_back(prs[lookup(m)]);
    }
    g.mean_roc_auc = mean_of(a);
    g.mean_pr_auc = mean_of(b);
    r.group_means.push_back(std::move(g));
  }
  return r;
}

namespace {

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json prf_json(const Prf& p) {
  nlohmann::ordered_json j;
  j["precision"] = p.precision;
  j["recall"] = p.recall;
  j["f1"] = p.f1;
  j["undefined"] = p.undefined;
  return j;
}

}  // namespace

nlohmann::ordered_json stage_report_json(const StageReport& r) {
  nlohmann::ordered_json j;
  j["stage"] = r.stage;
  j["samples"] = r.samples;
  j["classes"] = r.cm.classes;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t t = 0; t < r.cm.num_classes(); ++t) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (std::size_t p = 0; p < r.cm.num_classes(); ++p) row.push_back(r.cm.at(t, p));
    rows.push_back(row);
  }
  j["confusion_matrix"] = rows;
  j["accuracy"] = r.accuracy;
  j["macro"] = prf_json(r.macro);
  j["micro"] = prf_json(r.micro);
  j["weighted"] = prf_json(r.weighted);
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (const auto& c : r.per_class) {
    nlohmann::ordered_json e;
    e["class"] = c.name;
    e["support"] = c.support;
    e["precision"] = c.prf.precision;
    e["recall"] = c.prf.recall;
    e["f1"] = c.prf.f1;
    e["accuracy"] = c.prf.accuracy;
    e["undefined"] = c.prf.undefined;
    e["roc_auc"] = opt_json(c.roc_auc);
    e["pr_auc"] = opt_json(c.pr_auc);
    per.push_back(e);
  }
  j["per_class"] = per;
  j["macro_roc_auc"] = opt_json(r.macro_roc_auc);
  j["macro_pr_auc"] = opt_json(r.macro_pr_auc);
  if (r.excluded_class) {
    j["excluded_class"] = *r.excluded_class;
    j["macro_roc_auc_excluding"] = opt_json(r.macro_roc_auc_excluding);
    j["macro_pr_auc_excluding"] = opt_json(r.macro_pr_auc_excluding);
  }
  if (!r.group_means.empty()) {
    nlohmann::ordered_json groups = nlohmann::ordered_json::array();
    for (const auto& g : r.group_means) {
      nlohmann::ordered_json e;
      e["group"] = g.group;
      e["members"] = g.members;
      e["mean_roc_auc"] = opt_json(g.mean_roc_auc);
      e["mean_pr_auc"] = opt_json(g.mean_pr_auc);
      groups.push_back(e);
    }
    j["group_means"] = groups;
  }
  return j;
}

void write_roc_csv(std::ostream& out, const StageReport& r) {
  out << "class,threshold,fpr,tpr\n";
  for (const auto& c : r.per_class) {
    for (std::size_t i = 0; i < c.roc.threshold.size(); ++i) {
      out << csv::escape(c.name) << ',' << csv::format_double(c.roc.threshold[i]) << ','
          << csv::format_double(c.roc.fpr[i]) << ',' << csv::format_double(c.roc.tpr[i]) << '\n';
    }
  }
}

void write_pr_csv(std::ostream& out, const StageReport& r) {
  out << "class,threshold,precision,recall\n";
  for (const auto& c : r.per_class) {
    for (std::size_t i = 0; i < c.pr.threshold.size(); ++i) {
      out << csv::escape(c.name) << ',' << csv::format_double(c.pr.threshold[i]) << ','
          << csv::format_double(c.pr.precision[i]) << ',' << csv::format_double(c.pr.recall[i]) << '\n';
    }
  }
}

}  // namespace vt
