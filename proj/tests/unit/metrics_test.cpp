#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "expect_error.hpp"
#include "voicetriage/csv.hpp"
#include "voicetriage/metrics.hpp"
#include "voicetriage/rng.hpp"

using namespace vt;

namespace {

// Exhaustive pair count with ties worth one half.
double pair_count_auc(const std::vector<double>& s, const std::vector<int>& rel) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!rel[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (rel[j]) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Precision at each positive's rank, averaged; scores assumed tie-free.
double ranked_ap(const std::vector<double>& s, const std::vector<int>& rel) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  double hits = 0.0;
  double sum = 0.0;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (rel[idx[r]]) {
      hits += 1.0;
      sum += hits / static_cast<double>(r + 1);
    }
  }
  return sum / hits;
}

ConfusionMatrix random_confusion(Rng& rng, std::size_t k, std::size_t n) {
  std::vector<std::size_t> t(n);
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = rng.index(k);
    p[i] = rng.uniform() < 0.6 ? t[i] : rng.index(k);
  }
  std::vector<std::string> names;
  for (std::size_t c = 0; c < k; ++c) names.push_back("c" + std::to_string(c));
  return confusion(t, p, names);
}

ScoredPredictions random_predictions(Rng& rng, std::size_t k, std::size_t n) {
  ScoredPredictions sp;
  for (std::size_t c = 0; c < k; ++c) sp.classes.push_back("class " + std::to_string(c));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = i % k;
    std::vector<double> s(k);
    for (std::size_t c = 0; c < k; ++c) s[c] = rng.normal() + (c == t ? 1.5 : 0.0);
    sp.truth.push_back(t);
    sp.predicted.push_back(static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin()));
    sp.scores.push_back(std::move(s));
  }
  return sp;
}

}  // namespace

TEST_CASE("confusion matrix basics") {
  const std::vector<std::size_t> t = {0, 1, 2, 1};
  const ConfusionMatrix perfect = confusion(t, t, {"a", "b", "c"});
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (i != j) CHECK(perfect.at(i, j) == 0);
    }
  }
  CHECK(perfect.at(1, 1) == 2);
  const ConfusionMatrix one = confusion(std::vector<std::size_t>{0}, std::vector<std::size_t>{1}, {"A", "B"});
  CHECK(one.at(0, 1) == 1);
  CHECK(one.total() == 1);
  CHECK_ERROR_KIND(confusion(t, std::vector<std::size_t>{0}, {"a", "b", "c"}), ErrorKind::DimensionMismatch);
  CHECK_ERROR_KIND(confusion(std::vector<std::size_t>{5}, std::vector<std::size_t>{0}, {"a"}), ErrorKind::BadValue);
}

TEST_CASE("property: confusion rows recount the true labels") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng.index(8);
    const std::size_t n = 1 + rng.index(60);
    std::vector<std::size_t> t(n);
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = rng.index(k);
      p[i] = rng.index(k);
    }
    std::vector<std::string> names(k, "x");
    const ConfusionMatrix cm = confusion(t, p, names);
    CHECK(cm.total() == n);
    for (std::size_t c = 0; c < k; ++c) {
      std::size_t row = 0;
      for (std::size_t j = 0; j < k; ++j) row += cm.at(c, j);
      CHECK(row == static_cast<std::size_t>(std::count(t.begin(), t.end(), c)));
    }
  }
}

TEST_CASE("accuracy from binary counts") {
  // TP=85, FN=15, FP=25, TN=75 with class 1 as positive.
  std::vector<std::size_t> t;
  std::vector<std::size_t> p;
  auto add = [&](std::size_t truth, std::size_t pred, int n) {
    for (int i = 0; i < n; ++i) {
      t.push_back(truth);
      p.push_back(pred);
    }
  };
  add(1, 1, 85);
  add(1, 0, 15);
  add(0, 1, 25);
  add(0, 0, 75);
  const ConfusionMatrix cm = confusion(t, p, {"neg", "pos"});
  CHECK(class_prf(cm, 1).accuracy == doctest::Approx(0.80).epsilon(1e-15));
  CHECK(prf(cm, Averaging::Micro).accuracy == doctest::Approx(0.80).epsilon(1e-15));
  CHECK(class_prf(cm, 1).precision == doctest::Approx(85.0 / 110.0));
  CHECK(class_prf(cm, 1).recall == doctest::Approx(0.85));
}

TEST_CASE("macro and micro precision by hand") {
  // A: TP=9, FP=1, FN=1. B: TP=1, FP=1, FN=1.
  const std::vector<std::size_t> t = {0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 1};
  const std::vector<std::size_t> p = {0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 0};
  const ConfusionMatrix cm = confusion(t, p, {"A", "B"});
  CHECK(cm.tp(0) == 9);
  CHECK(cm.fp(0) == 1);
  CHECK(cm.fn(0) == 1);
  CHECK(cm.tp(1) == 1);
  CHECK(prf(cm, Averaging::Macro).precision == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(prf(cm, Averaging::Micro).precision == doctest::Approx(10.0 / 12.0).epsilon(1e-15));
}

TEST_CASE("F1 equals precision when precision equals recall") {
  const ConfusionMatrix cm = confusion(std::vector<std::size_t>{0, 0, 1, 1}, std::vector<std::size_t>{0, 1, 0, 1},
                                       {"a", "b"});
  const Prf r = class_prf(cm, 0);
  CHECK(r.precision == r.recall);
  CHECK(r.f1 == doctest::Approx(r.precision).epsilon(1e-15));
}

TEST_CASE("undefined ratios are zero and flagged") {
  const ConfusionMatrix cm = confusion(std::vector<std::size_t>{0, 0}, std::vector<std::size_t>{0, 0}, {"a", "b"});
  const Prf r = class_prf(cm, 1);
  CHECK(r.precision == 0.0);
  CHECK(r.recall == 0.0);
  CHECK(r.undefined);
  CHECK(prf(cm, Averaging::Macro).undefined);
  CHECK_FALSE(class_prf(cm, 0).undefined);
}

TEST_CASE("property: pooled micro metrics equal accuracy") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const ConfusionMatrix cm = random_confusion(rng, 2 + rng.index(7), 10 + rng.index(100));
    const Prf m = prf(cm, Averaging::Micro);
    CHECK(m.precision == doctest::Approx(m.accuracy).epsilon(1e-12));
    CHECK(m.recall == doctest::Approx(m.accuracy).epsilon(1e-12));
    CHECK(m.f1 == doctest::Approx(m.accuracy).epsilon(1e-12));
  }
}

TEST_CASE("property: macro F1 lies between per-class extremes") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const ConfusionMatrix cm = random_confusion(rng, 2 + rng.index(7), 10 + rng.index(100));
    double lo = 1.0;
    double hi = 0.0;
    for (std::size_t c = 0; c < cm.num_classes(); ++c) {
      lo = std::min(lo, class_prf(cm, c).f1);
      hi = std::max(hi, class_prf(cm, c).f1);
    }
    const double f1 = prf(cm, Averaging::Macro).f1;
    CHECK(f1 >= lo - 1e-15);
    CHECK(f1 <= hi + 1e-15);
  }
}

TEST_CASE("ROC-AUC examples") {
  CHECK(roc_auc(std::vector<double>{0.9, 0.8, 0.7, 0.1}, std::vector<int>{1, 1, 0, 0}) == 1.0);
  CHECK(roc_auc(std::vector<double>{0.8, 0.3, 0.5, 0.1}, std::vector<int>{1, 1, 0, 0}) == doctest::Approx(0.75));
  CHECK(roc_auc(std::vector<double>(6, 0.4), std::vector<int>{1, 0, 1, 0, 0, 1}) == doctest::Approx(0.5));
  CHECK_ERROR_KIND(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), ErrorKind::UndefinedMetric);
  CHECK_ERROR_KIND(roc_auc(std::vector<double>{0.1}, std::vector<int>{1, 0}), ErrorKind::DimensionMismatch);
}

TEST_CASE("property: ROC-AUC matches pair enumeration and the curve area") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.index(40);
    std::vector<double> s(n);
    std::vector<int> rel(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::round(rng.normal() * 4.0) / 4.0;  // coarse grid forces ties
      rel[i] = rng.uniform() < 0.4 ? 1 : 0;
    }
    rel[0] = 1;
    rel[1] = 0;
    const RocCurve c = roc_curve(s, rel);
    CHECK(c.auc == doctest::Approx(pair_count_auc(s, rel)).epsilon(1e-12));
    CHECK(std::isinf(c.threshold.front()));
    CHECK(c.fpr.front() == 0.0);
    CHECK(c.tpr.back() == 1.0);
    double area = 0.0;
    for (std::size_t i = 1; i < c.fpr.size(); ++i) area += (c.fpr[i] - c.fpr[i - 1]) * 0.5 * (c.tpr[i] + c.tpr[i - 1]);
    CHECK(area == doctest::Approx(c.auc).epsilon(1e-12));
  }
}

TEST_CASE("property: ROC-AUC is invariant to monotone transforms and flips under negation") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5 + rng.index(50);
    std::vector<double> s(n);
    std::vector<int> rel(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.normal();
      rel[i] = rng.uniform() < 0.5 ? 1 : 0;
    }
    rel[0] = 1;
    rel[1] = 0;
    const double base = roc_auc(s, rel);
    std::vector<double> e(n);
    std::vector<double> a(n);
    std::vector<double> neg(n);
    for (std::size_t i = 0; i < n; ++i) {
      e[i] = std::exp(s[i]);
      a[i] = 3.0 * s[i] - 7.0;
      neg[i] = -s[i];
    }
    CHECK(roc_auc(e, rel) == base);
    CHECK(roc_auc(a, rel) == base);
    CHECK(base + roc_auc(neg, rel) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("average precision examples") {
  CHECK(pr_auc(std::vector<double>{0.9, 0.8, 0.7, 0.6}, std::vector<int>{1, 0, 1, 0}) ==
        doctest::Approx(0.5 * 1.0 + 0.5 * 2.0 / 3.0).epsilon(1e-12));
  CHECK(pr_auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}) == 1.0);
  // A tie group shares the precision at its end.
  CHECK(pr_auc(std::vector<double>{0.5, 0.5, 0.1}, std::vector<int>{1, 0, 1}) ==
        doctest::Approx(0.5 * 0.5 + 0.5 * 2.0 / 3.0).epsilon(1e-12));
  CHECK_ERROR_KIND(pr_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}), ErrorKind::UndefinedMetric);
}

TEST_CASE("property: average precision matches ranked precision without ties") {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.index(40);
    std::vector<double> s(n);
    std::vector<int> rel(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.normal();
      rel[i] = rng.uniform() < 0.3 ? 1 : 0;
    }
    rel[0] = 1;
    CHECK(pr_auc(s, rel) == doctest::Approx(ranked_ap(s, rel)).epsilon(1e-12));
  }
}

TEST_CASE("random scores give average precision near prevalence") {
  Rng rng(7);
  const std::size_t n = 200;
  std::vector<int> rel(n, 0);
  for (std::size_t i = 0; i < 50; ++i) rel[i] = 1;
  double mean = 0.0;
  std::vector<double> s(n);
  for (int trial = 0; trial < 1000; ++trial) {
    for (double& v : s) v = rng.uniform();
    mean += pr_auc(s, rel) / 1000.0;
  }
  CHECK(std::abs(mean - 0.25) <= 0.02);
}

TEST_CASE("perfect predictions score 1 everywhere") {
  ScoredPredictions sp;
  sp.classes = {"a", "b", "c"};
  for (std::size_t i = 0; i < 30; ++i) {
    const std::size_t t = i % 3;
    std::vector<double> s(3, 0.1);
    s[t] = 0.8;
    sp.truth.push_back(t);
    sp.predicted.push_back(t);
    sp.scores.push_back(s);
  }
  const StageReport r = evaluate_stage("toy", sp);
  CHECK(r.accuracy == 1.0);
  CHECK(r.macro.f1 == 1.0);
  CHECK(r.micro.f1 == 1.0);
  CHECK(r.weighted.f1 == 1.0);
  CHECK(r.macro_roc_auc.value() == 1.0);
  CHECK(r.macro_pr_auc.value() == 1.0);
  for (const auto& c : r.per_class) {
    CHECK(c.roc_auc.value() == 1.0);
    CHECK(c.pr_auc.value() == 1.0);
  }
}

TEST_CASE("report schema, exclusion and group means") {
  Rng rng(8);
  const ScoredPredictions sp = random_predictions(rng, 4, 80);
  ReportOptions opt;
  opt.exclude_class = "class 0";
  opt.groups = {{"odd", {"class 1", "class 3"}}, {"even", {"class 2"}}};
  const StageReport r = evaluate_stage("stage3", sp, opt);
  const auto j = stage_report_json(r);
  std::vector<std::string> keys;
  for (const auto& item : j.items()) keys.push_back(item.key());
  CHECK(keys == std::vector<std::string>{"stage", "samples", "classes", "confusion_matrix", "accuracy", "macro",
                                         "micro", "weighted", "per_class", "macro_roc_auc", "macro_pr_auc",
                                         "excluded_class", "macro_roc_auc_excluding", "macro_pr_auc_excluding",
                                         "group_means"});
  for (const auto& c : j["per_class"]) {
    for (const char* k : {"class", "support", "precision", "recall", "f1", "accuracy", "roc_auc", "pr_auc"}) {
      CHECK(c.contains(k));
    }
  }
  double sum = 0.0;
  for (std::size_t c = 1; c < 4; ++c) sum += r.per_class[c].roc_auc.value();
  CHECK(r.macro_roc_auc_excluding.value() == doctest::Approx(sum / 3.0).epsilon(1e-12));
  double all = sum + r.per_class[0].roc_auc.value();
  CHECK(r.macro_roc_auc.value() == doctest::Approx(all / 4.0).epsilon(1e-12));
  REQUIRE(r.group_means.size() == 2);
  CHECK(r.group_means[0].group == "odd");
  CHECK(r.group_means[0].mean_roc_auc.value() ==
        doctest::Approx(0.5 * (r.per_class[1].roc_auc.value() + r.per_class[3].roc_auc.value())).epsilon(1e-12));
  CHECK(r.group_means[1].mean_roc_auc.value() == doctest::Approx(r.per_class[2].roc_auc.value()).epsilon(1e-12));
}

TEST_CASE("class without positives has no AUC") {
  ScoredPredictions sp;
  sp.classes = {"a", "b", "c"};
  for (std::size_t i = 0; i < 10; ++i) {
    const std::size_t t = i % 2;
    sp.truth.push_back(t);
    sp.predicted.push_back(t);
    sp.scores.push_back({t == 0 ? 0.9 : 0.1, t == 1 ? 0.9 : 0.1, 0.0});
  }
  const StageReport r = evaluate_stage("s", sp);
  CHECK_FALSE(r.per_class[2].roc_auc.has_value());
  CHECK(r.macro_roc_auc.value() == 1.0);
  CHECK(stage_report_json(r)["per_class"][2]["roc_auc"].is_null());
  CHECK_ERROR_KIND(evaluate_stage("s", ScoredPredictions{{"a"}, {}, {}, {}}), ErrorKind::EmptyData);
}

TEST_CASE("exported curves reproduce the reported areas") {
  Rng rng(9);
  const ScoredPredictions sp = random_predictions(rng, 3, 60);
  const StageReport r = evaluate_stage("stage2", sp);
  std::stringstream roc;
  std::stringstream pr;
  write_roc_csv(roc, r);
  write_pr_csv(pr, r);

  std::map<std::string, std::vector<std::array<double, 3>>> roc_rows;
  std::map<std::string, std::vector<std::array<double, 3>>> pr_rows;
  auto load = [](std::stringstream& in, auto& rows, const std::string& header) {
    std::string line;
    std::getline(in, line);
    CHECK(line == header);
    while (std::getline(in, line)) {
      const auto fields = csv::split_line(line);
      REQUIRE(fields.size() == 4);
      rows[fields[0]].push_back({std::stod(fields[1]), std::stod(fields[2]), std::stod(fields[3])});
    }
  };
  load(roc, roc_rows, "class,threshold,fpr,tpr");
  load(pr, pr_rows, "class,threshold,precision,recall");
  for (const auto& c : r.per_class) {
    const auto& pts = roc_rows.at(c.name);
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) area += (pts[i][1] - pts[i - 1][1]) * 0.5 * (pts[i][2] + pts[i - 1][2]);
    CHECK(std::abs(area - c.roc_auc.value()) <= 1e-9);
    const auto& ppts = pr_rows.at(c.name);
    double ap = 0.0;
    double prev_recall = 0.0;
    for (const auto& p : ppts) {
      ap += (p[2] - prev_recall) * p[1];
      prev_recall = p[2];
    }
    CHECK(std::abs(ap - c.pr_auc.value()) <= 1e-9);
  }
}
