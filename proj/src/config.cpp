#include "voicetriage/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "voicetriage/csv.hpp"
#include "voicetriage/error.hpp"

namespace vt {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* expected) {
  fail(ErrorKind::BadValue, "config: " + key + "=" + value + " is not " + expected);
}

double to_double(const std::string& key, std::string_view v) {
  v = trim(v);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) bad(key, std::string(v), "a number");
  return out;
}

std::uint64_t to_unsigned(const std::string& key, std::string_view v) {
  v = trim(v);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad(key, std::string(v), "a non-negative integer");
  return out;
}

bool to_bool(const std::string& key, std::string_view v) {
  v = trim(v);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad(key, std::string(v), "a boolean");
}

std::vector<double> to_list(const std::string& key, std::string_view v) {
  std::vector<double> out;
  while (true) {
    const auto comma = v.find(',');
    out.push_back(to_double(key, v.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

struct GridLists {
  std::vector<double> c;
  std::vector<double> width;
};

std::vector<GridPoint> build_grid(int stage, const GridLists& g) {
  const std::string prefix = "stage" + std::to_string(stage);
  const char* width_key = stage == 1 ? ".gamma" : ".scale";
  if (g.c.empty() || g.width.empty()) {
    fail(ErrorKind::BadValue, "config: " + prefix + ".c and " + prefix + width_key + " must be given together");
  }
  std::vector<GridPoint> out;
  for (double w : g.width) {
    for (double c : g.c) {
      if (c <= 0.0 || w <= 0.0) fail(ErrorKind::BadValue, "config: " + prefix + " grid values must be positive");
      const KernelSpec k = stage == 1 ? KernelSpec::gaussian(w) : KernelSpec::polynomial(stage == 2 ? 3 : 2, w);
      out.push_back({c, k});
    }
  }
  return out;
}

std::string grid_string(const std::vector<GridPoint>& grid) {
  std::string out;
  for (const auto& p : grid) {
    if (!out.empty()) out += ';';
    out += "c=" + csv::format_double(p.C);
    if (p.kernel.kind == KernelKind::Gaussian) {
      out += ",gamma=" + csv::format_double(p.kernel.gamma);
    } else {
      out += ",degree=" + std::to_string(p.kernel.degree) + ",scale=" + csv::format_double(p.kernel.scale);
    }
  }
  return out;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_key_values(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string_view body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorKind::BadValue, "config line " + std::to_string(number) + ": expected key=value");
    }
    std::string key(trim(body.substr(0, eq)));
    std::string value(trim(body.substr(eq + 1)));
    if (key.empty()) fail(ErrorKind::BadValue, "config line " + std::to_string(number) + ": empty key");
    if (!seen.insert(key).second) {
      fail(ErrorKind::DuplicateId, "config line " + std::to_string(number) + ": duplicate key " + key);
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

void apply_key_values(RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& kv) {
  PipelineConfig& p = cfg.pipeline;
  std::map<int, GridLists> grids;
  for (const auto& [key, value] : kv) {
    if (key == "seed") {
      p.seed = to_unsigned(key, value);
    } else if (key == "threads") {
      p.threads = std::max<std::uint64_t>(1, to_unsigned(key, value));
    } else if (key == "cv_folds") {
      p.cv_folds = to_unsigned(key, value);
      if (p.cv_folds < 2) bad(key, value, "at least 2");
    } else if (key == "smo_tol") {
      p.smo_tol = to_double(key, value);
      if (p.smo_tol <= 0.0) bad(key, value, "positive");
    } else if (key == "augmentation") {
      if (value == "hard") {
        p.augmentation = Augmentation::Hard;
      } else if (value == "soft") {
        p.augmentation = Augmentation::Soft;
      } else {
        bad(key, value, "hard or soft");
      }
    } else if (key == "hard_gate") {
      cfg.hard_gate = to_bool(key, value);
    } else if (key == "deterministic") {
      cfg.deterministic = to_bool(key, value);
    } else if (key == "split.train") {
      cfg.split.train = to_double(key, value);
    } else if (key == "split.validation") {
      cfg.split.validation = to_double(key, value);
    } else if (key == "split.test") {
      cfg.split.test = to_double(key, value);
    } else if (key == "cnn.filters") {
      p.cnn.filters.clear();
      for (double f : to_list(key, value)) {
        if (f < 1.0 || f != std::floor(f)) bad(key, value, "a list of positive integers");
        p.cnn.filters.push_back(static_cast<int>(f));
      }
    } else if (key == "cnn.input_rows") {
      p.cnn.input_rows = to_unsigned(key, value);
    } else if (key == "cnn.input_cols") {
      p.cnn.input_cols = to_unsigned(key, value);
    } else if (key == "cnn.max_epochs") {
      p.cnn.max_epochs = static_cast<int>(to_unsigned(key, value));
    } else if (key == "cnn.patience") {
      p.cnn.patience = static_cast<int>(to_unsigned(key, value));
    } else if (key == "cnn.batch_size") {
      p.cnn.batch_size = to_unsigned(key, value);
    } else if (key == "cnn.learning_rate") {
      p.cnn.learning_rate = to_double(key, value);
    } else if (key == "trees.count") {
      p.trees.trees = to_unsigned(key, value);
    } else if (key == "trees.min_leaf") {
      p.trees.min_leaf = to_unsigned(key, value);
    } else if (key == "trees.bootstrap") {
      p.trees.bootstrap = to_bool(key, value);
    } else if (key == "stage1.c" || key == "stage2.c" || key == "stage3.c") {
      grids[key[5] - '0'].c = to_list(key, value);
    } else if (key == "stage1.gamma" || key == "stage2.scale" || key == "stage3.scale") {
      grids[key[5] - '0'].width = to_list(key, value);
    } else {
      fail(ErrorKind::BadValue, "config: unknown key " + key);
    }
  }
  for (const auto& [stage, lists] : grids) {
    auto grid = build_grid(stage, lists);
    (stage == 1 ? p.grid1 : stage == 2 ? p.grid2 : p.grid3) = std::move(grid);
  }
  if (cfg.deterministic) p.threads = 1;
  p.cnn.validate();
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot read config " + path.string());
  RunConfig cfg;
  apply_key_values(cfg, parse_key_values(in));
  return cfg;
}

std::string canonical_config(const RunConfig& cfg) {
  const PipelineConfig& p = cfg.pipeline;
  std::map<std::string, std::string> kv;
  kv["seed"] = std::to_string(p.seed);
  kv["cv_folds"] = std::to_string(p.cv_folds);
  kv["smo_tol"] = csv::format_double(p.smo_tol);
  kv["augmentation"] = p.augmentation == Augmentation::Soft ? "soft" : "hard";
  kv["hard_gate"] = cfg.hard_gate ? "true" : "false";
  kv["split.train"] = csv::format_double(cfg.split.train);
  kv["split.validation"] = csv::format_double(cfg.split.validation);
  kv["split.test"] = csv::format_double(cfg.split.test);
  std::string filters;
  for (int f : p.cnn.filters) filters += (filters.empty() ? "" : ",") + std::to_string(f);
  kv["cnn.filters"] = filters;
  kv["cnn.input_rows"] = std::to_string(p.cnn.input_rows);
  kv["cnn.input_cols"] = std::to_string(p.cnn.input_cols);
  kv["cnn.max_epochs"] = std::to_string(p.cnn.max_epochs);
  kv["cnn.patience"] = std::to_string(p.cnn.patience);
  kv["cnn.batch_size"] = std::to_string(p.cnn.batch_size);
  kv["cnn.learning_rate"] = csv::format_double(p.cnn.learning_rate);
  kv["trees.count"] = std::to_string(p.trees.trees);
  kv["trees.min_leaf"] = std::to_string(p.trees.min_leaf);
  kv["trees.bootstrap"] = p.trees.bootstrap ? "true" : "false";
  for (int s = 1; s <= 3; ++s) kv["stage" + std::to_string(s) + ".grid"] = grid_string(p.stage_grid(s));
  std::ostringstream out;
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
  return out.str();
}

std::string config_digest(const RunConfig& cfg) {
  const std::string text = canonical_config(cfg);
  return sha256_hex({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::uint64_t default_seed(std::uint64_t fallback) {
  const char* env = std::getenv("VOICETRIAGE_SEED");
  if (env == nullptr || *env == '\0') return fallback;
  return to_unsigned("VOICETRIAGE_SEED", env);
}

}  // namespace vt
