#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "voicetriage/dataset.hpp"
#include "voicetriage/pipeline.hpp"

namespace vt {

// Flat key=value text. Blank lines and lines starting with '#' are skipped;
// whitespace around keys and values is trimmed. Errors: BadValue (missing
// '=' or empty key, with the 1-based line number), DuplicateId.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::istream& in);

struct RunConfig {
  PipelineConfig pipeline;
  SplitRatios split;
  bool hard_gate = false;
  bool deterministic = false;
};

// Recognized keys:
//   seed, threads, cv_folds, smo_tol, augmentation (hard|soft), hard_gate,
//   deterministic, split.train, split.validation, split.test,
//   cnn.filters (comma list), cnn.input_rows, cnn.input_cols,
//   cnn.max_epochs, cnn.patience, cnn.batch_size, cnn.learning_rate,
//   trees.count, trees.min_leaf, trees.bootstrap,
//   stage1.c, stage1.gamma, stage2.c, stage2.scale, stage3.c, stage3.scale
// Grid keys take comma lists; a stage grid is the product of its two lists
// and both must be given together. Errors: BadValue for unknown keys and
// unparsable values.
void apply_key_values(RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& kv);
RunConfig load_run_config(const std::filesystem::path& path);

// Every recognized key with its effective value, one per line, sorted.
std::string canonical_config(const RunConfig& cfg);
std::string config_digest(const RunConfig& cfg);

// Value of VOICETRIAGE_SEED, or `fallback` when unset. Errors: BadValue.
std::uint64_t default_seed(std::uint64_t fallback = 0);

}  // namespace vt
