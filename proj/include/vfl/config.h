#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vfl/runner.h"

namespace vfl {

enum class RecordFormat { kCsv, kJson };

struct RunConfig {
  int version = 1;
  std::uint64_t seed = 0;
  int parallelism = 1;
  std::string output_dir = "out";
  RecordFormat format = RecordFormat::kCsv;
  std::vector<EvaluationTask> tasks;
};

inline constexpr int kConfigVersion = 1;

// Parses and validates a JSON run configuration. Errors are ConfigError
// with the JSON path of the offending field, e.g. "tasks[0].train.epochs".
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Re-derives per-task dataset and training seeds from a new global seed.
void apply_global_seed(RunConfig& config, std::uint64_t seed);

}  // namespace vfl
