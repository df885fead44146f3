#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "vfl/config.h"

namespace vfl {

// Exit codes shared by every verb.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

struct RunOptions {
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> parallel;
  std::optional<RecordFormat> format;
};

// Writes records.{csv,json}, scores.txt and one curve_*.csv per series into
// the output directory, replacing earlier outputs there.
int cmd_run(const RunOptions& options, std::ostream& out, std::ostream& err);

// Format defaults to the file extension (.json or csv otherwise).
int cmd_score(const std::string& records_path, std::optional<RecordFormat> format, std::ostream& out,
              std::ostream& err);

int cmd_list(std::ostream& out);

RecordFormat record_format_from_string(const std::string& name);

}  // namespace vfl
