#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vfl/runner.h"

namespace vfl {

// Flat records file row: one per (record, attack).
struct RecordRow {
  int setting = 0;
  std::string algorithm;
  std::string dataset;
  std::string protection;
  double strength = 0.0;
  std::uint64_t seed = 0;
  std::size_t aux_size = 0;
  std::string attack;
  std::optional<double> eps_p;
  std::optional<double> eps_u;
  std::optional<double> omega_g;
  std::optional<int> pu_score;
};

inline constexpr const char* kRecordColumns[] = {"setting", "algorithm", "dataset", "protection",
                                                 "strength", "seed",     "aux_size", "attack",
                                                 "eps_p",   "eps_u",     "omega_g",  "pu_score"};

std::vector<RecordRow> flatten(const std::vector<TradeoffRecord>& records);

std::string write_records_csv(const std::vector<RecordRow>& rows);
std::string write_records_json(const std::vector<RecordRow>& rows);
// ParseError names the offending line (CSV) or row index (JSON).
std::vector<RecordRow> parse_records_csv(const std::string& text);
std::vector<RecordRow> parse_records_json(const std::string& text);

// Shortest text that reads back to the same double.
std::string format_number(double v);

// Optimal score of one protection within a (setting, algorithm, dataset,
// aux size) group, computed from seed means.
struct ScoreLine {
  int setting = 0;
  std::string algorithm;
  std::string dataset;
  std::size_t aux_size = 0;
  std::string protection;
  double best_strength = 0.0;
  double eps_u = 0.0;
  std::vector<std::pair<std::string, double>> eps_p;  // per attack at best strength
  std::optional<int> score;                           // absent for MI
};

std::vector<ScoreLine> compute_scores(const std::vector<RecordRow>& rows);
std::string format_score_table(const std::vector<ScoreLine>& lines);

// Per-record PU recomputed from the stored eps values, keyed by row order of
// the first attack row of each record.
std::vector<std::optional<int>> recompute_record_scores(const std::vector<RecordRow>& rows);

struct CurveFile {
  std::string name;
  std::string content;
};

// One CSV per (setting, algorithm, dataset[, aux size]) with columns
// protection,strength,eps_u,eps_p_max; points are seed means ordered by
// strength within each protection.
std::vector<CurveFile> build_curves(const std::vector<RecordRow>& rows);

}  // namespace vfl
