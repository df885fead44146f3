#include "vfl/commands.h"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "vfl/error.h"
#include "vfl/report.h"

namespace vfl {
namespace {

namespace fs = std::filesystem;

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << content;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open " + path);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : ", ") + format_number(x);
  return out;
}

}  // namespace

RecordFormat record_format_from_string(const std::string& name) {
  if (name == "csv") return RecordFormat::kCsv;
  if (name == "json") return RecordFormat::kJson;
  throw ConfigError("format must be csv or json, got '" + name + "'");
}

int cmd_run(const RunOptions& options, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  try {
    cfg = load_run_config(options.config_path);
    if (options.seed) apply_global_seed(cfg, *options.seed);
    if (options.parallel) {
      if (*options.parallel < 1) throw ConfigError("--parallel must be at least 1");
      cfg.parallelism = *options.parallel;
    }
    if (options.out_dir) cfg.output_dir = *options.out_dir;
    if (options.format) cfg.format = *options.format;
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ParseError& e) {
    err << "invalid config: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    err << "running " << cfg.tasks.size() << " task(s), " << count_protected_runs(cfg.tasks)
        << " protected run(s) on " << cfg.parallelism << " thread(s)\n";
    const auto records = run_tasks(cfg.tasks, cfg.parallelism);
    const auto rows = flatten(records);

    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (name.rfind("curve_", 0) == 0 && entry.path().extension() == ".csv") fs::remove(entry.path());
    }
    fs::remove(dir / "records.csv");
    fs::remove(dir / "records.json");

    const bool json = cfg.format == RecordFormat::kJson;
    write_file(dir / (json ? "records.json" : "records.csv"), json ? write_records_json(rows) : write_records_csv(rows));
    write_file(dir / "scores.txt", format_score_table(compute_scores(rows)));
    const auto curves = build_curves(rows);
    for (const auto& c : curves) write_file(dir / c.name, c.content);

    std::size_t failed = 0;
    for (const auto& r : records)
      if (r.failed) {
        ++failed;
        err << "run failed: " << r.dataset << " " << r.protection << " strength " << format_number(r.strength)
            << " seed " << r.seed << ": " << r.error << "\n";
      }
    out << "wrote " << rows.size() << " record row(s) and " << curves.size() << " curve file(s) to " << dir.string()
        << "\n";
    return failed ? kExitRuntime : kExitOk;
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "run failed: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_score(const std::string& records_path, std::optional<RecordFormat> format, std::ostream& out,
              std::ostream& err) {
  std::vector<RecordRow> rows;
  try {
    const std::string text = read_file(records_path);
    const bool json = format ? *format == RecordFormat::kJson : fs::path(records_path).extension() == ".json";
    rows = json ? parse_records_json(text) : parse_records_csv(text);
  } catch (const ParseError& e) {
    err << records_path << ": " << e.what() << "\n";
    return kExitValidation;
  }
  try {
    out << format_score_table(compute_scores(rows));
    return kExitOk;
  } catch (const std::exception& e) {
    err << "scoring failed: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_list(std::ostream& out) {
  out << "settings:\n";
  for (const auto& s : settings_registry()) {
    out << "  " << s.id << ": algorithms";
    for (auto a : s.algorithms) out << " " << to_string(a);
    out << "; target " << to_string(s.target) << "; vulnerability " << to_string(s.vulnerability) << "; attacks";
    for (auto a : s.attacks) out << " " << to_string(a);
    out << "; protections";
    for (auto p : s.protections) out << " " << to_string(p);
    out << "; threat " << to_string(s.threat) << "\n";
  }
  out << "protections:\n";
  for (auto p : all_protections())
    out << "  " << to_string(p) << ": grid [" << join_doubles(default_strength_grid(p)) << "]"
        << (strength_increases_protection(p) ? "" : " (smaller is stronger)") << "\n";
  out << "attacks:\n";
  for (auto a : all_attacks()) out << "  " << to_string(a) << (is_label_attack(a) ? ": labels\n" : ": features\n");
  return kExitOk;
}

}  // namespace vfl
