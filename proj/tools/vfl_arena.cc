#include <iostream>

#include <CLI11.hpp>

#include "vfl/commands.h"
#include "vfl/error.h"

int main(int argc, char** argv) {
  CLI::App app{"Privacy/utility arena for two-party vertical federated learning"};
  app.require_subcommand(1);

  vfl::RunOptions run;
  std::string out_dir, format;
  std::uint64_t seed = 0;
  int parallel = 1;
  auto* run_cmd = app.add_subcommand("run", "train, attack and score every task in a config");
  run_cmd->add_option("--config", run.config_path, "JSON run configuration")->required();
  auto* out_opt = run_cmd->add_option("--out", out_dir, "output directory (overrides config)");
  auto* seed_opt = run_cmd->add_option("--seed", seed, "global seed (overrides config)");
  auto* par_opt = run_cmd->add_option("--parallel", parallel, "worker threads")->check(CLI::PositiveNumber);
  auto* fmt_opt = run_cmd->add_option("--format", format, "records format")->check(CLI::IsMember({"csv", "json"}));

  std::string records;
  std::string score_format;
  auto* score_cmd = app.add_subcommand("score", "recompute scores from a records file");
  score_cmd->add_option("records", records, "records file")->required();
  auto* score_fmt = score_cmd->add_option("--format", score_format, "records format")
                        ->check(CLI::IsMember({"csv", "json"}));

  auto* list_cmd = app.add_subcommand("list", "print settings, protections, attacks and grids");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : vfl::kExitValidation;
  }

  if (*run_cmd) {
    if (*out_opt) run.out_dir = out_dir;
    if (*seed_opt) run.seed = seed;
    if (*par_opt) run.parallel = parallel;
    if (*fmt_opt) run.format = vfl::record_format_from_string(format);
    return vfl::cmd_run(run, std::cout, std::cerr);
  }
  if (*score_cmd) {
    std::optional<vfl::RecordFormat> f;
    if (*score_fmt) f = vfl::record_format_from_string(score_format);
    return vfl::cmd_score(records, f, std::cout, std::cerr);
  }
  if (*list_cmd) return vfl::cmd_list(std::cout);
  return vfl::kExitValidation;
}
