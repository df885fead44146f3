#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "vfl/commands.h"
#include "vfl/config.h"
#include "vfl/error.h"
#include "vfl/report.h"

using namespace vfl;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("vfl_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

const char* kMinimalConfig = R"({
  "version": 1,
  "seed": 3,
  "tasks": [{
    "name": "tiny",
    "setting": 1,
    "algorithm": "VLR",
    "dataset": {"kind": "synthetic-binary-imbalanced", "name": "tiny", "n_train": 200, "n_test": 100,
                "dims_a": 4, "dims_b": 4},
    "attacks": ["NS", "DS", "DL"],
    "protections": [{"kind": "dp_laplace", "strengths": [0.1, 0.01]}, "max_norm"],
    "seeds": [0, 1],
    "train": {"epochs": 2, "batch_size": 40, "vlr_softmax": true}
  }]
})";

std::string config_error(const std::string& text) {
  try {
    parse_run_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

// Score lines of cmd_score output, in order, one per protection.
std::vector<std::string> score_column(const std::string& table) {
  std::istringstream in(table);
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::string> out;
  while (std::getline(in, line)) {
    const auto pos = line.find_last_of(' ');
    out.push_back(line.substr(pos + 1));
  }
  return out;
}

std::string typed_rows(const std::string& dataset, int setting, const std::string& algorithm,
                       const std::vector<std::string>& attacks,
                       const std::vector<std::tuple<std::string, double, std::vector<double>>>& rows) {
  std::string out;
  for (std::size_t i = 0; i < std::size(kRecordColumns); ++i) out += (i ? "," : "") + std::string(kRecordColumns[i]);
  out += "\n";
  for (const auto& [prot, eps_u, eps_p] : rows)
    for (std::size_t a = 0; a < attacks.size(); ++a)
      out += std::to_string(setting) + "," + algorithm + "," + dataset + "," + prot + ",0,0,NA," + attacks[a] + "," +
             format_number(eps_p[a]) + "," + format_number(eps_u) + ",NA,NA\n";
  return out;
}

}  // namespace

TEST(Config, ParsesMinimalConfig) {
  const auto cfg = parse_run_config(kMinimalConfig);
  ASSERT_EQ(cfg.tasks.size(), 1u);
  EXPECT_EQ(cfg.tasks[0].protections.size(), 2u);
  EXPECT_EQ(cfg.tasks[0].protections[0].strengths, (std::vector<double>{0.1, 0.01}));
  EXPECT_EQ(cfg.tasks[0].train.epochs, 2u);
  EXPECT_EQ(cfg.format, RecordFormat::kCsv);
}

TEST(Config, DiagnosticsCarryFieldPaths) {
  std::string bad = kMinimalConfig;
  bad.replace(bad.find("\"epochs\": 2"), 11, "\"epochs\": 0");
  EXPECT_NE(config_error(bad).find("tasks[0].train.epochs"), std::string::npos) << config_error(bad);

  bad = kMinimalConfig;
  bad.replace(bad.find("\"DL\""), 4, "\"XX\"");
  EXPECT_NE(config_error(bad).find("tasks[0].attacks[2]"), std::string::npos) << config_error(bad);

  bad = kMinimalConfig;
  bad.replace(bad.find("\"seeds\""), 7, "\"seedz\"");
  EXPECT_NE(config_error(bad).find("seedz"), std::string::npos) << config_error(bad);

  bad = kMinimalConfig;
  bad.replace(bad.find("\"version\": 1"), 12, "\"version\": 2");
  EXPECT_NE(config_error(bad).find("version"), std::string::npos);

  EXPECT_NE(config_error("{not json").find("JSON"), std::string::npos);
}

TEST(Config, MarvellOnTenClassesNamesConstraint) {
  const std::string text = R"({"version": 1, "tasks": [{
    "setting": 5, "algorithm": "VHNN",
    "dataset": {"kind": "synthetic-multiclass", "num_classes": 10},
    "attacks": ["MC"], "protections": ["marvell"]}]})";
  EXPECT_NE(config_error(text).find("binary classification"), std::string::npos) << config_error(text);
}

TEST(Config, ImageTaskKeys) {
  const std::string text = R"({"version": 1, "tasks": [{
    "setting": 6, "algorithm": "VHNN", "dataset": {"kind": "synthetic-image-pattern"},
    "attacks": ["MI"], "protections": ["precode"], "shadows": ["same", "fc"],
    "train": {"local_patch": 5}}]})";
  const auto cfg = parse_run_config(text);
  EXPECT_EQ(cfg.tasks[0].train.local_patch, 5u);
  EXPECT_EQ(cfg.tasks[0].shadows, (std::vector<ShadowKind>{ShadowKind::kSame, ShadowKind::kFc}));
  EXPECT_EQ(attack_label(AttackKind::kMi, ShadowKind::kFc), "MI:fc");
}

TEST(Config, GlobalSeedReDerivesTaskSeeds) {
  auto a = parse_run_config(kMinimalConfig);
  auto b = a;
  apply_global_seed(b, 99);
  EXPECT_NE(a.tasks[0].dataset.seed, b.tasks[0].dataset.seed);
  apply_global_seed(b, 3);
  EXPECT_EQ(a.tasks[0].dataset.seed, b.tasks[0].dataset.seed);
  EXPECT_EQ(a.tasks[0].train.seed, b.tasks[0].train.seed);
}

TEST(CmdRun, WritesOutputsAndIsByteIdentical) {
  const auto dir = scratch_dir("run");
  spit(dir / "config.json", kMinimalConfig);
  std::ostringstream out, err;
  RunOptions o;
  o.config_path = (dir / "config.json").string();
  o.out_dir = (dir / "a").string();
  ASSERT_EQ(cmd_run(o, out, err), kExitOk) << err.str();
  EXPECT_TRUE(fs::exists(dir / "a" / "records.csv"));
  EXPECT_TRUE(fs::exists(dir / "a" / "scores.txt"));
  std::size_t curves = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) curves += e.path().filename().string().rfind("curve_", 0) == 0;
  EXPECT_EQ(curves, 1u);
  const std::string first = slurp(dir / "a" / "records.csv");

  ASSERT_EQ(cmd_run(o, out, err), kExitOk);
  EXPECT_EQ(slurp(dir / "a" / "records.csv"), first);
  o.out_dir = (dir / "b").string();
  o.parallel = 8;
  ASSERT_EQ(cmd_run(o, out, err), kExitOk);
  EXPECT_EQ(slurp(dir / "b" / "records.csv"), first);

  // Every record row belongs to exactly one curve point series and the
  // stored per-record scores match a recomputation from stored eps values.
  const auto rows = parse_records_csv(first);
  EXPECT_EQ(rows.size(), 3u * 2 * 3);
  const auto recomputed = recompute_record_scores(rows);
  std::vector<std::optional<int>> stored;
  for (std::size_t i = 0; i < rows.size(); i += 3) stored.push_back(rows[i].pu_score);
  EXPECT_EQ(recomputed, stored);
  const std::string curve = slurp(dir / "a" / "curve_s1_VLR_tiny.csv");
  EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 1 + 3);
  EXPECT_LT(curve.find("dp_laplace,0.01"), curve.find("dp_laplace,0.1"));
}

TEST(CmdRun, JsonFormatRoundTrips) {
  const auto dir = scratch_dir("json");
  spit(dir / "config.json", kMinimalConfig);
  std::ostringstream out, err;
  RunOptions o;
  o.config_path = (dir / "config.json").string();
  o.out_dir = (dir / "j").string();
  o.format = RecordFormat::kJson;
  ASSERT_EQ(cmd_run(o, out, err), kExitOk) << err.str();
  ASSERT_FALSE(fs::exists(dir / "j" / "records.csv"));
  const auto rows = parse_records_json(slurp(dir / "j" / "records.json"));
  o.format = RecordFormat::kCsv;
  o.out_dir = (dir / "c").string();
  ASSERT_EQ(cmd_run(o, out, err), kExitOk);
  const auto csv_rows = parse_records_csv(slurp(dir / "c" / "records.csv"));
  ASSERT_EQ(rows.size(), csv_rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].eps_p, csv_rows[i].eps_p);
    EXPECT_EQ(rows[i].eps_u, csv_rows[i].eps_u);
    EXPECT_EQ(rows[i].pu_score, csv_rows[i].pu_score);
  }
  EXPECT_EQ(write_records_json(rows), slurp(dir / "j" / "records.json"));
}

TEST(CmdRun, InvalidConfigExitsOne) {
  const auto dir = scratch_dir("invalid");
  spit(dir / "config.json", R"({"version": 1, "tasks": [{"setting": 9}]})");
  std::ostringstream out, err;
  RunOptions o;
  o.config_path = (dir / "config.json").string();
  EXPECT_EQ(cmd_run(o, out, err), kExitValidation);
  EXPECT_NE(err.str().find("tasks[0].setting"), std::string::npos) << err.str();
  o.config_path = (dir / "missing.json").string();
  EXPECT_EQ(cmd_run(o, out, err), kExitValidation);
}

TEST(CmdScore, CreditRowsOfLinearModelTable) {
  const auto dir = scratch_dir("score_credit");
  spit(dir / "r.csv", typed_rows("Credit", 1, "VLR", {"NS", "DS", "DL"},
                                 {{"none", 0, {46.9, 50.0, 50.0}},
                                  {"gc", 11.2, {10.1, 3.3, 11.6}},
                                  {"dsgd", 7.5, {25.9, 24.6, 33.1}},
                                  {"max_norm", 0.1, {6.2, 18.1, 19.8}},
                                  {"dp_laplace", 0.9, {1.1, 2.6, 3.7}},
                                  {"iso", 0.8, {0.8, 2.2, 2.6}}}));
  std::ostringstream out, err;
  ASSERT_EQ(cmd_score((dir / "r.csv").string(), std::nullopt, out, err), kExitOk) << err.str();
  EXPECT_EQ(score_column(out.str()), (std::vector<std::string>{"0", "0", "0", "2", "4", "4"}));
}

TEST(CmdScore, BalancedNuswideRowsOfHiddenModelTable) {
  const auto dir = scratch_dir("score_nus");
  spit(dir / "r.csv", typed_rows("NUSWIDE2-bal", 4, "VHNN", {"NS", "DS"},
                                 {{"gc", 0.0, {6.3, 5.8}},
                                  {"dsgd", 0.3, {0.7, 0.3}},
                                  {"max_norm", 0.2, {0.7, 1.4}},
                                  {"dp_laplace", 0.2, {0.5, 1.1}},
                                  {"iso", 0.3, {0.7, 1.0}},
                                  {"marvell", 0.1, {0.4, 2.0}}}));
  std::ostringstream out, err;
  ASSERT_EQ(cmd_score((dir / "r.csv").string(), std::nullopt, out, err), kExitOk) << err.str();
  EXPECT_EQ(score_column(out.str()), (std::vector<std::string>{"4", "5", "5", "5", "5", "5"}));
}

TEST(CmdScore, EmptyRecordsGiveEmptyTable) {
  const auto dir = scratch_dir("score_empty");
  spit(dir / "r.csv", typed_rows("x", 1, "VLR", {"NS"}, {}));
  std::ostringstream out, err;
  EXPECT_EQ(cmd_score((dir / "r.csv").string(), std::nullopt, out, err), kExitOk);
  EXPECT_TRUE(score_column(out.str()).empty());
}

TEST(CmdScore, MalformedRowNamesLine) {
  const auto dir = scratch_dir("score_bad");
  std::string text = typed_rows("x", 1, "VLR", {"NS"}, {{"iso", 0.1, {2.0}}, {"gc", 0.2, {3.0}}});
  text.replace(text.find("3,0.2"), 1, "abc");
  spit(dir / "r.csv", text);
  std::ostringstream out, err;
  EXPECT_EQ(cmd_score((dir / "r.csv").string(), std::nullopt, out, err), kExitValidation);
  EXPECT_NE(err.str().find("line 3"), std::string::npos) << err.str();
  EXPECT_THROW(parse_records_csv("setting,algorithm\n"), ParseError);
}

TEST(CmdList, RegistryContentsAndStableOrder) {
  std::ostringstream a, b;
  cmd_list(a);
  cmd_list(b);
  EXPECT_EQ(a.str(), b.str());
  const std::string s = a.str();
  const auto section = [&](const std::string& from, const std::string& to) {
    const auto p = s.find(from), q = to.empty() ? s.size() : s.find(to);
    const std::string body = s.substr(p + from.size(), q - p - from.size());
    return std::count(body.begin(), body.end(), '\n') - 1;
  };
  EXPECT_EQ(section("settings:", "protections:"), 6);
  EXPECT_EQ(section("protections:", "attacks:"), 8);
  EXPECT_EQ(section("attacks:", ""), 7);
}

TEST(Report, FormatNumberRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 46.9, -2.5e-7, 12345.678}) {
    const std::string s = format_number(v);
    EXPECT_EQ(std::stod(s), v) << s;
  }
  EXPECT_EQ(format_number(0.0), "0");
}
