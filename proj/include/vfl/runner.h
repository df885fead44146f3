#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vfl/attacks.h"
#include "vfl/datasets.h"
#include "vfl/engine.h"
#include "vfl/protections.h"

namespace vfl {

enum class TargetData { kLabels, kFeaturesB };
enum class Vulnerability { kCutGradient, kParamGradient, kBottomModel, kInferenceOutput };
enum class ThreatModel { kT1, kT2 };

const char* to_string(TargetData t);
const char* to_string(Vulnerability v);
const char* to_string(ThreatModel t);

// One row of the built-in evaluation-setting registry.
struct SettingInfo {
  int id = 0;
  std::vector<AlgorithmKind> algorithms;
  TargetData target = TargetData::kLabels;
  Vulnerability vulnerability = Vulnerability::kCutGradient;
  std::vector<AttackKind> attacks;
  std::vector<ProtectionKind> protections;
  ThreatModel threat = ThreatModel::kT1;
};

const std::vector<SettingInfo>& settings_registry();
const SettingInfo& setting_info(int id);

struct ProtectionSweep {
  ProtectionKind kind = ProtectionKind::kNone;
  std::vector<double> strengths;  // empty: default grid
};

struct EvaluationTask {
  std::string name;
  int setting = 1;
  AlgorithmKind algorithm = AlgorithmKind::kVlr;
  std::string dataset_name;
  DatasetSpec dataset;
  std::vector<AttackKind> attacks;
  std::vector<ProtectionSweep> protections;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::optional<ThreatModel> threat;  // derived from the setting when absent
  TrainConfig train;

  std::vector<std::size_t> aux_sizes{40};       // MC and MI
  McOptions mc;
  GiOptions gi;
  MiOptions mi;
  std::vector<ShadowKind> shadows{ShadowKind::kSame};  // MI variants
  std::size_t mi_samples = 64;  // inference rows the MI attack reconstructs

  // Throws ConfigError naming the offending field.
  void validate() const;
  ThreatModel threat_model() const;
  std::vector<double> strengths(const ProtectionSweep& sweep) const;
};

// One (task, protection, strength, seed[, aux size]) evaluation.
struct TradeoffRecord {
  std::size_t task_index = 0;
  int setting = 0;
  std::string algorithm;
  std::string dataset;
  std::string protection;
  double strength = 0.0;
  std::uint64_t seed = 0;
  std::size_t aux_size = 0;  // 0 when not applicable
  std::vector<std::pair<std::string, double>> eps_p;  // attack label -> leakage
  double eps_u = 0.0;
  double omega_g = 0.0;
  std::optional<int> pu;  // label attacks only
  bool failed = false;
  std::string error;
};

// Attack labels used in records: NS, DS, ..., and "MI:<shadow>" for MI.
std::string attack_label(AttackKind kind, ShadowKind shadow = ShadowKind::kSame);

// Runs every (task, protection, strength, seed) with `parallelism` worker
// threads. Output order and values do not depend on `parallelism`.
std::vector<TradeoffRecord> run_tasks(const std::vector<EvaluationTask>& tasks, int parallelism);

// Number of protected runs (excluding unprotected baselines) the tasks expand to.
std::size_t count_protected_runs(const std::vector<EvaluationTask>& tasks);

}  // namespace vfl
