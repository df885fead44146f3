#include "vfl/runner.h"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "vfl/error.h"
#include "vfl/metrics.h"
#include "vfl/scoring.h"

namespace vfl {

const char* to_string(TargetData t) { return t == TargetData::kLabels ? "y^A" : "x^B"; }

const char* to_string(Vulnerability v) {
  switch (v) {
    case Vulnerability::kCutGradient:
      return "d^B";
    case Vulnerability::kParamGradient:
      return "grad theta^B";
    case Vulnerability::kBottomModel:
      return "f^B(theta^B)";
    case Vulnerability::kInferenceOutput:
      return "u^B + f^A, h^A";
  }
  return "?";
}

const char* to_string(ThreatModel t) { return t == ThreatModel::kT1 ? "T1" : "T2"; }

const std::vector<SettingInfo>& settings_registry() {
  using A = AttackKind;
  using P = ProtectionKind;
  static const std::vector<P> vlr_prot{P::kDpLaplace, P::kGc, P::kDsgd, P::kMaxNorm, P::kIso};
  static const std::vector<P> vnn_prot{P::kDpLaplace, P::kGc,  P::kDsgd,
                                       P::kMaxNorm,   P::kIso, P::kMarvell};
  static const std::vector<AlgorithmKind> vnn{AlgorithmKind::kVhnn, AlgorithmKind::kVsnn};
  static const std::vector<SettingInfo> reg{
      {1, {AlgorithmKind::kVlr}, TargetData::kLabels, Vulnerability::kCutGradient, {A::kNs, A::kDs, A::kDl}, vlr_prot, ThreatModel::kT1},
      {2, {AlgorithmKind::kVlr}, TargetData::kLabels, Vulnerability::kParamGradient, {A::kRr, A::kGi}, vlr_prot, ThreatModel::kT1},
      {3, {AlgorithmKind::kVlr}, TargetData::kLabels, Vulnerability::kBottomModel, {A::kMc}, vlr_prot, ThreatModel::kT1},
      {4, vnn, TargetData::kLabels, Vulnerability::kCutGradient, {A::kNs, A::kDs}, vnn_prot, ThreatModel::kT1},
      {5, vnn, TargetData::kLabels, Vulnerability::kBottomModel, {A::kMc}, vnn_prot, ThreatModel::kT1},
      {6, vnn, TargetData::kFeaturesB, Vulnerability::kInferenceOutput, {A::kMi}, {P::kMixup, P::kPrecode}, ThreatModel::kT2},
  };
  return reg;
}

const SettingInfo& setting_info(int id) {
  for (const auto& s : settings_registry())
    if (s.id == id) return s;
  throw ConfigError("unknown evaluation setting " + std::to_string(id) + " (expected 1-6)");
}

std::string attack_label(AttackKind kind, ShadowKind shadow) {
  if (kind == AttackKind::kMi) return std::string("MI:") + to_string(shadow);
  return to_string(kind);
}

ThreatModel EvaluationTask::threat_model() const { return threat.value_or(setting_info(setting).threat); }

std::vector<double> EvaluationTask::strengths(const ProtectionSweep& sweep) const {
  if (sweep.kind == ProtectionKind::kNone) return {0.0};
  return sweep.strengths.empty() ? default_strength_grid(sweep.kind) : sweep.strengths;
}

void EvaluationTask::validate() const {
  const std::string where = "task '" + name + "': ";
  const SettingInfo& s = setting_info(setting);
  if (std::find(s.algorithms.begin(), s.algorithms.end(), algorithm) == s.algorithms.end())
    throw ConfigError(where + "algorithm " + to_string(algorithm) + " is not part of setting " +
                      std::to_string(setting));
  const ThreatModel tm = threat_model();
  if (tm != s.threat)
    throw ConfigError(where + "setting " + std::to_string(setting) + " uses threat model " +
                      to_string(s.threat) + ", not " + to_string(tm));
  if (attacks.empty()) throw ConfigError(where + "attacks must not be empty");
  for (AttackKind a : attacks) {
    if (tm == ThreatModel::kT2 && is_label_attack(a))
      throw ConfigError(where + "label attack " + to_string(a) + " needs threat model T1 (attacker B)");
    if (tm == ThreatModel::kT1 && !is_label_attack(a))
      throw ConfigError(where + "attack " + to_string(a) + " needs threat model T2 (attacker A)");
    if (std::find(s.attacks.begin(), s.attacks.end(), a) == s.attacks.end())
      throw ConfigError(where + "attack " + to_string(a) + " is not part of setting " + std::to_string(setting));
  }
  if (protections.empty()) throw ConfigError(where + "protections must not be empty");
  dataset.validate();
  const bool binary = dataset.kind == DatasetKind::kBinaryBalanced ||
                      dataset.kind == DatasetKind::kBinaryImbalanced;
  const bool multiclass_known = dataset.kind == DatasetKind::kMulticlass ||
                                dataset.kind == DatasetKind::kImagePattern;
  for (const auto& p : protections) {
    if (p.kind != ProtectionKind::kNone &&
        std::find(s.protections.begin(), s.protections.end(), p.kind) == s.protections.end())
      throw ConfigError(where + "protection " + to_string(p.kind) + " is not part of setting " +
                        std::to_string(setting));
    if (p.kind == ProtectionKind::kMarvell && multiclass_known && dataset.num_classes != 2)
      throw ConfigError(where + "protection marvell requires a binary classification dataset (dataset has " +
                        std::to_string(dataset.num_classes) + " classes)");
    for (double v : strengths(p)) {
      ProtectionBinding b{p.kind, v};
      b.validate();
    }
  }
  for (AttackKind a : attacks)
    if ((a == AttackKind::kNs || a == AttackKind::kDs) && !binary && dataset.kind != DatasetKind::kCsv)
      throw ConfigError(where + "attack " + to_string(a) + " requires a binary dataset");
  if (setting == 6 && dataset.kind != DatasetKind::kImagePattern)
    throw ConfigError(where + "setting 6 (MI) requires the synthetic-image-pattern dataset");
  if (algorithm == AlgorithmKind::kVsnn && dataset.kind != DatasetKind::kCsv &&
      dataset.kind != DatasetKind::kImagePattern && dataset.dims_a != 0)
    throw ConfigError(where + "VSNN requires dataset.dims_a = 0");
  if (seeds.empty()) throw ConfigError(where + "seeds must not be empty");
  if ((setting == 3 || setting == 5 || setting == 6) && aux_sizes.empty())
    throw ConfigError(where + "aux_sizes must not be empty");
  if (setting == 6 && shadows.empty()) throw ConfigError(where + "shadows must not be empty");
  if (train.epochs == 0) throw ConfigError(where + "train.epochs must be >= 1");
  if (!(train.learning_rate >= 0)) throw ConfigError(where + "train.learning_rate must be >= 0");
}

namespace {

struct RunKey {
  std::size_t task;
  std::size_t protection;
  std::size_t strength;
  std::size_t seed;
};

DatasetPair task_data(const EvaluationTask& t, std::uint64_t seed) {
  DatasetSpec spec = t.dataset;
  spec.seed = mix_keys(t.dataset.seed, {seed});
  if (t.algorithm == AlgorithmKind::kVsnn && spec.kind == DatasetKind::kImagePattern) {
    // The whole image stays with party B; party A holds labels only.
    DatasetPair d = make_dataset(spec);
    for (auto* part : {&d.train, &d.test}) {
      Tensor2 full = concat_cols(part->features_a, part->features_b);
      part->image_rows_b += part->features_a.cols() / std::max<std::size_t>(1, part->image_cols_b);
      part->features_b = std::move(full);
      part->features_a = Tensor2(part->size(), 0);
    }
    return d;
  }
  return make_dataset(spec);
}

TrainConfig task_train_config(const EvaluationTask& t, std::uint64_t seed, ProtectionBinding binding) {
  TrainConfig cfg = t.train;
  cfg.seed = mix_keys(t.train.seed, {seed});
  cfg.protection = binding;
  cfg.record = RecordSwitches{};
  switch (setting_info(t.setting).vulnerability) {
    case Vulnerability::kCutGradient:
      cfg.record.cut_gradients = true;
      break;
    case Vulnerability::kParamGradient:
      cfg.record.cut_gradients = true;  // u^B is B's own output
      cfg.record.param_gradients = true;
      break;
    default:
      cfg.record.cut_gradients = false;
      break;
  }
  return cfg;
}

// Leakage of one epoch's label scores against the true labels.
double label_leak(AttackKind kind, const LabelScoreSet& s, const VerticalDataset& d) {
  std::vector<int> y(s.indices.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = d.labels[s.indices[i]];
  if (d.num_classes == 2 && !s.scores.empty()) return privacy_leakage(kind, auc(s.scores, y));
  const double prior = 100.0 / static_cast<double>(d.num_classes);
  return privacy_leakage(kind, accuracy(s.predictions, y), prior);
}

std::vector<std::optional<std::size_t>> first_positives(std::span<const CutLayerBatch> batches,
                                                        const VerticalDataset& d) {
  std::vector<std::optional<std::size_t>> out;
  for (const auto& b : batches) {
    std::optional<std::size_t> pos;
    for (std::size_t r = 0; r < b.indices.size(); ++r)
      if (d.labels[b.indices[r]] == 1) {
        pos = r;
        break;
      }
    out.push_back(pos);
  }
  return out;
}

TradeoffRecord base_record(const EvaluationTask& t, std::size_t ti, const ProtectionSweep& p, double strength,
                           std::uint64_t seed) {
  TradeoffRecord r;
  r.task_index = ti;
  r.setting = t.setting;
  r.algorithm = to_string(t.algorithm);
  r.dataset = t.dataset_name.empty() ? to_string(t.dataset.kind) : t.dataset_name;
  r.protection = to_string(p.kind);
  r.strength = strength;
  r.seed = seed;
  return r;
}

std::vector<TradeoffRecord> run_protected(const EvaluationTask& t, const RunKey& key, double omega_g) {
  const ProtectionSweep& sweep = t.protections[key.protection];
  const double strength = t.strengths(sweep)[key.strength];
  const std::uint64_t seed = t.seeds[key.seed];
  TradeoffRecord proto = base_record(t, key.task, sweep, strength, seed);
  proto.omega_g = omega_g;

  ProtectionBinding binding{sweep.kind, strength};
  const DatasetPair data = task_data(t, seed);
  const TrainConfig cfg = task_train_config(t, seed, binding);
  const TrainResult run = train_joint(t.algorithm, data.train, cfg);
  proto.eps_u = utility_loss(omega_g, evaluate_utility(run.model, data.test, default_metric(data.test.num_classes)));

  Rng attack_rng(mix_keys(seed, {0xA77, key.task, key.protection, key.strength}));
  std::vector<TradeoffRecord> out;
  const auto& epochs = run.log.epochs;
  const std::size_t C = data.train.num_classes;

  std::vector<AttackKind> epoch_attacks, other;
  for (AttackKind a : t.attacks)
    (a == AttackKind::kMc || a == AttackKind::kMi ? other : epoch_attacks).push_back(a);

  if (!epoch_attacks.empty()) {
    TradeoffRecord r = proto;
    for (AttackKind a : epoch_attacks) {
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& batches : epochs) {
        LabelScoreSet s;
        switch (a) {
          case AttackKind::kNs:
            s = norm_scoring(batches);
            break;
          case AttackKind::kDs:
            s = direction_scoring(batches, first_positives(batches, data.train));
            break;
          case AttackKind::kDl:
            s = direct_label_inference(batches, C, attack_rng);
            break;
          case AttackKind::kRr:
            s = residue_attack(batches, data.train.features_b);
            break;
          case AttackKind::kGi:
            s = gradient_inversion_attack(batches, data.train.features_b, t.gi);
            break;
          default:
            break;
        }
        best = std::max(best, label_leak(a, s, data.train));
      }
      r.eps_p.emplace_back(to_string(a), best);
    }
    double worst = r.eps_p.front().second;
    for (const auto& [k, v] : r.eps_p) worst = std::max(worst, v);
    r.pu = pu_score(worst, r.eps_u);
    out.push_back(std::move(r));
  }

  for (AttackKind a : other) {
    for (std::size_t aux_size : t.aux_sizes) {
      TradeoffRecord r = proto;
      r.aux_size = aux_size;
      const std::uint64_t aux_seed = mix_keys(seed, {0xA0, aux_size});
      const AuxiliarySample aux = draw_auxiliary(data.train, aux_size, aux_seed);
      const VerticalDataset aux_data = data.train.subset(aux.indices);
      if (a == AttackKind::kMc) {
        McOptions mo = t.mc;
        mo.seed = mix_keys(t.mc.seed, {seed, aux_size});
        const Mlp& bottom = run.log.checkpoints.back().bottom_b;
        const McResult mc = model_completion(bottom, t.algorithm == AlgorithmKind::kVlr, C, aux_data.features_b,
                                             aux_data.labels, data.test.features_b, data.test.labels, mo);
        r.eps_p.emplace_back("MC", privacy_leakage(AttackKind::kMc, mc.omega_mc, mc.omega_loc));
        r.pu = pu_score(r.eps_p.back().second, r.eps_u);
      } else {
        std::vector<std::size_t> rows(std::min(t.mi_samples, data.test.size()));
        std::iota(rows.begin(), rows.end(), 0);
        const VerticalDataset target = data.test.subset(rows);
        const Tensor2 u_inf = passive_forward(run.model, target.features_b);
        for (ShadowKind sk : t.shadows) {
          MiOptions mo = t.mi;
          mo.shadow = sk;
          mo.seed = mix_keys(t.mi.seed, {seed, aux_size});
          const MiResult mi = model_inversion(run.model, aux_data.features_a, aux_data.features_b,
                                              aux_data.labels, u_inf, mo);
          const double s = mean_image_ssim(mi.reconstruction.x, target.features_b, target.image_rows_b,
                                           target.image_cols_b);
          r.eps_p.emplace_back(attack_label(AttackKind::kMi, sk), privacy_leakage(AttackKind::kMi, s));
        }
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<RunKey> expand(const std::vector<EvaluationTask>& tasks) {
  std::vector<RunKey> keys;
  for (std::size_t t = 0; t < tasks.size(); ++t)
    for (std::size_t p = 0; p < tasks[t].protections.size(); ++p)
      for (std::size_t s = 0; s < tasks[t].strengths(tasks[t].protections[p]).size(); ++s)
        for (std::size_t k = 0; k < tasks[t].seeds.size(); ++k) keys.push_back({t, p, s, k});
  return keys;
}

}  // namespace

std::size_t count_protected_runs(const std::vector<EvaluationTask>& tasks) { return expand(tasks).size(); }

std::vector<TradeoffRecord> run_tasks(const std::vector<EvaluationTask>& tasks, int parallelism) {
  for (const auto& t : tasks) t.validate();
  const int threads = std::max(1, parallelism);

  // Unprotected utility per (task, seed).
  std::vector<std::pair<std::size_t, std::size_t>> base_keys;
  for (std::size_t t = 0; t < tasks.size(); ++t)
    for (std::size_t k = 0; k < tasks[t].seeds.size(); ++k) base_keys.emplace_back(t, k);
  std::vector<double> omega(base_keys.size(), 0.0);
  std::vector<std::string> base_error(base_keys.size());
  const auto nb = static_cast<std::ptrdiff_t>(base_keys.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < nb; ++i) {
    const auto [t, k] = base_keys[static_cast<std::size_t>(i)];
    const EvaluationTask& task = tasks[t];
    try {
      const DatasetPair data = task_data(task, task.seeds[k]);
      const TrainConfig cfg = task_train_config(task, task.seeds[k], ProtectionBinding{});
      TrainConfig quiet = cfg;
      quiet.record = RecordSwitches{false, false, false, false, 0};
      const TrainResult run = train_joint(task.algorithm, data.train, quiet);
      omega[static_cast<std::size_t>(i)] =
          evaluate_utility(run.model, data.test, default_metric(data.test.num_classes));
    } catch (const std::exception& e) {
      base_error[static_cast<std::size_t>(i)] = e.what();
    }
  }
  auto base_index = [&](std::size_t t, std::size_t k) {
    std::size_t idx = 0;
    for (std::size_t j = 0; j < t; ++j) idx += tasks[j].seeds.size();
    return idx + k;
  };

  const auto keys = expand(tasks);
  std::vector<std::vector<TradeoffRecord>> slots(keys.size());
  const auto nk = static_cast<std::ptrdiff_t>(keys.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < nk; ++i) {
    const RunKey& key = keys[static_cast<std::size_t>(i)];
    const EvaluationTask& task = tasks[key.task];
    const std::size_t bi = base_index(key.task, key.seed);
    auto& slot = slots[static_cast<std::size_t>(i)];
    try {
      if (!base_error[bi].empty()) throw TrainingError("unprotected baseline failed: " + base_error[bi]);
      slot = run_protected(task, key, omega[bi]);
    } catch (const std::exception& e) {
      const ProtectionSweep& sweep = task.protections[key.protection];
      TradeoffRecord r = base_record(task, key.task, sweep, task.strengths(sweep)[key.strength],
                                     task.seeds[key.seed]);
      r.omega_g = omega[bi];
      r.failed = true;
      r.error = e.what();
      r.eps_u = std::numeric_limits<double>::quiet_NaN();
      for (AttackKind a : task.attacks) {
        if (a == AttackKind::kMi)
          for (ShadowKind sk : task.shadows) r.eps_p.emplace_back(attack_label(a, sk), std::nan(""));
        else
          r.eps_p.emplace_back(to_string(a), std::nan(""));
      }
      slot = {r};
    }
  }

  std::vector<TradeoffRecord> out;
  for (auto& s : slots)
    for (auto& r : s) out.push_back(std::move(r));
  return out;
}

}  // namespace vfl
