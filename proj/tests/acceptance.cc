// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is
// nonzero when any selected criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>

#include "vfl/attacks.h"
#include "vfl/autodiff.h"
#include "vfl/commands.h"
#include "vfl/datasets.h"
#include "vfl/engine.h"
#include "vfl/marvell.h"
#include "vfl/metrics.h"
#include "vfl/nn.h"
#include "vfl/protections.h"
#include "vfl/rng.h"
#include "vfl/runner.h"
#include "vfl/scoring.h"

#ifndef VFL_SOURCE_DIR
#define VFL_SOURCE_DIR "."
#endif

using namespace vfl;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Tensor2 randn(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Tensor2 t(r, c);
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

// ---- 1: score arithmetic over the reference optimal-score tables ----------

struct Row {
  const char* name;
  double eps_u;
  std::vector<double> eps_p;
  int printed;
};

struct Block {
  const char* table;
  const char* column;
  std::vector<AttackKind> attacks;
  std::vector<Row> rows;
};

std::vector<Block> reference_tables() {
  using A = AttackKind;
  const std::vector<A> nsdsdl{A::kNs, A::kDs, A::kDl}, rrgi{A::kRr, A::kGi}, mc{A::kMc}, nsds{A::kNs, A::kDs};
  return {
      {"NS/DS/DL VLR", "Credit", nsdsdl,
       {{"No Protect", 0, {46.9, 50.0, 50.0}, 0}, {"GC", 11.2, {10.1, 3.3, 11.6}, 0},
        {"D-SGD", 7.5, {25.9, 24.6, 33.1}, 0}, {"MN", 0.1, {6.2, 18.1, 19.8}, 2},
        {"DP-L", 0.9, {1.1, 2.6, 3.7}, 4}, {"ISO", 0.8, {0.8, 2.2, 2.6}, 4}}},
      {"NS/DS/DL VLR", "Vehicle", nsdsdl,
       {{"No Protect", 0, {5.6, 50.0, 50.0}, 0}, {"GC", 2.3, {0.4, 1.3, 4.6}, 2},
        {"D-SGD", 2.8, {0.1, 0.3, 0.2}, 2}, {"MN", 0.3, {0.4, 5.1, 13.9}, 3},
        {"DP-L", 1.0, {0.4, 1.3, 6.1}, 4}, {"ISO", 1.0, {0.6, 0.8, 3.1}, 4}}},
      {"RR/GI VLR", "Credit", rrgi,
       {{"No Protect", 0, {16.0, 18.1}, 0}, {"GC", 3.5, {14.8, 12.7}, 2}, {"D-SGD", 0.6, {15.5, 16.5}, 2},
        {"MN", 0.1, {7.8, 15.8}, 2}, {"DP-L", 0.9, {1.4, 0.8}, 4}, {"ISO", 0.8, {1.4, 1.0}, 4}}},
      {"RR/GI VLR", "Vehicle", rrgi,
       {{"No Protect", 0, {26.4, 36.1}, 0}, {"GC", 2.3, {10.9, 9.2}, 2}, {"D-SGD", 2.8, {0.3, 2.1}, 2},
        {"MN", 0.3, {14.1, 25.9}, 0}, {"DP-L", 1.0, {6.7, 8.3}, 4}, {"ISO", 1.0, {5.0, 8.3}, 4}}},
      {"MC VLR", "Credit", mc,
       {{"No Protect", 0, {21.8}, 0}, {"GC", 3.5, {17.5}, 2}, {"D-SGD", 0.5, {19.9}, 2},
        {"MN", 0.1, {21.7}, 1}, {"DP-L", 1.0, {19.9}, 2}, {"ISO", 0.8, {19.6}, 2}}},
      {"MC VLR", "Vehicle", mc,
       {{"No Protect", 0, {41.7}, 0}, {"GC", 2.3, {0.0}, 2}, {"D-SGD", 0.9, {41.0}, 0},
        {"MN", 0.3, {40.5}, 0}, {"DP-L", 1.0, {39.2}, 0}, {"ISO", 0.8, {1.0}, 4}}},
      {"NS/DS VHNN", "NUSWIDE2-imb", nsds,
       {{"No Protect", 0, {36.9, 50}, 0}, {"GC", 0.2, {33.9, 38.9}, 0}, {"D-SGD", 3.5, {2.3, 0.4}, 2},
        {"MN", 0.7, {3.1, 9.9}, 4}, {"DP-L", 1.4, {1.8, 3.7}, 3}, {"ISO", 0.7, {1.9, 4.6}, 4},
        {"Marvell", 1.0, {0.7, 5.9}, 4}}},
      {"NS/DS VHNN", "Criteo", nsds,
       {{"No Protect", 0, {49.9, 50.0}, 0}, {"GC", 0.5, {49.7, 49.8}, 0}, {"D-SGD", 0.7, {1.2, 0.3}, 4},
        {"MN", 1.5, {5.9, 22.3}, 1}, {"DP-L", 1.8, {0.8, 1.6}, 3}, {"ISO", 1.5, {0.6, 4.3}, 3},
        {"Marvell", 1.4, {1.1, 4.9}, 3}}},
      {"NS/DS VHNN", "NUSWIDE2-bal", nsds,
       {{"No Protect", 0, {17.7, 50.0}, 0}, {"GC", 0.0, {6.3, 5.8}, 4}, {"D-SGD", 0.3, {0.7, 0.3}, 5},
        {"MN", 0.2, {0.7, 1.4}, 5}, {"DP-L", 0.2, {0.5, 1.1}, 5}, {"ISO", 0.3, {0.7, 1.0}, 5},
        {"Marvell", 0.1, {0.4, 2.0}, 5}}},
      {"NS/DS VHNN", "BHI", nsds,
       {{"No Protect", 0, {33.3, 50.0}, 0}, {"GC", 0.3, {31.1, 47.7}, 0}, {"D-SGD", 0.3, {24.7, 27.5}, 0},
        {"MN", 0.6, {1.5, 3.5}, 4}, {"DP-L", 0.9, {3.6, 6.1}, 4}, {"ISO", 1.0, {3.4, 4.5}, 4},
        {"Marvell", 0.4, {0.8, 3.8}, 5}}},
      {"NS/DS VSNN", "NUSWIDE2-imb", nsds,
       {{"No Protect", 0, {39.8, 50.0}, 0}, {"GC", 0.2, {49.1, 49.9}, 0}, {"D-SGD", 13.2, {1.4, 0.6}, 0},
        {"MN", 1.1, {5.6, 13.6}, 3}, {"DP-L", 1.5, {3.8, 7.1}, 3}, {"ISO", 0.8, {6.8, 9.8}, 4},
        {"Marvell", 1.0, {2.1, 9.6}, 4}}},
      {"NS/DS VSNN", "Criteo", nsds,
       {{"No Protect", 0, {49.9, 50.0}, 0}, {"GC", 0.6, {49.9, 50.0}, 0}, {"D-SGD", 1.9, {32.1, 19.4}, 0},
        {"MN", 17.6, {4.2, 11.1}, 0}, {"DP-L", 13.2, {0.3, 1.8}, 0}, {"ISO", 4.6, {13.3, 17.8}, 1},
        {"Marvell", 4.9, {8.3, 13.3}, 1}}},
      {"NS/DS VSNN", "NUSWIDE2-bal", nsds,
       {{"No Protect", 0, {20.5, 50.0}, 0}, {"GC", 0.1, {12.7, 29.5}, 0}, {"D-SGD", 11.7, {7.7, 6.8}, 0},
        {"MN", 0.4, {1.0, 3.8}, 5}, {"DP-L", 0.4, {0.8, 2.2}, 5}, {"ISO", 0.4, {1.1, 2.4}, 5},
        {"Marvell", 0.4, {0.2, 3.1}, 5}}},
      {"NS/DS VSNN", "BHI", nsds,
       {{"No Protect", 0, {36.2, 50.0}, 0}, {"GC", 0.7, {34.5, 48.4}, 0}, {"D-SGD", 0.2, {37.2, 50.0}, 0},
        {"MN", 0.3, {2.6, 6.3}, 4}, {"DP-L", 0.5, {6.0, 14.0}, 3}, {"ISO", 0.5, {4.9, 8.8}, 4},
        {"Marvell", 0.3, {2.8, 9.3}, 4}}},
      {"MC VNN", "VHNN NUSWIDE2-imb", mc,
       {{"No Protect", 0, {23.8}, 1}, {"GC", 0.2, {19.6}, 1}, {"D-SGD", 4.2, {9.2}, 1}, {"MN", 0.7, {19.8}, 1},
        {"DP-L", 1.4, {13.2}, 3}, {"ISO", 2.5, {9.8}, 2}, {"Marvell", 1.0, {19.9}, 1}}},
      {"MC VNN", "VHNN BHI", mc,
       {{"No Protect", 0, {5.1}, 4}, {"GC", 0.4, {6.6}, 4}, {"D-SGD", 0.3, {6.0}, 4}, {"MN", 0.7, {5.4}, 4},
        {"DP-L", 1.0, {3.3}, 4}, {"ISO", 1.0, {1.8}, 4}, {"Marvell", 0.4, {5.3}, 4}}},
      {"MC VNN", "VHNN NUSWIDE10", mc,
       {{"No Protect", 0, {31.3}, 0}, {"GC", 0.3, {27.1}, 0}, {"D-SGD", 6.6, {17.8}, 0}, {"MN", 0.9, {38.3}, 0},
        {"DP-L", 2.9, {16.4}, 2}, {"ISO", 2.9, {18.3}, 2}}},
      {"MC VNN", "VHNN CIFAR10", mc,
       {{"No Protect", 0, {31.0}, 0}, {"GC", 0.5, {30.7}, 0}, {"D-SGD", 1.0, {29.1}, 0}, {"MN", 6.6, {9.0}, 0},
        {"DP-L", 4.6, {1.2}, 1}, {"ISO", 4.9, {2.3}, 1}}},
      {"MC VNN", "VSNN NUSWIDE2-imb", mc,
       {{"No Protect", 0, {24.3}, 1}, {"GC", 0.2, {21.4}, 1}, {"D-SGD", 14.7, {9.5}, 0}, {"MN", 1.1, {22.7}, 1},
        {"DP-L", 1.5, {18.8}, 2}, {"ISO", 2.8, {17.7}, 2}, {"Marvell", 1.5, {21.3}, 1}}},
      {"MC VNN", "VSNN CIFAR10", mc,
       {{"No Protect", 0, {42.8}, 0}, {"GC", 1.5, {43.8}, 0}, {"D-SGD", 1.0, {41.5}, 0}, {"MN", 4.0, {36.8}, 0},
        {"DP-L", 0.9, {42.5}, 0}, {"ISO", 25.1, {14.3}, 0}}},
  };
}

Outcome score_arithmetic() {
  std::size_t cells = 0;
  std::vector<std::string> mismatches;
  for (const Block& b : reference_tables())
    for (const Row& r : b.rows) {
      StrengthPoint p;
      p.eps_u = r.eps_u;
      for (std::size_t i = 0; i < b.attacks.size(); ++i) p.eps_p[b.attacks[i]] = r.eps_p[i];
      const int got = optimal_pu_score({p}, b.attacks, true).score;
      ++cells;
      if (got != r.printed)
        mismatches.push_back(std::string(b.table) + " " + b.column + " " + r.name + " (eps_u " +
                             fmt("%g", r.eps_u) + ", max eps_p " + fmt("%g", p.max_eps_p()) + "): printed " +
                             std::to_string(r.printed) + ", bands give " + std::to_string(got));
    }
  // Worked examples named in the criterion.
  bool examples = pu_score(3.7, 0.9) == 4 && pu_score(19.8, 0.1) == 2 && pu_score(3.8, 0.4) == 5;
  Outcome o;
  o.pass = mismatches.empty() && examples;
  o.detail = std::to_string(cells - mismatches.size()) + "/" + std::to_string(cells) + " cells reproduced";
  if (!examples) o.detail += "; worked examples wrong";
  for (const auto& m : mismatches) o.detail += "\n    mismatch: " + m;
  return o;
}

// ---- 2: autodiff against central differences -----------------------------

Outcome gradient_correctness() {
  Rng rng(2024);
  const std::vector<Activation> hidden{Activation::kRelu, Activation::kSigmoid, Activation::kIdentity};
  double worst = 0.0;
  const int probes = 100;
  for (int p = 0; p < probes; ++p) {
    const std::size_t depth = 1 + static_cast<std::size_t>(p % 3);
    std::vector<std::size_t> widths{2 + rng.uniform_index(5)};
    std::vector<Activation> acts;
    for (std::size_t l = 0; l < depth; ++l) {
      widths.push_back(2 + rng.uniform_index(5));
      acts.push_back(l + 1 == depth ? Activation::kSoftmax : hidden[rng.uniform_index(hidden.size())]);
    }
    Mlp net(widths, acts, rng);
    const std::size_t rows = 3 + rng.uniform_index(4);
    const Tensor2 x = randn(rows, widths.front(), rng);
    std::vector<int> labels(rows);
    for (auto& l : labels) l = static_cast<int>(rng.uniform_index(widths.back()));
    const Tensor2 y = one_hot(labels, widths.back());

    auto loss = [&](const Mlp& m) {
      Tape t;
      return t.value(t.softmax_cross_entropy(m.forward(t, t.constant(x), nullptr), y))(0, 0);
    };
    Tape tape;
    Mlp::Bound bound;
    tape.backward(tape.softmax_cross_entropy(net.forward(tape, tape.constant(x), &bound), y));
    const auto grads = net.gradients(tape, bound);

    // One random parameter entry per probe.
    auto params = net.parameters();
    const std::size_t which = rng.uniform_index(params.size());
    const std::size_t k = rng.uniform_index(params[which]->size());
    double& w = params[which]->data()[k];
    const double w0 = w, h = 1e-6;
    w = w0 + h;
    const double fp = loss(net);
    w = w0 - h;
    const double fm = loss(net);
    w = w0;
    const double fd = (fp - fm) / (2 * h);
    const double g = grads[which].data()[k];
    const double err = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-6});
    worst = std::max(worst, err);
  }
  return {worst < 1e-4, std::to_string(probes) + " probes, max relative error " + fmt("%.3g", worst)};
}

// ---- 3: DL exactness -----------------------------------------------------

Outcome dl_exactness() {
  DatasetSpec s;
  s.kind = DatasetKind::kBinaryBalanced;
  s.n_train = 600;
  s.n_test = 200;
  s.seed = 3;
  const auto data = make_dataset(s);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 64;
  cfg.vlr_softmax = true;
  const auto r = train_joint(AlgorithmKind::kVlr, data.train, cfg);
  Rng rng(4);
  std::size_t batches = 0, perfect = 0;
  double worst_acc = 100.0;
  for (const auto& epoch : r.log.epochs)
    for (const auto& batch : epoch) {
      const auto out = direct_label_inference(std::span(&batch, 1), 2, rng);
      std::vector<int> truth;
      for (auto i : out.indices) truth.push_back(data.train.labels[i]);
      const double acc = accuracy(out.predictions, truth);
      worst_acc = std::min(worst_acc, acc);
      ++batches;
      perfect += acc == 100.0 && out.undecided == 0;
    }

  EvaluationTask t;
  t.name = "dl";
  t.setting = 1;
  t.algorithm = AlgorithmKind::kVlr;
  t.dataset = s;
  t.dataset_name = "synthetic";
  t.attacks = {AttackKind::kDl};
  t.protections = {{ProtectionKind::kNone, {}}};
  t.seeds = {0, 1};
  t.train = cfg;
  const auto recs = run_tasks({t}, 1);
  double eps_min = 1e9, eps_max = -1e9;
  for (const auto& rec : recs)
    for (const auto& [name, v] : rec.eps_p) {
      eps_min = std::min(eps_min, v);
      eps_max = std::max(eps_max, v);
    }
  const bool pass = batches > 0 && perfect == batches && !recs.empty() && eps_min == 50.0 && eps_max == 50.0;
  return {pass, std::to_string(perfect) + "/" + std::to_string(batches) + " batches at 100%, eps_p in [" +
                    fmt("%g", eps_min) + ", " + fmt("%g", eps_max) + "]"};
}

// ---- 4: residue reconstruction -------------------------------------------

Tensor2 xt_d(const Tensor2& x, const Tensor2& d) {
  Tensor2 g(x.cols(), d.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t a = 0; a < x.cols(); ++a)
      for (std::size_t c = 0; c < d.cols(); ++c) g(a, c) += x(i, a) * d(i, c);
  return g;
}

Outcome residue_oracle() {
  Rng rng(44);
  double full_worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t b = 2 + rng.uniform_index(30);
    const std::size_t m = b + rng.uniform_index(10);
    const Tensor2 x = randn(b, m, rng), d = randn(b, 1 + rng.uniform_index(3), rng);
    full_worst = std::max(full_worst, max_abs_diff(residue_reconstruct(x, xt_d(x, d)).d_tilde, d));
  }
  // Adversarial: d lies entirely in the null space of x^T, so the observed
  // gradient is zero and the least-norm solution is zero.
  double deficient_best = 1e9;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t b = 6 + rng.uniform_index(10), m = 1 + rng.uniform_index(b - 2);
    const Tensor2 x = randn(b, m, rng);
    Tensor2 d = randn(b, 1, rng);
    // Project d off the column space of x by Gram-Schmidt on x's columns.
    std::vector<std::vector<double>> basis;
    for (std::size_t a = 0; a < m; ++a) {
      std::vector<double> v(b);
      for (std::size_t i = 0; i < b; ++i) v[i] = x(i, a);
      for (const auto& q : basis) {
        double dot = 0;
        for (std::size_t i = 0; i < b; ++i) dot += v[i] * q[i];
        for (std::size_t i = 0; i < b; ++i) v[i] -= dot * q[i];
      }
      double n = 0;
      for (double e : v) n += e * e;
      n = std::sqrt(n);
      for (double& e : v) e /= n;
      basis.push_back(v);
    }
    for (const auto& q : basis) {
      double dot = 0;
      for (std::size_t i = 0; i < b; ++i) dot += d(i, 0) * q[i];
      for (std::size_t i = 0; i < b; ++i) d(i, 0) -= dot * q[i];
    }
    const auto r = residue_reconstruct(x, xt_d(x, d));
    deficient_best = std::min(deficient_best, max_abs_diff(r.d_tilde, d));
  }
  const bool pass = full_worst < 1e-6 && deficient_best > 1e-2;
  return {pass, "full-rank max error " + fmt("%.3g", full_worst) + ", rank-deficient min error " +
                    fmt("%.3g", deficient_best)};
}

// ---- 5: protection limits ------------------------------------------------

Outcome protection_limits() {
  Rng rng(55);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor2 d = randn(4 + rng.uniform_index(20), 1 + rng.uniform_index(8), rng);
    std::vector<int> labels(d.rows());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
    for (auto [kind, s] : std::vector<std::pair<ProtectionKind, double>>{{ProtectionKind::kDpLaplace, 1e-12},
                                                                        {ProtectionKind::kIso, 1e-12},
                                                                        {ProtectionKind::kMarvell, 0.0},
                                                                        {ProtectionKind::kGc, 1.0}})
      worst = std::max(worst, max_abs_diff(protect_cut_gradient({kind, s}, d, labels, rng), d));
  }
  std::size_t outside = 0;
  const auto grid = default_strength_grid(ProtectionKind::kDsgd);
  for (int trial = 0; trial < 10000; ++trial) {
    const Tensor2 d = randn(1 + rng.uniform_index(8), 1 + rng.uniform_index(8), rng, 0.1 + rng.uniform());
    const auto bins = static_cast<std::size_t>(grid[rng.uniform_index(grid.size())]);
    const auto ends = discrete_sgd_endpoints(d, bins);
    const std::set<double> allowed(ends.begin(), ends.end());
    const Tensor2 out = discrete_sgd(d, bins);
    for (double v : out.data()) outside += v != 0.0 && !allowed.count(v);
  }
  return {worst <= 1e-9 && outside == 0, "max change at the limits " + fmt("%.3g", worst) +
                                             ", D-SGD entries outside codomain " + std::to_string(outside)};
}

// ---- 6: noise statistics -------------------------------------------------

struct Moments {
  double mean = 0, var = 0;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  for (double x : xs) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(xs.size() - 1);
  return m;
}

Outcome noise_statistics() {
  const std::size_t draws = 100000;
  Rng rng(66);
  std::string detail;
  bool pass = true;
  auto check = [&](const char* name, const Moments& m, double want_var) {
    // Mean within four standard errors of zero, variance within 5%.
    const double se = std::sqrt(want_var / static_cast<double>(draws));
    const bool ok = std::abs(m.mean) <= 4 * se && std::abs(m.var / want_var - 1.0) <= 0.05;
    pass = pass && ok;
    detail += std::string(detail.empty() ? "" : ", ") + name + " var ratio " + fmt("%.4f", m.var / want_var);
  };

  const double lambda = 0.2;
  const Tensor2 one(1, 1, 0.3);
  std::vector<double> xs(draws);
  for (auto& x : xs) x = dp_laplace(one, lambda, rng)(0, 0) - 0.3;
  check("DP-L", moments(xs), 2 * lambda * lambda);

  const Tensor2 d{{3, 4}, {1, 0}};
  const double sigma = iso_sigma(d, 2.0);
  for (auto& x : xs) x = iso(d, 2.0, rng)(1, 1);
  check("ISO", moments(xs), sigma * sigma);

  // Max norm: E||row||^2 equals the largest squared row norm (25).
  const Tensor2 mn{{3, 4}, {0.6, 0.8}};
  for (auto& x : xs) {
    const Tensor2 out = max_norm(mn, rng);
    x = out(1, 0) * out(1, 0) + out(1, 1) * out(1, 1);
  }
  const double mn_ratio = moments(xs).mean / 25.0;
  pass = pass && std::abs(mn_ratio - 1.0) <= 0.05;
  detail += ", MN E||row||^2 ratio " + fmt("%.4f", mn_ratio);

  // Marvell: feasibility and dominance over the budget-matched isotropic noise.
  double slack = 0.0, excess = -1e9;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 2 + rng.uniform_index(8);
    Tensor2 pos = randn(2 + rng.uniform_index(10), m, rng, 0.3), neg = randn(5 + rng.uniform_index(20), m, rng, 0.3);
    for (std::size_t r = 0; r < pos.rows(); ++r) pos(r, 0) -= 1.0;
    const double budget = 0.01 + 5.0 * rng.uniform();
    const auto sol = marvell_solve(pos, neg, budget);
    slack = std::max(slack, sol.expected_trace() - budget);
    const auto stats = marvell_stats(pos, neg);
    const auto base = marvell_isotropic(stats, budget);
    excess = std::max(excess, sol.objective - marvell_objective(stats, base.pos_parallel, base.pos_perp,
                                                                base.neg_parallel, base.neg_perp));
  }
  pass = pass && slack <= 1e-6 && excess <= 1e-12;
  detail += ", Marvell budget overshoot " + fmt("%.3g", std::max(0.0, slack)) + ", objective minus isotropic " +
            fmt("%.3g", excess);
  return {pass, detail};
}

// ---- 7-9: end-to-end runs ------------------------------------------------

std::map<std::string, double> seed_mean(const std::vector<TradeoffRecord>& recs, const std::string& protection,
                                        double strength, double* eps_u = nullptr) {
  std::map<std::string, double> sum;
  double u = 0;
  std::size_t n = 0;
  for (const auto& r : recs)
    if (r.protection == protection && r.strength == strength && !r.failed) {
      for (const auto& [k, v] : r.eps_p) sum[k] += v;
      u += r.eps_u;
      ++n;
    }
  for (auto& [k, v] : sum) v /= static_cast<double>(std::max<std::size_t>(n, 1));
  if (eps_u) *eps_u = n ? u / static_cast<double>(n) : std::nan("");
  return sum;
}

std::size_t failures(const std::vector<TradeoffRecord>& recs) {
  return static_cast<std::size_t>(std::count_if(recs.begin(), recs.end(), [](auto& r) { return r.failed; }));
}

Outcome defense_ordering() {
  EvaluationTask t;
  t.name = "ordering";
  t.setting = 4;
  t.algorithm = AlgorithmKind::kVhnn;
  t.dataset.kind = DatasetKind::kBinaryImbalanced;
  t.dataset.n_train = 2000;
  t.dataset.n_test = 1000;
  t.dataset.dims_a = 10;
  t.dataset.dims_b = 10;
  t.dataset.separation_a = 3.0;
  t.dataset.separation_b = 1.0;
  t.dataset_name = "synthetic-imbalanced";
  t.attacks = {AttackKind::kNs};
  t.protections = {{ProtectionKind::kNone, {}}, {ProtectionKind::kIso, {25.0}}, {ProtectionKind::kMarvell, {12.0}}};
  t.seeds = {0, 1, 2};
  t.train.epochs = 10;
  t.train.batch_size = 64;
  t.train.learning_rate = 0.05;
  const auto recs = run_tasks({t}, 4);

  double u_iso = 0, u_mv = 0;
  const double ns_none = seed_mean(recs, "none", 0.0)["NS"];
  const double ns_iso = seed_mean(recs, "iso", 25.0, &u_iso)["NS"];
  const double ns_mv = seed_mean(recs, "marvell", 12.0, &u_mv)["NS"];
  const bool pass = failures(recs) == 0 && ns_none >= 30 && ns_iso <= 10 && u_iso <= 2 && ns_mv <= 10 &&
                    u_mv <= 2;
  return {pass, "seed means: unprotected NS " + fmt("%.2f", ns_none) + "; ISO NS " + fmt("%.2f", ns_iso) +
                    " eps_u " + fmt("%.2f", u_iso) + "; Marvell NS " + fmt("%.2f", ns_mv) + " eps_u " +
                    fmt("%.2f", u_mv) + "; failed runs " + std::to_string(failures(recs))};
}

Outcome mc_hardness() {
  EvaluationTask t;
  t.name = "mc";
  t.setting = 5;
  t.algorithm = AlgorithmKind::kVhnn;
  t.dataset.kind = DatasetKind::kMulticlass;
  t.dataset.num_classes = 10;
  t.dataset.n_train = 2000;
  t.dataset.n_test = 1000;
  t.dataset.dims_a = 10;
  t.dataset.dims_b = 20;
  t.dataset.separation_b = 3.0;
  t.dataset_name = "synthetic-10class";
  t.attacks = {AttackKind::kMc};
  const auto strongest = [](ProtectionKind k) { return default_strength_grid(k).front(); };
  t.protections = {{ProtectionKind::kGc, {strongest(ProtectionKind::kGc)}},
                   {ProtectionKind::kDsgd, {strongest(ProtectionKind::kDsgd)}},
                   {ProtectionKind::kMaxNorm, {}}};
  t.seeds = {0, 1, 2};
  t.aux_sizes = {40};
  t.train.epochs = 10;
  t.train.batch_size = 64;
  const auto recs = run_tasks({t}, 4);

  bool pass = failures(recs) == 0;
  std::string detail;
  for (const auto& sweep : t.protections) {
    const std::string name = to_string(sweep.kind);
    int votes = 0, total = 0;
    std::string per_seed;
    for (const auto& r : recs)
      if (r.protection == name && !r.failed) {
        const double mc = r.eps_p.front().second;
        votes += mc > 10 || r.eps_u > 2;
        ++total;
        per_seed += " (" + fmt("%.1f", mc) + ", " + fmt("%.2f", r.eps_u) + ")";
      }
    const bool ok = total > 0 && 2 * votes > total;
    pass = pass && ok;
    detail += std::string(detail.empty() ? "" : "; ") + name + " " + std::to_string(votes) + "/" +
              std::to_string(total) + " seeds (eps_p, eps_u):" + per_seed;
  }
  return {pass, detail};
}

Outcome mi_sensitivity() {
  EvaluationTask t;
  t.name = "mi";
  t.setting = 6;
  t.algorithm = AlgorithmKind::kVhnn;
  t.dataset.kind = DatasetKind::kImagePattern;
  t.dataset.n_train = 400;
  t.dataset.n_test = 64;
  t.dataset.image_size = 8;
  t.dataset_name = "patterns";
  t.attacks = {AttackKind::kMi};
  t.protections = {{ProtectionKind::kNone, {}}, {ProtectionKind::kPrecode, {0.0}}};
  t.shadows = {ShadowKind::kSame, ShadowKind::kFc};
  t.seeds = {0, 1, 2};
  t.aux_sizes = {100};
  t.mi_samples = 32;
  t.train.epochs = 10;
  t.train.batch_size = 32;
  t.train.bottom_hidden = 64;
  t.train.cut_width = 64;
  t.mi.shadow_epochs = 300;
  t.mi.steps = 600;
  t.mi.learning_rate = 0.5;
  const auto recs = run_tasks({t}, 4);

  auto get = [](const TradeoffRecord& r, const std::string& label) {
    for (const auto& [k, v] : r.eps_p)
      if (k == label) return v;
    return std::nan("");
  };
  int structure_wins = 0, precode_wins = 0, pairs = 0;
  std::string detail = "seed (same, fc | precode same):";
  for (std::uint64_t seed : t.seeds) {
    const TradeoffRecord *none = nullptr, *pre = nullptr;
    for (const auto& r : recs)
      if (r.seed == seed && !r.failed) (r.protection == "none" ? none : pre) = &r;
    if (!none || !pre) continue;
    ++pairs;
    const double same = get(*none, "MI:same"), lin = get(*none, "MI:fc"), psame = get(*pre, "MI:same");
    structure_wins += same > lin;
    precode_wins += psame < same;
    detail += " " + std::to_string(seed) + " (" + fmt("%.3f", same) + ", " + fmt("%.3f", lin) + " | " +
              fmt("%.3f", psame) + ")";
  }
  const bool pass = pairs == static_cast<int>(t.seeds.size()) && structure_wins == pairs && precode_wins == pairs;
  return {pass, detail};
}

// ---- 10: determinism through the CLI layer --------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / ("vfl_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::string cfg = std::string(VFL_SOURCE_DIR) + "/configs/minimal_setting1.json";
  std::ostringstream out, err;
  std::vector<std::string> bodies;
  bool ok = true;
  for (const auto& [dir, par] : std::vector<std::pair<std::string, int>>{{"a", 1}, {"b", 1}, {"c", 8}}) {
    RunOptions o;
    o.config_path = cfg;
    o.out_dir = (root / dir).string();
    o.parallel = par;
    ok = ok && cmd_run(o, out, err) == kExitOk;
    bodies.push_back(slurp(root / dir / "records.csv"));
  }
  fs::remove_all(root);
  const bool same = !bodies[0].empty() && bodies[0] == bodies[1] && bodies[0] == bodies[2];
  return {ok && same, std::to_string(bodies[0].size()) + " bytes; rerun identical " +
                          (bodies[0] == bodies[1] ? "yes" : "no") + ", --parallel 8 identical " +
                          (bodies[0] == bodies[2] ? "yes" : "no") + (ok ? "" : "; cmd_run failed: " + err.str())};
}

// ---- 11: metric hand values -----------------------------------------------

Outcome metric_units() {
  Rng rng(11);
  Tensor2 img(12, 12);
  for (double& v : img.data()) v = rng.uniform();
  const double self = ssim(img, img);
  const std::vector<double> scores{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> labels{0, 0, 1, 1};
  const double hand = auc(scores, labels);
  const std::vector<double> flat(6, 0.3);
  const double constant = auc(flat, std::vector<int>{0, 1, 0, 1, 1, 0});
  return {std::abs(self - 1.0) < 1e-12 && hand == 75.0 && constant == 50.0,
          "SSIM(x,x) " + fmt("%.15g", self) + ", hand AUC " + fmt("%g", hand) + ", constant AUC " +
              fmt("%g", constant)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> selected;
  app.add_option("--criterion,-c", selected, "criterion numbers to run (default: all)")->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> all{
      {1, "score arithmetic", score_arithmetic},
      {2, "gradient correctness", gradient_correctness},
      {3, "DL exactness", dl_exactness},
      {4, "RR oracle", residue_oracle},
      {5, "protection limits", protection_limits},
      {6, "noise statistics", noise_statistics},
      {7, "defense effectiveness ordering", defense_ordering},
      {8, "MC hardness", mc_hardness},
      {9, "MI structure sensitivity", mi_sensitivity},
      {10, "determinism", determinism},
      {11, "SSIM/AUC units", metric_units},
  };
  int failed = 0;
  for (const auto& c : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("%s criterion %d (%s) [%.2fs]: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
