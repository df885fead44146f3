#include "vfl/protections.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vfl/error.h"
#include "vfl/marvell.h"

namespace vfl {

const char* to_string(ProtectionKind kind) {
  switch (kind) {
    case ProtectionKind::kNone:
      return "none";
    case ProtectionKind::kDpLaplace:
      return "dp_laplace";
    case ProtectionKind::kIso:
      return "iso";
    case ProtectionKind::kMaxNorm:
      return "max_norm";
    case ProtectionKind::kMarvell:
      return "marvell";
    case ProtectionKind::kGc:
      return "gc";
    case ProtectionKind::kDsgd:
      return "dsgd";
    case ProtectionKind::kMixup:
      return "mixup";
    case ProtectionKind::kPrecode:
      return "precode";
  }
  return "?";
}

std::vector<ProtectionKind> all_protections() {
  return {ProtectionKind::kDpLaplace, ProtectionKind::kIso,    ProtectionKind::kMaxNorm,
          ProtectionKind::kMarvell,   ProtectionKind::kGc,     ProtectionKind::kDsgd,
          ProtectionKind::kMixup,     ProtectionKind::kPrecode};
}

ProtectionKind protection_kind_from_string(const std::string& name) {
  if (name == "none") return ProtectionKind::kNone;
  for (auto k : all_protections())
    if (name == to_string(k)) return k;
  throw ConfigError("unknown protection '" + name + "'");
}

std::vector<double> default_strength_grid(ProtectionKind kind) {
  switch (kind) {
    case ProtectionKind::kDpLaplace:
      return {1e-1, 1e-2, 1e-3, 1e-4};
    case ProtectionKind::kIso:
      return {25, 10, 5, 2.75};
    case ProtectionKind::kMarvell:
      return {12, 8, 4, 2};
    case ProtectionKind::kGc:
      return {0.1, 0.25, 0.5, 0.75};
    case ProtectionKind::kDsgd:
      return {4, 6, 12, 18};
    case ProtectionKind::kMixup:
      return {4, 3, 2};
    default:
      return {0.0};
  }
}

bool strength_increases_protection(ProtectionKind kind) {
  switch (kind) {
    case ProtectionKind::kGc:
    case ProtectionKind::kDsgd:
      return false;
    default:
      return true;
  }
}

void ProtectionBinding::validate() const {
  const double s = strength;
  auto fail = [&](const std::string& rule) {
    throw ConfigError(std::string("protection ") + to_string(kind) + ": " + rule + " (got " +
                      std::to_string(s) + ")");
  };
  switch (kind) {
    case ProtectionKind::kDpLaplace:
      if (!(s > 0)) fail("lambda must be > 0");
      break;
    case ProtectionKind::kIso:
      if (!(s > 0)) fail("alpha must be > 0");
      break;
    case ProtectionKind::kMarvell:
      if (!(s >= 0)) fail("tau must be >= 0");
      break;
    case ProtectionKind::kGc:
      if (!(s > 0 && s <= 1)) fail("pi must lie in (0, 1]");
      break;
    case ProtectionKind::kDsgd:
      if (!(s >= 2) || s != std::floor(s)) fail("N must be an integer >= 2");
      break;
    case ProtectionKind::kMixup:
      if (!(s >= 2) || s != std::floor(s)) fail("k must be an integer >= 2");
      break;
    case ProtectionKind::kPrecode:
      if (!(precode_beta >= 0)) throw ConfigError("protection precode: beta must be >= 0");
      break;
    default:
      break;
  }
}

bool ProtectionBinding::transforms_cut_gradient() const {
  switch (kind) {
    case ProtectionKind::kDpLaplace:
    case ProtectionKind::kIso:
    case ProtectionKind::kMaxNorm:
    case ProtectionKind::kMarvell:
    case ProtectionKind::kGc:
    case ProtectionKind::kDsgd:
      return true;
    default:
      return false;
  }
}

Tensor2 dp_laplace(const Tensor2& d, double lambda, Rng& rng) {
  if (!(lambda > 0)) throw ConfigError("dp_laplace: lambda must be > 0");
  Tensor2 out = d;
  for (double& v : out.data()) v += rng.laplace(lambda);
  return out;
}

double iso_sigma(const Tensor2& d, double alpha) {
  if (d.cols() == 0) return 0.0;
  double max_norm = 0.0;
  for (std::size_t r = 0; r < d.rows(); ++r) max_norm = std::max(max_norm, d.row_norm(r));
  return alpha * max_norm / std::sqrt(static_cast<double>(d.cols()));
}

Tensor2 iso(const Tensor2& d, double alpha, Rng& rng) {
  if (!(alpha > 0)) throw ConfigError("iso: alpha must be > 0");
  const double sigma = iso_sigma(d, alpha);
  Tensor2 out = d;
  if (sigma == 0.0) return out;
  for (double& v : out.data()) v += sigma * rng.normal();
  return out;
}

Tensor2 max_norm(const Tensor2& d, Rng& rng) {
  double max_sq = 0.0;
  for (std::size_t r = 0; r < d.rows(); ++r) max_sq = std::max(max_sq, d.row_norm(r) * d.row_norm(r));
  Tensor2 out = d;
  for (std::size_t r = 0; r < d.rows(); ++r) {
    const double n = d.row_norm(r);
    if (n == 0.0) continue;
    const double sigma = std::sqrt(std::max(0.0, max_sq / (n * n) - 1.0));
    const double scale = 1.0 + sigma * rng.normal();
    for (double& v : out.row(r)) v *= scale;
  }
  return out;
}

Tensor2 gradient_compress(const Tensor2& d, double pi) {
  if (!(pi > 0 && pi <= 1)) throw ConfigError("gradient_compress: pi must lie in (0, 1]");
  const std::size_t total = d.size();
  if (total == 0) return d;
  const auto keep = std::min<std::size_t>(
      total, static_cast<std::size_t>(std::ceil(pi * static_cast<double>(total) - 1e-9)));
  if (keep == total) return d;
  std::vector<double> mags(total);
  for (std::size_t i = 0; i < total; ++i) mags[i] = std::abs(d.data()[i]);
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(keep - 1), mags.end(),
                   std::greater<>());
  const double threshold = mags[keep - 1];
  Tensor2 out = d;
  for (double& v : out.data())
    if (std::abs(v) < threshold) v = 0.0;
  return out;
}

std::vector<double> discrete_sgd_endpoints(const Tensor2& d, std::size_t bins) {
  if (bins < 2) throw ConfigError("discrete_sgd: N must be >= 2");
  const auto n = static_cast<double>(d.size());
  double mean = 0.0;
  for (double v : d.data()) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : d.data()) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  const double lb = mean - 2 * sd, ub = mean + 2 * sd;
  std::vector<double> e(bins + 1);
  for (std::size_t w = 0; w <= bins; ++w)
    e[w] = lb + static_cast<double>(w) * (ub - lb) / static_cast<double>(bins);
  if (bins % 2 == 0) e[bins / 2] = mean;
  return e;
}

Tensor2 discrete_sgd(const Tensor2& d, std::size_t bins) {
  if (bins < 2) throw ConfigError("discrete_sgd: N must be >= 2");
  if (d.size() == 0) return d;
  const auto e = discrete_sgd_endpoints(d, bins);
  const double lb = e.front(), ub = e.back();
  Tensor2 out = d;
  if (ub == lb) {
    for (double& v : out.data()) v = lb;
    return out;
  }
  const double width = (ub - lb) / static_cast<double>(bins);
  for (double& v : out.data()) {
    if (v < lb || v > ub) {
      v = 0.0;
      continue;
    }
    auto w = static_cast<std::size_t>(std::floor((v - lb) / width));
    w = std::min(w, bins - 1);
    // Nearest of e[w], e[w+1]; the midpoint goes to the lower one.
    v = (v - e[w] <= e[w + 1] - v) ? e[w] : e[w + 1];
  }
  return out;
}

MixPlan draw_mix_plan(std::size_t batch, std::size_t k, Rng& rng) {
  if (k < 2) throw ConfigError("mixup: k must be >= 2");
  if (k > batch)
    throw ConfigError("mixup: k (" + std::to_string(k) + ") exceeds batch size (" +
                      std::to_string(batch) + ")");
  MixPlan plan;
  plan.sources.resize(batch);
  plan.weights.resize(batch);
  std::vector<std::size_t> others(batch - 1);
  for (std::size_t i = 0; i < batch; ++i) {
    // Partial Fisher-Yates over the rows other than i.
    for (std::size_t j = 0, o = 0; j < batch; ++j)
      if (j != i) others[o++] = j;
    auto& src = plan.sources[i];
    src.push_back(i);
    for (std::size_t t = 0; t + 1 < k; ++t) {
      const std::size_t pick = t + rng.uniform_index(others.size() - t);
      std::swap(others[t], others[pick]);
      src.push_back(others[t]);
    }
    auto& w = plan.weights[i];
    double total = 0.0;
    for (std::size_t t = 0; t < k; ++t) total += w.emplace_back(rng.exponential());
    for (double& x : w) x /= total;
  }
  return plan;
}

Tensor2 mix_rows(const Tensor2& x, const MixPlan& plan) {
  Tensor2 out(plan.sources.size(), x.cols());
  for (std::size_t i = 0; i < plan.sources.size(); ++i) {
    require_shape(plan.sources[i].size() == plan.weights[i].size(), "mix_rows: plan row mismatch");
    auto dst = out.row(i);
    for (std::size_t t = 0; t < plan.sources[i].size(); ++t) {
      const auto src = x.row(plan.sources[i][t]);
      const double w = plan.weights[i][t];
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += w * src[c];
    }
  }
  return out;
}

MixedBatch mixup_batch(const Tensor2& batch_a, const Tensor2& batch_b, const Tensor2& onehot_labels,
                       std::size_t k, Rng& rng) {
  require_shape(batch_a.rows() == batch_b.rows() && batch_b.rows() == onehot_labels.rows(),
                "mixup_batch: row counts differ");
  const MixPlan plan = draw_mix_plan(batch_b.rows(), k, rng);
  return {mix_rows(batch_a, plan), mix_rows(batch_b, plan), mix_rows(onehot_labels, plan)};
}

std::vector<Tensor2*> VariationalBottleneck::parameters() {
  std::vector<Tensor2*> out;
  for (Mlp* m : {&encoder_mu, &encoder_logvar, &decoder})
    for (Tensor2* p : m->parameters()) out.push_back(p);
  return out;
}

VariationalBottleneck make_bottleneck(std::size_t width, std::size_t latent, Rng& rng) {
  if (latent == 0) latent = width;
  VariationalBottleneck vb;
  vb.encoder_mu = Mlp({width, latent}, {Activation::kIdentity}, rng);
  vb.encoder_logvar = Mlp({width, latent}, {Activation::kIdentity}, rng);
  // Start near unit variance so early samples are not dominated by noise.
  for (double& w : vb.encoder_logvar.layers()[0].weights.data()) w *= 0.1;
  vb.decoder = Mlp({latent, width}, {Activation::kIdentity}, rng);
  return vb;
}

double gaussian_kl(const Tensor2& mu, const Tensor2& logvar) {
  require_shape(mu.same_shape(logvar), "gaussian_kl: mu and logvar shapes differ");
  if (mu.rows() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double m = mu.data()[i], lv = logvar.data()[i];
    s += 0.5 * (m * m + std::exp(lv) - 1.0 - lv);
  }
  return s / static_cast<double>(mu.rows());
}

BottleneckOutput precode_bottleneck(const Tensor2& q, const VariationalBottleneck& params, Rng& rng) {
  const Tensor2 mu = params.encoder_mu.forward(q);
  const Tensor2 logvar = params.encoder_logvar.forward(q);
  Tensor2 o = mu;
  for (std::size_t i = 0; i < o.size(); ++i)
    o.data()[i] += std::exp(0.5 * logvar.data()[i]) * rng.normal();
  return {params.decoder.forward(o), gaussian_kl(mu, logvar)};
}

Var precode_bottleneck(Tape& tape, Var q, const VariationalBottleneck& params, Rng& rng,
                       BottleneckBound* bound, Var* kl) {
  BottleneckBound local;
  BottleneckBound& b = bound ? *bound : local;
  const Var mu = params.encoder_mu.forward(tape, q, &b.mu);
  const Var logvar = params.encoder_logvar.forward(tape, q, &b.logvar);
  const Tensor2& mv = tape.value(mu);
  Tensor2 zeta(mv.rows(), mv.cols());
  for (double& z : zeta.data()) z = rng.normal();
  const Var sigma = tape.exp(tape.scale(logvar, 0.5));
  const Var o = tape.add(mu, tape.mul(sigma, tape.constant(std::move(zeta))));
  if (kl) *kl = tape.gaussian_kl(mu, logvar);
  return params.decoder.forward(tape, o, &b.decoder);
}

std::vector<Tensor2> bottleneck_gradients(const Tape& tape, const VariationalBottleneck& params,
                                          const BottleneckBound& bound) {
  std::vector<Tensor2> out = params.encoder_mu.gradients(tape, bound.mu);
  for (auto& g : params.encoder_logvar.gradients(tape, bound.logvar)) out.push_back(std::move(g));
  for (auto& g : params.decoder.gradients(tape, bound.decoder)) out.push_back(std::move(g));
  return out;
}

Tensor2 protect_cut_gradient(const ProtectionBinding& binding, const Tensor2& d,
                             std::span<const int> labels, Rng& rng) {
  switch (binding.kind) {
    case ProtectionKind::kDpLaplace:
      return dp_laplace(d, binding.strength, rng);
    case ProtectionKind::kIso:
      return iso(d, binding.strength, rng);
    case ProtectionKind::kMaxNorm:
      return max_norm(d, rng);
    case ProtectionKind::kGc:
      return gradient_compress(d, binding.strength);
    case ProtectionKind::kDsgd:
      return discrete_sgd(d, static_cast<std::size_t>(binding.strength));
    case ProtectionKind::kMarvell: {
      require_shape(labels.size() == d.rows(), "marvell: label count differs from batch rows");
      std::vector<std::size_t> pos, neg;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1)
          throw ConfigError("marvell: binary labels only (got label " + std::to_string(labels[i]) + ")");
        (labels[i] == 1 ? pos : neg).push_back(i);
      }
      const Tensor2 gp = d.gather_rows(pos), gn = d.gather_rows(neg);
      // tau is relative to the squared gap between class-mean gradients.
      const MarvellStats stats = marvell_stats(gp, gn);
      const double budget = binding.strength * stats.mean_gap_sq;
      MarvellSolution sol;
      if (pos.empty() || neg.empty()) {
        // Single-class batch: no gap to scale by, use the batch's mean squared norm.
        double msq = 0.0;
        for (std::size_t r = 0; r < d.rows(); ++r) msq += d.row_norm(r) * d.row_norm(r);
        msq /= std::max<std::size_t>(1, d.rows());
        sol = marvell_isotropic(stats, binding.strength * msq);
      } else {
        sol = marvell_solve(gp, gn, budget);
      }
      return marvell_apply(d, labels, sol, rng);
    }
    default:
      return d;
  }
}

}  // namespace vfl
