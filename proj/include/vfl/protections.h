#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vfl/autodiff.h"
#include "vfl/nn.h"
#include "vfl/rng.h"
#include "vfl/tensor.h"

namespace vfl {

enum class ProtectionKind {
  kNone,
  kDpLaplace,
  kIso,
  kMaxNorm,
  kMarvell,
  kGc,
  kDsgd,
  kMixup,
  kPrecode,
};

const char* to_string(ProtectionKind kind);
ProtectionKind protection_kind_from_string(const std::string& name);
// The eight evaluated mechanisms in registry order (excludes kNone).
std::vector<ProtectionKind> all_protections();
// Default strength grid, ordered from strongest to weakest protection.
std::vector<double> default_strength_grid(ProtectionKind kind);
// True if a larger strength value means more protection.
bool strength_increases_protection(ProtectionKind kind);

struct ProtectionBinding {
  ProtectionKind kind = ProtectionKind::kNone;
  // lambda (DP-L), alpha (ISO), tau (Marvell), pi (GC), N bins (D-SGD),
  // k rows (MixUp). Ignored by MN and PRECODE.
  double strength = 0.0;
  double precode_beta = 1e-3;
  std::size_t precode_latent = 0;  // 0: same width as the cut layer

  void validate() const;
  // Kinds that transform d^B before it is sent to party B.
  bool transforms_cut_gradient() const;
};

Tensor2 dp_laplace(const Tensor2& d, double lambda, Rng& rng);

double iso_sigma(const Tensor2& d, double alpha);
Tensor2 iso(const Tensor2& d, double alpha, Rng& rng);

// Rows with zero norm pass through unchanged.
Tensor2 max_norm(const Tensor2& d, Rng& rng);

// Keeps entries whose magnitude reaches the ceil(pi*K)-th largest magnitude.
Tensor2 gradient_compress(const Tensor2& d, double pi);

// Quantises to N+1 endpoints over [mu - 2 sigma, mu + 2 sigma]; entries
// outside that range become 0. Ties snap to the lower endpoint.
Tensor2 discrete_sgd(const Tensor2& d, std::size_t bins);
std::vector<double> discrete_sgd_endpoints(const Tensor2& d, std::size_t bins);

// Row i of a mixed batch is sum_j weights[i][j] * x[sources[i][j]].
struct MixPlan {
  std::vector<std::vector<std::size_t>> sources;
  std::vector<std::vector<double>> weights;
};

// Each row is mixed with k-1 other distinct rows under flat Dirichlet weights.
MixPlan draw_mix_plan(std::size_t batch, std::size_t k, Rng& rng);
Tensor2 mix_rows(const Tensor2& x, const MixPlan& plan);

struct MixedBatch {
  Tensor2 features_a;
  Tensor2 features_b;
  Tensor2 soft_labels;
};

MixedBatch mixup_batch(const Tensor2& batch_a, const Tensor2& batch_b, const Tensor2& onehot_labels,
                       std::size_t k, Rng& rng);

// Variational bottleneck between party B's bottom output q and the cut layer.
struct VariationalBottleneck {
  Mlp encoder_mu;
  Mlp encoder_logvar;
  Mlp decoder;

  std::vector<Tensor2*> parameters();
};

VariationalBottleneck make_bottleneck(std::size_t width, std::size_t latent, Rng& rng);

struct BottleneckOutput {
  Tensor2 q_hat;
  double kl = 0.0;
};

// Mean over rows of KL(N(mu, exp(logvar)) || N(0, 1)).
double gaussian_kl(const Tensor2& mu, const Tensor2& logvar);

BottleneckOutput precode_bottleneck(const Tensor2& q, const VariationalBottleneck& params, Rng& rng);

// Tape version. `kl` receives the KL node; `bound` receives parameter handles
// in the order of VariationalBottleneck::parameters().
struct BottleneckBound {
  Mlp::Bound mu;
  Mlp::Bound logvar;
  Mlp::Bound decoder;
};
Var precode_bottleneck(Tape& tape, Var q, const VariationalBottleneck& params, Rng& rng,
                       BottleneckBound* bound, Var* kl);
std::vector<Tensor2> bottleneck_gradients(const Tape& tape, const VariationalBottleneck& params,
                                          const BottleneckBound& bound);

// Applies a d^B transform for the bound protection. Labels are used by
// Marvell only. Kinds that do not act on d^B return a copy of `d`.
Tensor2 protect_cut_gradient(const ProtectionBinding& binding, const Tensor2& d,
                             std::span<const int> labels, Rng& rng);

}  // namespace vfl
