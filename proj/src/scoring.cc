#include "vfl/scoring.h"

#include <algorithm>

#include "vfl/error.h"

namespace vfl {

double privacy_leakage(AttackKind kind, double posterior, std::optional<double> prior) {
  switch (kind) {
    case AttackKind::kMc:
      if (!prior) throw ContractError("privacy_leakage: MC needs the local-model baseline as prior");
      return posterior - *prior;
    case AttackKind::kMi:
      if (prior) throw ContractError("privacy_leakage: MI leakage is the SSIM itself, no prior");
      return posterior;
    default:
      return posterior - prior.value_or(kRandomClassifierAuc);
  }
}

double utility_loss(double unprotected, double protected_utility) {
  return unprotected - protected_utility;
}

double utility_loss(UtilityMetric unprotected_metric, double unprotected, UtilityMetric protected_metric,
                    double protected_utility) {
  if (unprotected_metric != protected_metric)
    throw ContractError("utility_loss: utilities measured with different metrics");
  return utility_loss(unprotected, protected_utility);
}

namespace {

int band(double v, const double (&upper)[5]) {
  // Score 5 - i for the first upper bound that covers v; 0 past the last.
  for (int i = 0; i < 5; ++i)
    if (v <= upper[i]) return 5 - i;
  return 0;
}

}  // namespace

int privacy_score(double eps_p) {
  static constexpr double kUpper[5] = {5, 10, 15, 20, 25};
  return band(eps_p, kUpper);
}

int utility_score(double eps_u) {
  static constexpr double kUpper[5] = {0.5, 1, 2, 4, 6};
  return band(eps_u, kUpper);
}

int pu_score(double eps_p, double eps_u) { return std::min(privacy_score(eps_p), utility_score(eps_u)); }

double StrengthPoint::max_eps_p() const {
  if (eps_p.empty()) throw ContractError("StrengthPoint: no attack results");
  double m = eps_p.begin()->second;
  for (const auto& [k, v] : eps_p) m = std::max(m, v);
  return m;
}

OptimalScore optimal_pu_score(const std::vector<StrengthPoint>& points,
                              const std::vector<AttackKind>& attacks, bool larger_is_stronger) {
  if (points.empty()) throw ContractError("optimal_pu_score: no strengths evaluated");
  std::optional<OptimalScore> best;
  for (const auto& p : points) {
    for (AttackKind a : attacks)
      if (!p.eps_p.count(a))
        throw ContractError(std::string("optimal_pu_score: attack ") + to_string(a) +
                            " missing at strength " + std::to_string(p.strength));
    const int s = pu_score(p.max_eps_p(), p.eps_u);
    const bool stronger = larger_is_stronger ? p.strength > (best ? best->strength : 0)
                                             : p.strength < (best ? best->strength : 0);
    if (!best || s > best->score || (s == best->score && stronger)) best = OptimalScore{s, p.strength};
  }
  return *best;
}

}  // namespace vfl
