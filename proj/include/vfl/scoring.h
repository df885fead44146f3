#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <vector>

#include "vfl/attacks.h"
#include "vfl/engine.h"

namespace vfl {

// Chance-level AUC of a random classifier, the prior for label attacks
// that use no auxiliary data.
inline constexpr double kRandomClassifierAuc = 50.0;

// NS/DS/DL/RR/GI: posterior - prior (prior defaults to the random-classifier
// baseline). MC: posterior - prior, prior required. MI: the posterior
// (SSIM) itself; passing a prior is a contract error.
double privacy_leakage(AttackKind kind, double posterior, std::optional<double> prior = std::nullopt);

// Omega(g) - Omega(<g>); negative values are kept.
double utility_loss(double unprotected, double protected_utility);
double utility_loss(UtilityMetric unprotected_metric, double unprotected, UtilityMetric protected_metric,
                    double protected_utility);

int privacy_score(double eps_p);
int utility_score(double eps_u);
int pu_score(double eps_p, double eps_u);

struct StrengthPoint {
  double strength = 0.0;
  std::map<AttackKind, double> eps_p;
  double eps_u = 0.0;

  double max_eps_p() const;
};

struct OptimalScore {
  int score = 0;
  double strength = 0.0;
};

// Max over strengths of pu_score(max attack eps_p, eps_u). Every point must
// report every attack in `attacks`. Ties go to the stronger protection.
OptimalScore optimal_pu_score(const std::vector<StrengthPoint>& points,
                              const std::vector<AttackKind>& attacks, bool larger_is_stronger);

}  // namespace vfl
