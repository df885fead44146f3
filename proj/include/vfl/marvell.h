#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vfl/rng.h"
#include "vfl/tensor.h"

namespace vfl {

// Per-class gradient statistics projected onto the mean-difference direction.
struct MarvellStats {
  std::size_t dims = 0;
  std::vector<double> direction;  // unit vector u
  double mean_gap_sq = 0.0;       // ||mean(pos) - mean(neg)||^2
  double pos_parallel = 0.0;      // variance of pos rows along u
  double pos_perp = 0.0;          // remaining pos variance (trace minus parallel)
  double neg_parallel = 0.0;
  double neg_perp = 0.0;
  double positive_fraction = 0.0;
};

// Noise pair within the family a*uu^T + b*(I - uu^T)/(m-1), one per class.
// Each trace (a + b) is the expected squared norm of that class's noise.
struct MarvellSolution {
  std::vector<double> direction;
  double pos_parallel = 0.0;
  double pos_perp = 0.0;
  double neg_parallel = 0.0;
  double neg_perp = 0.0;
  double positive_fraction = 0.0;
  double budget = 0.0;
  double objective = 0.0;
  // True when the batch held a single class and noise is isotropic.
  bool isotropic_fallback = false;

  double expected_trace() const {
    return positive_fraction * (pos_parallel + pos_perp) +
           (1.0 - positive_fraction) * (neg_parallel + neg_perp);
  }
};

MarvellStats marvell_stats(const Tensor2& positive_grads, const Tensor2& negative_grads);

// Symmetrised KL between the two perturbed class Gaussians.
double marvell_objective(const MarvellStats& stats, double pos_parallel, double pos_perp,
                         double neg_parallel, double neg_perp);

// Minimises the objective subject to
//   rho * (a1 + b1) + (1 - rho) * (a0 + b0) <= budget.
MarvellSolution marvell_solve(const Tensor2& positive_grads, const Tensor2& negative_grads,
                              double budget);

// Isotropic noise with the same expected trace, used when only one class is
// present and as the baseline the solver must beat.
MarvellSolution marvell_isotropic(const MarvellStats& stats, double budget);

// Adds class-dependent noise to each row; labels must be 0/1.
Tensor2 marvell_apply(const Tensor2& d, std::span<const int> labels, const MarvellSolution& sol,
                      Rng& rng);

}  // namespace vfl
