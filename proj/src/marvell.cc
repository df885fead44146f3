#include "vfl/marvell.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vfl/error.h"

namespace vfl {
namespace {

std::vector<double> column_means(const Tensor2& x) {
  std::vector<double> m(x.cols(), 0.0);
  if (x.rows() == 0) return m;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) m[c] += x(r, c);
  for (double& v : m) v /= static_cast<double>(x.rows());
  return m;
}

// (parallel variance, perpendicular variance) of rows around their mean.
std::pair<double, double> split_variance(const Tensor2& x, const std::vector<double>& mean,
                                         const std::vector<double>& u) {
  if (x.rows() == 0) return {0.0, 0.0};
  double total = 0.0, along = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double proj = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double dev = x(r, c) - mean[c];
      total += dev * dev;
      proj += dev * u[c];
    }
    along += proj * proj;
  }
  const auto n = static_cast<double>(x.rows());
  return {along / n, std::max(0.0, total - along) / n};
}

// ratio + 1/ratio - 2, with 0/0 treated as equal variances.
double ratio_term(double x, double y) {
  constexpr double kTiny = 1e-300;
  if (x <= kTiny && y <= kTiny) return 0.0;
  if (x <= kTiny || y <= kTiny) return std::numeric_limits<double>::infinity();
  return x / y + y / x - 2.0;
}

}  // namespace

MarvellStats marvell_stats(const Tensor2& positive_grads, const Tensor2& negative_grads) {
  const std::size_t m = std::max(positive_grads.cols(), negative_grads.cols());
  if (positive_grads.rows() > 0 && negative_grads.rows() > 0)
    require_shape(positive_grads.cols() == negative_grads.cols(),
                  "marvell: class gradient widths differ");
  MarvellStats s;
  s.dims = m;
  const auto mp = column_means(positive_grads);
  const auto mn = column_means(negative_grads);
  s.direction.assign(m, 0.0);
  if (positive_grads.rows() > 0 && negative_grads.rows() > 0) {
    for (std::size_t c = 0; c < m; ++c) {
      s.direction[c] = mp[c] - mn[c];
      s.mean_gap_sq += s.direction[c] * s.direction[c];
    }
  }
  if (s.mean_gap_sq > 0) {
    const double n = std::sqrt(s.mean_gap_sq);
    for (double& v : s.direction) v /= n;
  } else if (m > 0) {
    s.direction[0] = 1.0;
  }
  std::tie(s.pos_parallel, s.pos_perp) = split_variance(positive_grads, mp, s.direction);
  std::tie(s.neg_parallel, s.neg_perp) = split_variance(negative_grads, mn, s.direction);
  const double total = static_cast<double>(positive_grads.rows() + negative_grads.rows());
  s.positive_fraction = total > 0 ? static_cast<double>(positive_grads.rows()) / total : 0.0;
  return s;
}

double marvell_objective(const MarvellStats& s, double pos_parallel, double pos_perp,
                         double neg_parallel, double neg_perp) {
  const double a1 = s.pos_parallel + pos_parallel, a0 = s.neg_parallel + neg_parallel;
  const double b1 = s.pos_perp + pos_perp, b0 = s.neg_perp + neg_perp;
  double kl = 0.5 * ratio_term(a1, a0);
  // The m-1 perpendicular directions share one per-dimension variance ratio.
  if (s.dims > 1) kl += 0.5 * static_cast<double>(s.dims - 1) * ratio_term(b1, b0);
  if (s.mean_gap_sq > 0) {
    if (a0 <= 0 || a1 <= 0) return std::numeric_limits<double>::infinity();
    kl += 0.5 * s.mean_gap_sq * (1.0 / a0 + 1.0 / a1);
  }
  return kl;
}

MarvellSolution marvell_isotropic(const MarvellStats& s, double budget) {
  MarvellSolution sol;
  sol.direction = s.direction;
  sol.positive_fraction = s.positive_fraction;
  sol.budget = budget;
  const double m = static_cast<double>(std::max<std::size_t>(s.dims, 1));
  const double p = std::max(0.0, budget);
  sol.pos_parallel = sol.neg_parallel = p / m;
  sol.pos_perp = sol.neg_perp = p * (m - 1) / m;
  sol.objective = marvell_objective(s, sol.pos_parallel, sol.pos_perp, sol.neg_parallel, sol.neg_perp);
  sol.isotropic_fallback = true;
  return sol;
}

MarvellSolution marvell_solve(const Tensor2& positive_grads, const Tensor2& negative_grads,
                              double budget) {
  if (positive_grads.rows() == 0 || negative_grads.rows() == 0)
    throw ContractError("marvell_solve: both classes must be present");
  if (!(budget >= 0)) throw ConfigError("marvell_solve: budget must be >= 0");
  const MarvellStats s = marvell_stats(positive_grads, negative_grads);
  MarvellSolution sol = marvell_isotropic(s, budget);
  sol.isotropic_fallback = false;
  if (budget == 0) return sol;

  // Variables x = (a1, b1, a0, b0) with budget weights w; moving t units of
  // budget from j to i keeps the weighted sum fixed.
  const double rho = s.positive_fraction;
  const double w[4] = {rho, rho, 1 - rho, 1 - rho};
  double x[4] = {sol.pos_parallel, sol.pos_perp, sol.neg_parallel, sol.neg_perp};
  auto f = [&](const double* v) { return marvell_objective(s, v[0], v[1], v[2], v[3]); };
  double best = f(x);
  const int active = s.dims > 1 ? 4 : 2;
  auto index = [&](int k) { return s.dims > 1 ? k : 2 * k; };  // m == 1: parallel only

  for (int sweep = 0; sweep < 200; ++sweep) {
    const double before = best;
    for (int pi = 0; pi < active; ++pi)
      for (int pj = pi + 1; pj < active; ++pj) {
        const int i = index(pi), j = index(pj);
        // t in [-w_i x_i, w_j x_j] keeps both coordinates non-negative.
        double lo = -w[i] * x[i], hi = w[j] * x[j];
        if (hi - lo <= 0) continue;
        auto moved = [&](double t, double* out) {
          std::copy(x, x + 4, out);
          out[i] = std::max(0.0, x[i] + t / w[i]);
          out[j] = std::max(0.0, x[j] - t / w[j]);
        };
        auto g = [&](double t) {
          double v[4];
          moved(t, v);
          return f(v);
        };
        constexpr double kPhi = 0.6180339887498949;
        double a = lo, b = hi;
        double c = b - kPhi * (b - a), d = a + kPhi * (b - a);
        double fc = g(c), fd = g(d);
        for (int it = 0; it < 80 && b - a > 1e-15 * (hi - lo); ++it) {
          if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - kPhi * (b - a);
            fc = g(c);
          } else {
            a = c;
            c = d;
            fc = fd;
            d = a + kPhi * (b - a);
            fd = g(d);
          }
        }
        const double t = 0.5 * (a + b);
        const double ft = g(t);
        if (ft < best) {
          double v[4];
          moved(t, v);
          std::copy(v, v + 4, x);
          best = ft;
        }
      }
    if (!(best < before - 1e-12 * std::max(1.0, std::abs(before)))) break;
  }

  sol.pos_parallel = x[0];
  sol.pos_perp = x[1];
  sol.neg_parallel = x[2];
  sol.neg_perp = x[3];
  // Clip rounding drift so the budget holds.
  const double used = sol.expected_trace();
  if (used > budget && used > 0) {
    const double k = budget / used;
    sol.pos_parallel *= k;
    sol.pos_perp *= k;
    sol.neg_parallel *= k;
    sol.neg_perp *= k;
  }
  sol.objective = f(x);
  return sol;
}

Tensor2 marvell_apply(const Tensor2& d, std::span<const int> labels, const MarvellSolution& sol,
                      Rng& rng) {
  require_shape(labels.size() == d.rows(), "marvell_apply: label count differs from rows");
  const std::size_t m = d.cols();
  require_shape(sol.direction.size() == m, "marvell_apply: direction width differs from d");
  Tensor2 out = d;
  std::vector<double> z(m);
  for (std::size_t r = 0; r < d.rows(); ++r) {
    if (labels[r] != 0 && labels[r] != 1)
      throw ConfigError("marvell: binary labels only (got label " + std::to_string(labels[r]) + ")");
    const bool pos = labels[r] == 1;
    const double a = pos ? sol.pos_parallel : sol.neg_parallel;
    const double b = pos ? sol.pos_perp : sol.neg_perp;
    if (a == 0 && b == 0) continue;
    const double along = std::sqrt(a) * rng.normal();
    // Perpendicular part: project an isotropic draw off u.
    double proj = 0.0;
    for (std::size_t c = 0; c < m; ++c) proj += (z[c] = rng.normal()) * sol.direction[c];
    const double perp_scale = m > 1 ? std::sqrt(b / static_cast<double>(m - 1)) : 0.0;
    auto row = out.row(r);
    for (std::size_t c = 0; c < m; ++c)
      row[c] += along * sol.direction[c] + perp_scale * (z[c] - proj * sol.direction[c]);
  }
  return out;
}

}  // namespace vfl
