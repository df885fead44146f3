#include "vfl/kernels.h"

#include <algorithm>
#include <vector>

#include "vfl/error.h"

namespace vfl::kernels {
namespace {

void check_mm(std::size_t inner_a, std::size_t inner_b, const Tensor2& a, const Tensor2& b,
              const char* name) {
  if (inner_a != inner_b)
    throw ShapeError(std::string(name) + ": inner dimension mismatch " + a.shape_string() +
                     " vs " + b.shape_string());
}

std::size_t ssim_window(const Tensor2& a, const Tensor2& b, const SsimParams& p) {
  require_shape(a.same_shape(b), "ssim: image shapes differ");
  require_shape(!a.empty(), "ssim: empty image");
  return std::min({p.window, a.rows(), a.cols()});
}

// SSIM of one window anchored at (r0, c0).
double ssim_window_value(const Tensor2& a, const Tensor2& b, std::size_t r0, std::size_t c0,
                         std::size_t w, const SsimParams& p) {
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (std::size_t r = r0; r < r0 + w; ++r)
    for (std::size_t c = c0; c < c0 + w; ++c) {
      const double x = a(r, c), y = b(r, c);
      sa += x;
      sb += y;
      saa += x * x;
      sbb += y * y;
      sab += x * y;
    }
  const double n = static_cast<double>(w * w);
  const double ma = sa / n, mb = sb / n;
  const double va = saa / n - ma * ma;
  const double vb = sbb / n - mb * mb;
  const double cov = sab / n - ma * mb;
  return ((2 * ma * mb + p.c1) * (2 * cov + p.c2)) /
         ((ma * ma + mb * mb + p.c1) * (va + vb + p.c2));
}

}  // namespace

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  check_mm(a.cols(), b.rows(), a, b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor2 out(m, n);
  const long long rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static) if (m * n * k >= kParallelThreshold)
  for (long long i = 0; i < rows; ++i) {
    auto orow = out.row(static_cast<std::size_t>(i));
    auto arow = a.row(static_cast<std::size_t>(i));
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      auto brow = b.row(p);
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b) {
  check_mm(a.rows(), b.rows(), a, b, "matmul_tn");
  const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
  Tensor2 out(m, n);
  const long long rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static) if (m * n * k >= kParallelThreshold)
  for (long long i = 0; i < rows; ++i) {
    auto orow = out.row(static_cast<std::size_t>(i));
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(p, static_cast<std::size_t>(i));
      if (av == 0.0) continue;
      auto brow = b.row(p);
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b) {
  check_mm(a.cols(), b.cols(), a, b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor2 out(m, n);
  const long long rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static) if (m * n * k >= kParallelThreshold)
  for (long long i = 0; i < rows; ++i) {
    auto arow = a.row(static_cast<std::size_t>(i));
    for (std::size_t j = 0; j < n; ++j) {
      auto brow = b.row(j);
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      out(static_cast<std::size_t>(i), j) = s;
    }
  }
  return out;
}

double ssim_mean(const Tensor2& a, const Tensor2& b, const SsimParams& params) {
  const std::size_t w = ssim_window(a, b, params);
  const std::size_t nr = a.rows() - w + 1, nc = a.cols() - w + 1;
  // Per-row partial sums, reduced serially afterwards, keep the result
  // independent of the thread count.
  std::vector<double> partial(nr, 0.0);
  const long long rows = static_cast<long long>(nr);
#pragma omp parallel for schedule(static) if (nr * nc * w * w >= kParallelThreshold)
  for (long long r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < nc; ++c)
      s += ssim_window_value(a, b, static_cast<std::size_t>(r), c, w, params);
    partial[static_cast<std::size_t>(r)] = s;
  }
  double total = 0.0;
  for (double s : partial) total += s;
  return total / static_cast<double>(nr * nc);
}

namespace reference {

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  check_mm(a.cols(), b.rows(), a, b, "matmul");
  Tensor2 out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      out(i, j) = s;
    }
  return out;
}

Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b) { return matmul(a.transpose(), b); }

Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b) { return matmul(a, b.transpose()); }

double ssim_mean(const Tensor2& a, const Tensor2& b, const SsimParams& params) {
  const std::size_t w = ssim_window(a, b, params);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r + w <= a.rows(); ++r)
    for (std::size_t c = 0; c + w <= a.cols(); ++c) {
      total += ssim_window_value(a, b, r, c, w, params);
      ++count;
    }
  return total / static_cast<double>(count);
}

}  // namespace reference
}  // namespace vfl::kernels
