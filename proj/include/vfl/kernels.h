#pragma once

#include <cstddef>

#include "vfl/tensor.h"

// Data-parallel kernels. Each kernel in `vfl::kernels` is OpenMP-parallel over
// output rows; `vfl::kernels::reference` holds the plain serial versions the
// tests and benchmarks compare against. Every output element is accumulated
// by a single thread in a fixed order, so results do not depend on the
// thread count.
namespace vfl::kernels {

Tensor2 matmul(const Tensor2& a, const Tensor2& b);     // a * b
Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b);  // a^T * b
Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b);  // a * b^T

struct SsimParams {
  std::size_t window = 7;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
};

// Mean local SSIM over all fully-contained square windows.
double ssim_mean(const Tensor2& a, const Tensor2& b, const SsimParams& params = {});

// Work (multiply-adds) below which kernels stay serial.
inline constexpr std::size_t kParallelThreshold = 1 << 15;

namespace reference {

Tensor2 matmul(const Tensor2& a, const Tensor2& b);
Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b);
Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b);
double ssim_mean(const Tensor2& a, const Tensor2& b, const SsimParams& params = {});

}  // namespace reference
}  // namespace vfl::kernels
