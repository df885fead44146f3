#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vfl/tensor.h"

namespace vfl {

// Rank-statistic AUC in percent; ties count one half. Labels are 0/1.
double auc(std::span<const double> scores, std::span<const int> labels);

// Percent of predictions equal to labels.
double accuracy(std::span<const int> predictions, std::span<const int> labels);

std::vector<int> argmax_rows(const Tensor2& probabilities);

// Mean local SSIM (7x7 uniform window, C1 = 0.01^2, C2 = 0.03^2).
double ssim(const Tensor2& a, const Tensor2& b);

// Mean SSIM over rows, each row reshaped to a rows x cols image.
double mean_image_ssim(const Tensor2& reconstructed, const Tensor2& truth, std::size_t image_rows,
                       std::size_t image_cols);

}  // namespace vfl
