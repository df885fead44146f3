#include "vfl/metrics.h"

#include <algorithm>
#include <numeric>

#include "vfl/error.h"
#include "vfl/kernels.h"

namespace vfl {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw ShapeError("auc: " + std::to_string(scores.size()) + " scores for " +
                     std::to_string(labels.size()) + " labels");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return scores[i] < scores[j]; });
  // Sum of positive ranks with average ranks over tie groups.
  double rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (labels[order[t]] == 1) {
        rank_sum += avg_rank;
        ++positives;
      }
    i = j;
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw MetricError("auc: both classes must be present");
  const double np = static_cast<double>(positives), nn = static_cast<double>(negatives);
  return 100.0 * (rank_sum - np * (np + 1) / 2.0) / (np * nn);
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw ShapeError("accuracy: length mismatch");
  if (labels.empty()) throw MetricError("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<int> argmax_rows(const Tensor2& p) {
  std::vector<int> out(p.rows());
  for (std::size_t r = 0; r < p.rows(); ++r) {
    auto row = p.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double ssim(const Tensor2& a, const Tensor2& b) {
  require_shape(a.same_shape(b), "ssim: shapes " + a.shape_string() + " and " + b.shape_string());
  return kernels::ssim_mean(a, b);
}

double mean_image_ssim(const Tensor2& reconstructed, const Tensor2& truth, std::size_t image_rows,
                       std::size_t image_cols) {
  require_shape(reconstructed.same_shape(truth), "mean_image_ssim: shape mismatch");
  require_shape(image_rows * image_cols == truth.cols(), "mean_image_ssim: image dims do not match row width");
  if (truth.rows() == 0) throw MetricError("mean_image_ssim: no images");
  double total = 0.0;
  for (std::size_t i = 0; i < truth.rows(); ++i) {
    const auto ra = reconstructed.row(i), rb = truth.row(i);
    Tensor2 a(image_rows, image_cols, std::vector<double>(ra.begin(), ra.end()));
    Tensor2 b(image_rows, image_cols, std::vector<double>(rb.begin(), rb.end()));
    total += kernels::ssim_mean(a, b);
  }
  return total / static_cast<double>(truth.rows());
}

}  // namespace vfl
