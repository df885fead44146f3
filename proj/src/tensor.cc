#include "vfl/tensor.h"

#include <algorithm>
#include <cmath>

#include "vfl/error.h"

namespace vfl {

Tensor2::Tensor2(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require_shape(data_.size() == rows_ * cols_, "tensor data length must equal rows*cols");
}

Tensor2::Tensor2(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    require_shape(r.size() == cols_, "ragged initializer for Tensor2");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Tensor2 Tensor2::row_vector(std::span<const double> values) {
  return Tensor2(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Tensor2 Tensor2::column_vector(std::span<const double> values) {
  return Tensor2(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

bool Tensor2::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor2::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Tensor2 Tensor2::transpose() const {
  Tensor2 out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  return out;
}

Tensor2 Tensor2::gather_rows(std::span<const std::size_t> indices) const {
  Tensor2 out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require_shape(indices[i] < rows_, "gather_rows index out of range");
    std::copy_n(data_.begin() + indices[i] * cols_, cols_, out.data_.begin() + i * cols_);
  }
  return out;
}

Tensor2 Tensor2::slice_cols(std::size_t begin, std::size_t end) const {
  require_shape(begin <= end && end <= cols_, "slice_cols range out of bounds");
  Tensor2 out(rows_, end - begin);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = (*this)(r, c);
  return out;
}

double Tensor2::row_norm(std::size_t r) const {
  double s = 0.0;
  for (double v : row(r)) s += v * v;
  return std::sqrt(s);
}

double Tensor2::sum() const {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

namespace {

template <typename Op>
Tensor2 zip(const Tensor2& a, const Tensor2& b, Op op, const char* name) {
  require_shape(a.same_shape(b), std::string(name) + ": shape mismatch " + a.shape_string() +
                                     " vs " + b.shape_string());
  Tensor2 out(a.rows(), a.cols());
  auto x = a.data();
  auto y = b.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = op(x[i], y[i]);
  return out;
}

}  // namespace

Tensor2 operator+(const Tensor2& a, const Tensor2& b) {
  return zip(a, b, [](double x, double y) { return x + y; }, "add");
}

Tensor2 operator-(const Tensor2& a, const Tensor2& b) {
  return zip(a, b, [](double x, double y) { return x - y; }, "sub");
}

Tensor2 hadamard(const Tensor2& a, const Tensor2& b) {
  return zip(a, b, [](double x, double y) { return x * y; }, "hadamard");
}

Tensor2 operator*(const Tensor2& a, double s) {
  Tensor2 out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

Tensor2 concat_cols(const Tensor2& a, const Tensor2& b) {
  require_shape(a.rows() == b.rows(), "concat_cols: row mismatch");
  Tensor2 out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy(a.row(r).begin(), a.row(r).end(), out.row(r).begin());
    std::copy(b.row(r).begin(), b.row(r).end(), out.row(r).begin() + a.cols());
  }
  return out;
}

double max_abs_diff(const Tensor2& a, const Tensor2& b) {
  require_shape(a.same_shape(b), "max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace vfl
