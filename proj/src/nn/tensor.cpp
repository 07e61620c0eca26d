#include "mtid/nn/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "mtid/error.hpp"

namespace mtid::nn {

Tensor::Tensor(int rows, int cols, Scalar fill)
    : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
  if (rows < 0 || cols < 0) throw Error(Errc::kShapeMismatch, "negative tensor extent");
}

Tensor::Tensor(int rows, int cols, std::vector<Scalar> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != static_cast<std::size_t>(rows) * cols) {
    throw Error(Errc::kShapeMismatch, "data size does not match " + shape_str());
  }
}

std::string Tensor::shape_str() const {
  return "[" + std::to_string(rows_) + ", " + std::to_string(cols_) + "]";
}

void Tensor::fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add_(const Tensor& other, Scalar scale) {
  if (!same_shape(other)) {
    throw Error(Errc::kShapeMismatch, shape_str() + " += " + other.shape_str());
  }
  const std::size_t n = data_.size();
  const Scalar* src = other.data();
  Scalar* dst = data_.data();
  for (std::size_t i = 0; i < n; ++i) dst[i] += scale * src[i];
}

Tensor Tensor::reshaped(int rows, int cols) const {
  if (static_cast<std::size_t>(rows) * cols != data_.size()) {
    throw Error(Errc::kShapeMismatch, "cannot reshape " + shape_str());
  }
  return Tensor(rows, cols, data_);
}

Scalar max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw Error(Errc::kShapeMismatch, a.shape_str() + " vs " + b.shape_str());
  Scalar m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.vec().begin(), t.vec().end(), [](Scalar v) { return std::isfinite(v); });
}

}  // namespace mtid::nn
