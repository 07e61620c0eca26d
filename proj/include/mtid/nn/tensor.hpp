#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtid/scalar.hpp"

namespace mtid::nn {

/// Dense row-major 2-D array. Batched activations are stored as
/// [batch * length, channels]; the batch/length split travels with the op.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols, Scalar fill = 0);
  Tensor(int rows, int cols, std::vector<Scalar> data);

  static Tensor like(const Tensor& other, Scalar fill = 0) {
    return Tensor(other.rows_, other.cols_, fill);
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_str() const;

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> span() { return data_; }
  std::span<const Scalar> span() const { return data_; }
  std::vector<Scalar>& vec() & { return data_; }
  const std::vector<Scalar>& vec() const& { return data_; }
  std::vector<Scalar> vec() && { return std::move(data_); }

  Scalar& operator[](std::size_t i) { return data_[i]; }
  Scalar operator[](std::size_t i) const { return data_[i]; }
  Scalar& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  Scalar operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  Scalar* ptr(int r, int c) { return data_.data() + static_cast<std::size_t>(r) * cols_ + c; }
  const Scalar* ptr(int r, int c) const { return data_.data() + static_cast<std::size_t>(r) * cols_ + c; }

  std::span<Scalar> row(int r) { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }
  std::span<const Scalar> row(int r) const { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }

  void fill(Scalar v);
  void add_(const Tensor& other, Scalar scale = 1);
  Tensor reshaped(int rows, int cols) const;

  bool operator==(const Tensor& o) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<Scalar> data_;
};

Scalar max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

}  // namespace mtid::nn
