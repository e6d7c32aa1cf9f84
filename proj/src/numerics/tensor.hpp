#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "numerics/error.hpp"

namespace rohil {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// Dense row-major tensor. T is float in production and double for gradient checks.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, const std::vector<T>& data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    validate_shape();
    if (data_.size() != shape_size(shape_)) {
      fail(ErrorCode::kShapeMismatch, "tensor: " + std::to_string(data_.size()) +
                                          " elements for shape " + shape_str(shape_));
    }
  }

  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Leading extent for rank-2 tensors; 1 for vectors.
  std::size_t rows() const noexcept { return shape_.size() == 2 ? shape_[0] : 1; }
  std::size_t cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  T item() const {
    if (data_.size() != 1) fail(ErrorCode::kShapeMismatch, "item() on tensor of shape " + shape_str(shape_));
    return data_[0];
  }

  // x * 0 is NaN exactly for non-finite x, so one vectorized sum answers for the whole tensor.
  bool all_finite() const {
    const Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> a(data_.data(), static_cast<Eigen::Index>(data_.size()));
    return (a * T(0)).sum() == T(0);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void validate_shape() const {
    if (shape_.empty()) fail(ErrorCode::kShapeMismatch, "tensor: empty shape");
    for (std::size_t e : shape_) {
      if (e == 0) fail(ErrorCode::kShapeMismatch, "tensor: zero extent in " + shape_str(shape_));
    }
  }

  // Eigen's vectorized reductions peel unaligned leading elements, so the
  // summation order would depend on where the buffer landed. Max-aligned
  // storage keeps every result independent of the allocation address.
  using Storage = std::vector<T, Eigen::aligned_allocator<T>>;

  Shape shape_;
  Storage data_;
};

}  // namespace rohil
