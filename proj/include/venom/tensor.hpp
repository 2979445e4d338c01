#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "venom/errors.hpp"
#include "venom/rng.hpp"

namespace venom {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Dense row-major array of doubles. Value type; the autodiff tape owns
/// gradient buffers, not the tensor.
/// Storage is aligned so Eigen picks the same kernel path for every buffer;
/// with unaligned heads the summation order (and the last bits) would depend
/// on where the allocator happened to put the data.
class Tensor {
 public:
  using Storage = std::vector<double, Eigen::aligned_allocator<double>>;

  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    check_extents();
  }

  Tensor(Shape shape, const std::vector<double>& data)
      : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    check_extents();
    require(data_.size() == shape_size(shape_),
            "tensor data length " + std::to_string(data_.size()) +
                " does not match shape " + shape_string(shape_));
  }

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  static Tensor normal(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data_) v = rng.normal();
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  /// Leading extent for a matrix view; rank-1 tensors act as one row.
  std::size_t rows() const { return rank() <= 1 ? 1 : shape_size(Shape(shape_.begin(), shape_.end() - 1)); }
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  double item() const {
    require(size() == 1, "item() on tensor of shape " + shape_string(shape_));
    return data_[0];
  }

  Tensor reshaped(Shape shape) const {
    require(shape_size(shape) == size(), "reshape " + shape_string(shape_) +
                                             " -> " + shape_string(shape));
    Tensor out = *this;
    out.shape_ = std::move(shape);
    return out;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  void check_extents() const {
    for (std::size_t e : shape_)
      require(e > 0, "tensor extents must be positive, got " + shape_string(shape_));
  }

  Shape shape_;
  Storage data_;
};

// Small elementwise helpers used outside the tape (sampling loops, metrics).

inline Tensor operator+(Tensor a, const Tensor& b) {
  require(a.shape() == b.shape(), "shape mismatch in +");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

inline Tensor operator-(Tensor a, const Tensor& b) {
  require(a.shape() == b.shape(), "shape mismatch in -");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
  return a;
}

inline Tensor operator*(double s, Tensor a) {
  for (double& v : a.values()) v *= s;
  return a;
}

/// a + s*b
inline Tensor axpy(Tensor a, double s, const Tensor& b) {
  require(a.shape() == b.shape(), "shape mismatch in axpy");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
  return a;
}

inline double dot(const Tensor& a, const Tensor& b) {
  require(a.size() == b.size(), "size mismatch in dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

inline double mean_squared_error(const Tensor& a, const Tensor& b) {
  require(a.size() == b.size(), "size mismatch in mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

inline Tensor clipped(Tensor a, double lo = -1.0, double hi = 1.0) {
  for (double& v : a.values()) v = std::clamp(v, lo, hi);
  return a;
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace venom
