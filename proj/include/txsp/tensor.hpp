#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "txsp/errors.hpp"

namespace txsp {

/// NCHW extents. Any zero extent makes the tensor empty.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  bool empty() const noexcept { return count() == 0; }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense rank-4 tensor, W-fastest row-major storage.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);
  Tensor(int n, int c, int h, int w, T fill = T(0)) : Tensor(Shape{n, c, h, w}, fill) {}

  static Tensor randn(Shape shape, std::mt19937_64& rng, T stddev = T(1));
  static Tensor uniform(Shape shape, std::mt19937_64& rng, T lo, T hi);

  const Shape& shape() const noexcept { return shape_; }
  int n() const noexcept { return shape_.n; }
  int c() const noexcept { return shape_.c; }
  int h() const noexcept { return shape_.h; }
  int w() const noexcept { return shape_.w; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }

  std::size_t index(int n, int c, int h, int w) const noexcept {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& operator()(int n, int c, int h, int w) noexcept { return data_[index(n, c, h, w)]; }
  const T& operator()(int n, int c, int h, int w) const noexcept {
    return data_[index(n, c, h, w)];
  }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Pointer to the (n, c) plane.
  T* plane(int n, int c) noexcept { return data_.data() + index(n, c, 0, 0); }
  const T* plane(int n, int c) const noexcept { return data_.data() + index(n, c, 0, 0); }

  /// Same buffer, new extents; element count must match.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  /// Single batch item as an N=1 tensor.
  Tensor item(int n) const;

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data().begin(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_{};
  std::vector<T> data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

/// Border handling for convolutions. PartialZero rescales each output by
/// (kernel taps) / (in-bounds taps) before the bias is added.
struct PaddingMode {
  enum class Kind { None, Zero, PartialZero };
  Kind kind = Kind::None;
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;

  static PaddingMode none() { return {}; }
  static PaddingMode zero(int p) { return {Kind::Zero, p, p, p, p}; }
  static PaddingMode zero(int t, int b, int l, int r) { return {Kind::Zero, t, b, l, r}; }
  static PaddingMode partial(int p) { return {Kind::PartialZero, p, p, p, p}; }
  static PaddingMode partial(int t, int b, int l, int r) {
    return {Kind::PartialZero, t, b, l, r};
  }

  friend bool operator==(const PaddingMode&, const PaddingMode&) = default;
};

/// Cross-correlation (no filter flip).
struct ConvSpec {
  int stride = 1;
  PaddingMode padding{};
};

void require(bool cond, const std::string& what);  // throws ShapeError
void require_nonempty(const Shape& s, const char* op);

/// Sum of elementwise products, accumulated in double.
template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
T max_abs(const Tensor<T>& a);

/// max|a - b| / max(max|b|, floor); the norm-wise relative error used in tests.
template <typename T>
double max_rel_diff(const Tensor<T>& a, const Tensor<T>& b, double floor = 1e-30);

}  // namespace txsp
