#include "txsp/tensor.hpp"

#include <cmath>
#include <sstream>

namespace txsp {

std::string Shape::str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

void require(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

void require_nonempty(const Shape& s, const char* op) {
  if (s.empty()) throw ShapeError(std::string(op) + ": empty tensor " + s.str());
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(shape) {
  require(shape.n >= 0 && shape.c >= 0 && shape.h >= 0 && shape.w >= 0,
          "negative tensor extent " + shape.str());
  data_.assign(shape.count(), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
  require(data_.size() == shape.count(),
          "buffer length " + std::to_string(data_.size()) + " does not match " + shape.str());
}

template <typename T>
Tensor<T> Tensor<T>::randn(Shape shape, std::mt19937_64& rng, T stddev) {
  Tensor out(shape);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : out.data_) v = static_cast<T>(dist(rng)) * stddev;
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::uniform(Shape shape, std::mt19937_64& rng, T lo, T hi) {
  Tensor out(shape);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : out.data_) v = static_cast<T>(dist(rng));
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const& {
  require(shape.count() == data_.size(), "reshape " + shape_.str() + " -> " + shape.str());
  return Tensor(shape, data_);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) && {
  require(shape.count() == data_.size(), "reshape " + shape_.str() + " -> " + shape.str());
  return Tensor(shape, std::move(data_));
}

template <typename T>
Tensor<T> Tensor<T>::item(int n) const {
  require(n >= 0 && n < shape_.n, "batch index out of range");
  const std::size_t len = static_cast<std::size_t>(shape_.c) * shape_.plane();
  std::vector<T> buf(data_.begin() + n * len, data_.begin() + (n + 1) * len);
  return Tensor(Shape{1, shape_.c, shape_.h, shape_.w}, std::move(buf));
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "dot: shape mismatch");
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += double(a[i]) * double(b[i]);
  return acc;
}

template <typename T>
T max_abs(const Tensor<T>& a) {
  T m = 0;
  for (T v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

template <typename T>
double max_rel_diff(const Tensor<T>& a, const Tensor<T>& b, double floor) {
  require(a.shape() == b.shape(), "max_rel_diff: shape mismatch " + a.shape().str() +
                                      " vs " + b.shape().str());
  double num = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    num = std::max(num, std::abs(double(a[i]) - double(b[i])));
  return num / std::max(double(max_abs(b)), floor);
}

template class Tensor<float>;
template class Tensor<double>;
template double dot(const Tensor<float>&, const Tensor<float>&);
template double dot(const Tensor<double>&, const Tensor<double>&);
template float max_abs(const Tensor<float>&);
template double max_abs(const Tensor<double>&);
template double max_rel_diff(const Tensor<float>&, const Tensor<float>&, double);
template double max_rel_diff(const Tensor<double>&, const Tensor<double>&, double);

}  // namespace txsp
