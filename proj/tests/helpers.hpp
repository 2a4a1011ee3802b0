#pragma once

#include <cmath>
#include <random>

#include <doctest.h>

#include "kinks.hpp"
#include "txsp/tensor.hpp"

namespace th {

template <typename T>
txsp::Tensor<T> randn(txsp::Shape s, std::uint64_t seed, double stddev = 1.0) {
  std::mt19937_64 rng(seed);
  return txsp::Tensor<T>::randn(s, rng, static_cast<T>(stddev));
}

template <typename T>
txsp::Tensor<T> from(txsp::Shape s, std::initializer_list<double> v) {
  std::vector<T> data;
  for (double x : v) data.push_back(static_cast<T>(x));
  return txsp::Tensor<T>(s, std::move(data));
}

template <typename T>
void check_all(const txsp::Tensor<T>& t, double value, double tol = 0) {
  for (std::size_t i = 0; i < t.size(); ++i) REQUIRE(std::abs(t[i] - value) <= tol);
}

}  // namespace th
