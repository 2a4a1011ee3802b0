#pragma once

// Serial, loop-for-loop reference implementations. They follow the defining
// formulas directly, accumulate in double, and exist to check the fast kernels
// (tests) and to measure them (bench). Nothing in the main library uses them.

#include <type_traits>
#include "txsp/tensor.hpp"

namespace txsp::reference {

/// Direct six-loop cross-correlation with zero/partial padding and stride.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::type_identity_t<const Tensor<T>*> bias,
                 const ConvSpec& spec);

/// out(n,co,i+di,j+dj) += x(n,ci,i,j) * w(ci,co,di,dj).
template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& x, const Tensor<T>& w, std::type_identity_t<const Tensor<T>*> bias);

/// Self-similarity scores by explicit loops over every shift and its overlap
/// region. Entry (a, b) holds the score for shift (a - H/2, b - W/2).
template <typename T>
Tensor<T> selfsim_naive(const Tensor<T>& features);

/// Paste-and-accumulate expansion: every shifted copy of the feature map is
/// weighted by its score and summed on the 2H x 2W grid.
template <typename T>
Tensor<T> paste_accumulate(const Tensor<T>& features, const Tensor<T>& scores);

}  // namespace txsp::reference
