#pragma once

#include <vector>

#include "txsp/ops.hpp"

namespace txsp {

/// Guard added to the overlap energy in the score denominator. A shift whose
/// un-shifted overlap is identically zero scores 0.
inline constexpr double kSelfSimEpsilon = 1e-8;

/// Scores for every integer shift of a feature map against itself.
/// scores has shape [N,1,H+1,W+1]; entry (a, b) is the score of shift
/// (p, q) = (a - H/2, b - W/2), with p in [-H/2, H/2] and q in [-W/2, W/2].
/// The zero shift sits at the centre and scores 0; every other entry is <= 0.
template <typename T>
struct SelfSimMap {
  Tensor<T> scores;
  int source_h = 0;
  int source_w = 0;
};

/// Convolution-decomposed self-similarity:
///   s = -(A - 2B + D) / A
/// where, over the overlap region of each shift,
///   A = sum F(m,n)^2          (channel-summed F^2 against an all-ones filter),
///   B = sum F(m,n)F(m-p,n-q)  (zero-padded F against F as the filter),
///   D = sum F(m-p,n-q)^2      (centre-indicator map against F^2 as the filter).
/// Evaluated in double regardless of T. H and W must be even.
template <typename T>
SelfSimMap<T> selfsim_fast(const Tensor<T>& features);

/// Differentiable self-similarity (same values as selfsim_fast).
template <typename T>
ad::Var<T> selfsim(const ad::Var<T>& features);

/// One map per scale, in input order.
template <typename T>
std::vector<SelfSimMap<T>> selfsim_multiscale(const std::vector<Tensor<T>>& features);

/// Learned post-transform of a score map: 3x3 conv 1->8, ReLU, 3x3 conv 8->1,
/// both partial-padded by 1 so the spatial size is preserved.
template <typename T>
struct SimTransformParams {
  Tensor<T> conv1_w{Shape{8, 1, 3, 3}};
  Tensor<T> conv1_b{Shape{8, 1, 1, 1}};
  Tensor<T> conv2_w{Shape{1, 8, 3, 3}};
  Tensor<T> conv2_b{Shape{1, 1, 1, 1}};
};

template <typename T>
ad::Var<T> selfsim_transform(const ad::Var<T>& map, const ad::Var<T>& conv1_w,
                             const ad::Var<T>& conv1_b, const ad::Var<T>& conv2_w,
                             const ad::Var<T>& conv2_b);

template <typename T>
Tensor<T> selfsim_transform(const Tensor<T>& map, const SimTransformParams<T>& params);

}  // namespace txsp
