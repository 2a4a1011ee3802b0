#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "txsp/params.hpp"
#include "txsp/selfsim.hpp"

namespace txsp {

/// Expands features[N,C,H,W] to [N,C,2H,2W] with a stride-1 transposed
/// convolution whose input is the score map [N,1,H+1,W+1] and whose filter is
/// each item's own feature map.
template <typename T>
Tensor<T> expand_via_transposed_conv(const Tensor<T>& features, const Tensor<T>& scores);

/// Differentiable expansion for any input-map size: the output extent per
/// axis is map + feature - 1.
template <typename T>
ad::Var<T> expand(const ad::Var<T>& features, const ad::Var<T>& map);

/// Parameter names and extents of one expansion block with `channels`
/// feature channels, prefixed by `prefix` (e.g. "block3").
std::vector<ParamSpec> transconv_block_layout(const std::string& prefix, int channels);

/// filter  = conv2(relu(conv1(encoded)))
/// input   = sim_transform(sim_or_noise)
/// bias    = fc(avg_pool(encoded)), per item and channel
/// output  = relu(output_conv(transposed_conv(input, filter) + bias))
template <typename T>
ad::Var<T> transconv_block_forward(Binder<T>& params, const std::string& prefix,
                                   const ad::Var<T>& encoded, const ad::Var<T>& sim_or_noise);

/// Noise maps for the 1/16, 1/8 and 1/4 scale blocks (in that order). The
/// smallest is i.i.d. standard normal of n5h x n5w; the others are bilinear
/// resizes to (2n - 1) and (4n - 3) per axis, the sizes the decoder's skip
/// sums require.
template <typename T>
std::array<Tensor<T>, 3> make_noise_maps(int n5h, int n5w, std::mt19937_64& rng, int batch = 1);

/// Synthesised extent per axis for a noise map of n5 at the 1/16 scale:
/// 16 * n5 + input - 16.
constexpr int noise_output_extent(int input_extent, int n5) { return 16 * n5 + input_extent - 16; }

}  // namespace txsp
