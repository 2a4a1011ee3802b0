#pragma once

// Differentiable wrappers over the tensor kernels.

#include <optional>
#include <vector>

#include "txsp/autodiff.hpp"
#include "txsp/kernels.hpp"

namespace txsp::ad {

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
/// Elementwise product.
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, double s);
template <typename T>
Var<T> add_scalar(const Var<T>& a, double s);
template <typename T>
Var<T> square(const Var<T>& a);

/// Reductions to a [1,1,1,1] scalar.
template <typename T>
Var<T> sum(const Var<T>& a);
template <typename T>
Var<T> mean(const Var<T>& a);
template <typename T>
Var<T> abs_sum(const Var<T>& a);  // d|x|/dx at 0 is 0

template <typename T>
Var<T> relu(const Var<T>& x);  // subgradient 0 at 0
template <typename T>
Var<T> leaky_relu(const Var<T>& x, double slope);

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, std::type_identity_t<const std::optional<Var<T>>&> bias,
              const ConvSpec& spec);
template <typename T>
Var<T> transposed_conv2d(const Var<T>& x, const Var<T>& w, std::type_identity_t<const std::optional<Var<T>>&> bias);

/// Per-item filters: input[N,1,hi,wi], filters[N,C,kh,kw].
template <typename T>
Var<T> batched_transposed_conv(const Var<T>& input, const Var<T>& filters);

template <typename T>
Var<T> bilinear_upsample(const Var<T>& x, int out_h, int out_w);
template <typename T>
Var<T> upsample2x(const Var<T>& x) {
  return bilinear_upsample(x, 2 * x.shape().h, 2 * x.shape().w);
}

template <typename T>
Var<T> avg_pool_global(const Var<T>& x);

/// x[N,C,H,W] + b[N or 1,C,1,1] broadcast over space.
template <typename T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& b);

/// Running statistics are updated in place in train mode. Eval mode is an
/// affine map and stays differentiable w.r.t. x, gamma and beta.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  Tensor<T>& running_mean, Tensor<T>& running_var,
                  const kernels::BatchNormOptions& opt);

template <typename T>
Var<T> crop(const Var<T>& x, int top, int left, int ch, int cw);
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b);
/// Stacks along the batch axis.
template <typename T>
Var<T> concat_batch(const std::vector<Var<T>>& parts);
template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

/// Per item Gram matrix of the (HW) x C feature matrix, shaped [N,1,C,C].
template <typename T>
Var<T> gram(const Var<T>& x);

}  // namespace txsp::ad
