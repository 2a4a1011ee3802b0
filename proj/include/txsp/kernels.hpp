#pragma once

// Forward and backward numeric kernels. All functions are pure; work is
// split with OpenMP over independent output planes or row blocks so that
// results do not depend on the thread count.

#include <random>
#include <type_traits>
#include <utility>

#include "txsp/tensor.hpp"

namespace txsp::kernels {

/// floor((in + pad_lo + pad_hi - k) / stride) + 1, or a ShapeError when the
/// kernel does not fit.
int conv_out_extent(int in, int pad_lo, int pad_hi, int k, int stride);

/// Per-output-position partial-padding weights (taps / in-bounds taps) as an
/// H'xW' plane. All ones for Kind::None and Kind::Zero.
std::vector<double> partial_ratio(int in_h, int in_w, int kh, int kw, const ConvSpec& spec);

// ---------------------------------------------------------------- conv2d

/// x[N,Cin,H,W] (*) w[Cout,Cin,Kh,Kw] -> [N,Cout,H',W']. `bias` may be null and
/// otherwise holds Cout values in any shape.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::type_identity_t<const Tensor<T>*> bias,
                 const ConvSpec& spec);

/// Gradient w.r.t. x for an upstream gradient `gout` of a conv2d call. The
/// partial-padding ratio is applied here, so pass the raw upstream gradient.
template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& gout, const Tensor<T>& w, const Shape& x_shape,
                                const ConvSpec& spec);

template <typename T>
Tensor<T> conv2d_backward_filter(const Tensor<T>& gout, const Tensor<T>& x, const Shape& w_shape,
                                 const ConvSpec& spec);

/// Sum of gout over (N, H, W) per channel, shaped [1,C,1,1].
template <typename T>
Tensor<T> channel_sum(const Tensor<T>& gout);

// ---------------------------------------------------- transposed conv, s=1

/// x[N,Cin,Hi,Wi], w[Cin,Cout,Kh,Kw] -> [N,Cout,Hi+Kh-1,Wi+Kw-1].
template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& x, const Tensor<T>& w, std::type_identity_t<const Tensor<T>*> bias);

template <typename T>
Tensor<T> transposed_conv2d_backward_filter(const Tensor<T>& gout, const Tensor<T>& x,
                                            const Shape& w_shape);

/// Transposed conv where every batch item carries its own filter:
/// input[N,1,hi,wi], filters[N,C,kh,kw] -> [N,C,hi+kh-1,wi+kw-1].
template <typename T>
Tensor<T> batched_transposed_conv(const Tensor<T>& input, const Tensor<T>& filters);

template <typename T>
Tensor<T> batched_transposed_conv_backward_input(const Tensor<T>& gout, const Tensor<T>& filters,
                                                 const Shape& input_shape);

template <typename T>
Tensor<T> batched_transposed_conv_backward_filter(const Tensor<T>& gout, const Tensor<T>& input,
                                                  const Shape& filter_shape);

// ------------------------------------------------------------ resampling

/// Half-pixel-centre bilinear resize (align_corners = false).
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int out_h, int out_w);

template <typename T>
Tensor<T> bilinear_upsample_backward(const Tensor<T>& gout, const Shape& in_shape);

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x) {
  return bilinear_upsample(x, 2 * x.h(), 2 * x.w());
}

template <typename T>
Tensor<T> avg_pool_global(const Tensor<T>& x);

// ------------------------------------------------------------ batch norm

struct BatchNormOptions {
  bool train = true;
  double momentum = 0.1;
  double eps = 1e-5;
};

template <typename T>
struct BatchNormResult {
  Tensor<T> y;
  std::vector<double> mean;    // statistics used for normalisation
  std::vector<double> invstd;
};

/// Train mode normalises with biased batch variance over (N,H,W) and updates
/// the running stats (running_var receives the unbiased estimate).
template <typename T>
BatchNormResult<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                              Tensor<T>& running_mean, Tensor<T>& running_var,
                              const BatchNormOptions& opt);

// ------------------------------------------------------------ elementwise

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope);

// ------------------------------------------------------------ cropping

template <typename T>
Tensor<T> crop(const Tensor<T>& x, int top, int left, int ch, int cw);

template <typename T>
Tensor<T> center_crop(const Tensor<T>& x, int ch, int cw);

struct CropAnchor {
  int top = 0;
  int left = 0;
  friend bool operator==(const CropAnchor&, const CropAnchor&) = default;
};

/// Uniform anchor over all valid positions; consumes the generator.
CropAnchor random_anchor(int h, int w, int ch, int cw, std::mt19937_64& rng);

template <typename T>
std::pair<Tensor<T>, CropAnchor> random_crop(const Tensor<T>& x, int ch, int cw,
                                             std::mt19937_64& rng);

}  // namespace txsp::kernels
