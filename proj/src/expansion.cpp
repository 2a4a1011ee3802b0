#include "txsp/expansion.hpp"

namespace txsp {

template <typename T>
Tensor<T> expand_via_transposed_conv(const Tensor<T>& features, const Tensor<T>& scores) {
  require_nonempty(features.shape(), "expand_via_transposed_conv");
  const int H = features.h(), W = features.w();
  require(H % 2 == 0 && W % 2 == 0, "expand_via_transposed_conv: feature extents must be even");
  require(scores.n() == features.n() && scores.c() == 1 && scores.h() == H + 1 &&
              scores.w() == W + 1,
          "expand_via_transposed_conv: score map " + scores.shape().str() +
              " does not match features " + features.shape().str());
  return kernels::batched_transposed_conv(scores, features);
}

template <typename T>
ad::Var<T> expand(const ad::Var<T>& features, const ad::Var<T>& map) {
  return ad::batched_transposed_conv(map, features);
}

std::vector<ParamSpec> transconv_block_layout(const std::string& prefix, int channels) {
  const int c = channels;
  return {
      {prefix + ".filter_conv1.weight", {c, c, 3, 3}},
      {prefix + ".filter_conv1.bias", {1, c, 1, 1}},
      {prefix + ".filter_conv2.weight", {c, c, 3, 3}},
      {prefix + ".filter_conv2.bias", {1, c, 1, 1}},
      {prefix + ".bias_fc.weight", {c, c, 1, 1}},
      {prefix + ".bias_fc.bias", {1, c, 1, 1}},
      {prefix + ".sim_conv1.weight", {8, 1, 3, 3}},
      {prefix + ".sim_conv1.bias", {1, 8, 1, 1}},
      {prefix + ".sim_conv2.weight", {1, 8, 3, 3}},
      {prefix + ".sim_conv2.bias", {1, 1, 1, 1}},
      {prefix + ".output_conv.weight", {c, c, 3, 3}},
      {prefix + ".output_conv.bias", {1, c, 1, 1}},
  };
}

template <typename T>
ad::Var<T> transconv_block_forward(Binder<T>& p, const std::string& prefix,
                                   const ad::Var<T>& encoded, const ad::Var<T>& sim_or_noise) {
  const ConvSpec same{1, PaddingMode::partial(1)};
  auto conv = [&](const ad::Var<T>& x, const std::string& name) {
    return ad::conv2d(x, p(prefix + "." + name + ".weight"),
                      std::optional(p(prefix + "." + name + ".bias")), same);
  };

  ad::Var<T> filter = conv(ad::relu(conv(encoded, "filter_conv1")), "filter_conv2");
  ad::Var<T> input = selfsim_transform(sim_or_noise, p(prefix + ".sim_conv1.weight"),
                                       p(prefix + ".sim_conv1.bias"),
                                       p(prefix + ".sim_conv2.weight"),
                                       p(prefix + ".sim_conv2.bias"));
  ad::Var<T> bias = ad::conv2d(ad::avg_pool_global(encoded), p(prefix + ".bias_fc.weight"),
                               std::optional(p(prefix + ".bias_fc.bias")), ConvSpec{});
  ad::Var<T> expanded = ad::add_channel_bias(expand(filter, input), bias);
  return ad::relu(conv(expanded, "output_conv"));
}

template <typename T>
std::array<Tensor<T>, 3> make_noise_maps(int n5h, int n5w, std::mt19937_64& rng, int batch) {
  require(n5h >= 1 && n5w >= 1 && batch >= 1, "make_noise_maps: sizes must be positive");
  Tensor<T> base = Tensor<T>::randn(Shape{batch, 1, n5h, n5w}, rng);
  Tensor<T> mid = kernels::bilinear_upsample(base, 2 * n5h - 1, 2 * n5w - 1);
  Tensor<T> fine = kernels::bilinear_upsample(base, 4 * n5h - 3, 4 * n5w - 3);
  return {std::move(base), std::move(mid), std::move(fine)};
}

#define TXSP_INSTANTIATE(T)                                                                    \
  template Tensor<T> expand_via_transposed_conv(const Tensor<T>&, const Tensor<T>&);          \
  template ad::Var<T> expand(const ad::Var<T>&, const ad::Var<T>&);                           \
  template ad::Var<T> transconv_block_forward(Binder<T>&, const std::string&,                 \
                                              const ad::Var<T>&, const ad::Var<T>&);          \
  template std::array<Tensor<T>, 3> make_noise_maps(int, int, std::mt19937_64&, int);

TXSP_INSTANTIATE(float)
TXSP_INSTANTIATE(double)
#undef TXSP_INSTANTIATE

}  // namespace txsp
