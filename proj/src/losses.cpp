#include "txsp/losses.hpp"

#include <cmath>
#include <sstream>

namespace txsp {
namespace {

std::string level_name(std::size_t i) { return "ext.level" + std::to_string(i + 1) + ".weight"; }

void check_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": " + a.str() + " vs " + b.str());
}

std::string disc_name(int scale, int layer, const char* what) {
  return "disc" + std::to_string(scale) + ".conv" + std::to_string(layer) + "." + what;
}

template <typename T>
ad::Var<T> pair_batch(const Tensor<T>& input, const std::vector<ad::Var<T>>& crops) {
  const ad::Var<T> in = ad::constant(input);
  std::vector<ad::Var<T>> pairs;
  pairs.reserve(crops.size());
  for (const auto& c : crops) pairs.push_back(ad::concat_channels(in, c));
  return ad::concat_batch(pairs);
}

template <typename T>
std::vector<ad::Var<T>> crops_of(const ad::Var<T>& img, const std::vector<kernels::CropAnchor>& at,
                                 int ch, int cw) {
  std::vector<ad::Var<T>> out;
  out.reserve(at.size());
  for (const auto& a : at) out.push_back(ad::crop(img, a.top, a.left, ch, cw));
  return out;
}

// mean((x - target)^2) summed over discriminator scales.
template <typename T>
ad::Var<T> lsgan_term(const std::vector<ad::Var<T>>& logits, double target) {
  ad::Var<T> acc;
  for (const auto& l : logits) {
    ad::Var<T> term = ad::mean(ad::square(ad::add_scalar(l, -target)));
    acc = acc.defined() ? ad::add(acc, term) : term;
  }
  return acc;
}

}  // namespace

// ------------------------------------------------------------ extractor

template <typename T>
RandomPyramidExtractor<T>::RandomPyramidExtractor(std::uint64_t seed, std::vector<int> channels,
                                                  int in_channels)
    : channels_(std::move(channels)), seed_(seed) {
  std::mt19937_64 rng(seed);
  for (const auto& spec : layout(channels_, in_channels)) {
    const double fan_in = static_cast<double>(spec.shape.c) * spec.shape.h * spec.shape.w;
    weights_.add(spec.name,
                 Tensor<T>::randn(spec.shape, rng, static_cast<T>(1.0 / std::sqrt(fan_in))),
                 false);
  }
}

template <typename T>
RandomPyramidExtractor<T>::RandomPyramidExtractor(ParamSet<T> weights, std::vector<int> channels,
                                                  std::uint64_t seed)
    : channels_(std::move(channels)), seed_(seed), weights_(std::move(weights)) {
  const int in_channels = weights_.contains(level_name(0)) ? weights_.at(level_name(0)).c() : 3;
  validate_layout(weights_, layout(channels_, in_channels));
}

template <typename T>
std::vector<ParamSpec> RandomPyramidExtractor<T>::layout(const std::vector<int>& channels,
                                                         int in_channels) {
  std::vector<ParamSpec> out;
  int cin = in_channels;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    out.push_back({level_name(i), {channels[i], cin, 3, 3}, false});
    cin = channels[i];
  }
  return out;
}

template <typename T>
std::vector<ad::Var<T>> RandomPyramidExtractor<T>::features(const ad::Var<T>& img) const {
  std::vector<ad::Var<T>> out;
  out.reserve(channels_.size());
  ad::Var<T> x = img;
  const ConvSpec spec{2, PaddingMode::zero(1)};
  for (std::size_t i = 0; i < channels_.size(); ++i) {
    x = ad::relu(ad::conv2d(x, ad::constant(weights_.at(level_name(i))),
                            std::optional<ad::Var<T>>{}, spec));
    out.push_back(x);
  }
  return out;
}

template <typename T>
std::string RandomPyramidExtractor<T>::id() const {
  std::ostringstream os;
  os << "random-pyramid";
  for (int c : channels_) os << '-' << c;
  os << "-seed" << seed_;
  return os.str();
}

// ------------------------------------------------------------ image losses

template <typename T>
ad::Var<T> perceptual_loss(const ad::Var<T>& out, const ad::Var<T>& target,
                           const FeatureExtractor<T>& ext) {
  check_same(out.shape(), target.shape(), "perceptual_loss");
  const auto fo = ext.features(out);
  const auto ft = ext.features(target);
  ad::Var<T> acc;
  for (std::size_t p = 0; p < fo.size(); ++p) {
    const double count = static_cast<double>(ft[p].value().size());
    ad::Var<T> term = ad::scale(ad::abs_sum(ad::sub(fo[p], ft[p])), 1.0 / count);
    acc = acc.defined() ? ad::add(acc, term) : term;
  }
  return acc;
}

template <typename T>
ad::Var<T> style_loss(const ad::Var<T>& out, const ad::Var<T>& target,
                      const FeatureExtractor<T>& ext) {
  check_same(out.shape(), target.shape(), "style_loss");
  const auto fo = ext.features(out);
  const auto ft = ext.features(target);
  ad::Var<T> acc;
  for (std::size_t p = 0; p < fo.size(); ++p) {
    const Shape s = fo[p].shape();
    const double c = s.c;
    const double k = 1.0 / (c * s.h * s.w);
    ad::Var<T> diff = ad::sub(gram_matrix(fo[p]), gram_matrix(ft[p]));
    ad::Var<T> term = ad::scale(ad::abs_sum(diff), k / (c * c) / s.n);
    acc = acc.defined() ? ad::add(acc, term) : term;
  }
  return acc;
}

// ------------------------------------------------------------ discriminator

std::vector<ParamSpec> discriminator_layout(const DiscriminatorConfig& cfg) {
  std::vector<ParamSpec> out;
  for (int s = 0; s < cfg.num_scales; ++s) {
    int cin = cfg.in_channels;
    for (int i = 1; i <= cfg.layers + 1; ++i) {
      const int cout = i <= cfg.layers ? cfg.ndf * (1 << (i - 1)) : 1;
      out.push_back({disc_name(s, i, "weight"), {cout, cin, 4, 4}});
      out.push_back({disc_name(s, i, "bias"), {1, cout, 1, 1}});
      cin = cout;
    }
  }
  return out;
}

template <typename T>
ParamSet<T> init_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamSet<T> params;
  for (const auto& spec : discriminator_layout(cfg)) {
    Tensor<T> t(spec.shape);
    if (spec.shape.h > 1) t = Tensor<T>::randn(spec.shape, rng, T(0.02));
    params.add(spec.name, std::move(t));
  }
  return params;
}

template <typename T>
std::vector<ad::Var<T>> discriminator_forward(Binder<T>& p, const DiscriminatorConfig& cfg,
                                              const ad::Var<T>& pair) {
  require(pair.shape().c == cfg.in_channels,
          "discriminator expects " + std::to_string(cfg.in_channels) + " channels, got " +
              pair.shape().str());
  std::vector<ad::Var<T>> logits;
  ad::Var<T> input = pair;
  for (int s = 0; s < cfg.num_scales; ++s) {
    if (s > 0) {
      const Shape sh = input.shape();
      input = ad::bilinear_upsample(input, std::max(1, sh.h / 2), std::max(1, sh.w / 2));
    }
    ad::Var<T> x = input;
    for (int i = 1; i <= cfg.layers + 1; ++i) {
      const int stride = i <= cfg.layers ? 2 : 1;
      x = ad::conv2d(x, p(disc_name(s, i, "weight")), std::optional(p(disc_name(s, i, "bias"))),
                     ConvSpec{stride, PaddingMode::zero(2)});
      if (i <= cfg.layers) x = ad::leaky_relu(x, cfg.slope);
    }
    logits.push_back(x);
  }
  return logits;
}

GanCrops sample_gan_crops(int h, int w, int crop_h, int crop_w, int count, std::mt19937_64& rng) {
  require(count >= 1, "sample_gan_crops: count must be positive");
  GanCrops c;
  for (int i = 0; i < count; ++i) c.fake.push_back(kernels::random_anchor(h, w, crop_h, crop_w, rng));
  for (int i = 0; i < count; ++i) c.real.push_back(kernels::random_anchor(h, w, crop_h, crop_w, rng));
  return c;
}

template <typename T>
ad::Var<T> gan_d_loss(Binder<T>& disc, const DiscriminatorConfig& cfg, const Tensor<T>& out,
                      const Tensor<T>& target, const Tensor<T>& input, const GanCrops& crops) {
  check_same(out.shape(), target.shape(), "gan_d_loss");
  const int ch = input.h(), cw = input.w();
  const auto fake = crops_of(ad::constant(out), crops.fake, ch, cw);
  const auto real = crops_of(ad::constant(target), crops.real, ch, cw);
  ad::Var<T> lf = lsgan_term(discriminator_forward(disc, cfg, pair_batch(input, fake)), 0.0);
  ad::Var<T> lr = lsgan_term(discriminator_forward(disc, cfg, pair_batch(input, real)), 1.0);
  return ad::scale(ad::add(lr, lf), 0.5);
}

template <typename T>
ad::Var<T> gan_g_loss(Binder<T>& disc, const DiscriminatorConfig& cfg, const ad::Var<T>& out,
                      const Tensor<T>& input, const GanCrops& crops) {
  const auto fake = crops_of(out, crops.fake, input.h(), input.w());
  return lsgan_term(discriminator_forward(disc, cfg, pair_batch(input, fake)), 1.0);
}

template <typename T>
GanValues gan_losses(const Tensor<T>& out, const Tensor<T>& target, const Tensor<T>& input,
                     ParamSet<T>& disc, const DiscriminatorConfig& cfg, std::mt19937_64& rng,
                     int count) {
  const GanCrops crops = sample_gan_crops(out.h(), out.w(), input.h(), input.w(), count, rng);
  Binder<T> b(disc, nullptr, false);
  GanValues v;
  v.gan_d = gan_d_loss(b, cfg, out, target, input, crops).value()[0];
  v.gan_g = gan_g_loss(b, cfg, ad::constant(out), input, crops).value()[0];
  return v;
}

#define TXSP_INSTANTIATE(T)                                                                       \
  template class RandomPyramidExtractor<T>;                                                      \
  template ad::Var<T> perceptual_loss(const ad::Var<T>&, const ad::Var<T>&,                      \
                                      const FeatureExtractor<T>&);                               \
  template ad::Var<T> style_loss(const ad::Var<T>&, const ad::Var<T>&, const FeatureExtractor<T>&); \
  template ParamSet<T> init_discriminator(const DiscriminatorConfig&, std::uint64_t);            \
  template std::vector<ad::Var<T>> discriminator_forward(Binder<T>&, const DiscriminatorConfig&, \
                                                         const ad::Var<T>&);                     \
  template ad::Var<T> gan_d_loss(Binder<T>&, const DiscriminatorConfig&, const Tensor<T>&,       \
                                 const Tensor<T>&, const Tensor<T>&, const GanCrops&);           \
  template ad::Var<T> gan_g_loss(Binder<T>&, const DiscriminatorConfig&, const ad::Var<T>&,      \
                                 const Tensor<T>&, const GanCrops&);                             \
  template GanValues gan_losses(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,            \
                                ParamSet<T>&, const DiscriminatorConfig&, std::mt19937_64&, int);

TXSP_INSTANTIATE(float)
TXSP_INSTANTIATE(double)
#undef TXSP_INSTANTIATE

}  // namespace txsp
