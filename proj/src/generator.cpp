#include "txsp/generator.hpp"

#include <cmath>
#include <random>

namespace txsp {
namespace {

const char* const kEncoder[] = {"enc.conv1",   "enc.conv2_1", "enc.conv2_2", "enc.conv3_1",
                                "enc.conv3_2", "enc.conv4_1", "enc.conv4_2", "enc.conv5_1",
                                "enc.conv5_2"};

struct EncLayer {
  int cin, cout, stride;
};

std::array<EncLayer, 9> encoder_layers(const GeneratorConfig& cfg) {
  const auto w = cfg.widths();
  return {{{3, w[0], 1},
           {w[0], w[1], 2},
           {w[1], w[1], 1},
           {w[1], w[2], 2},
           {w[2], w[2], 1},
           {w[2], w[3], 2},
           {w[3], w[3], 1},
           {w[3], w[4], 2},
           {w[4], w[4], 1}}};
}

struct DecLayer {
  const char* name;
  int cin, cout;
};

std::array<DecLayer, 4> decoder_bn_layers(const GeneratorConfig& cfg) {
  const auto w = cfg.widths();
  return {{{"dec.conv6", w[4], w[3]},
           {"dec.conv7", w[3], w[2]},
           {"dec.conv8", w[2], w[1]},
           {"dec.conv9", w[1], w[0]}}};
}

void add_conv_bn(std::vector<ParamSpec>& out, const std::string& name, int cin, int cout) {
  out.push_back({name + ".weight", {cout, cin, 3, 3}});
  out.push_back({name + ".bn.gamma", {1, cout, 1, 1}});
  out.push_back({name + ".bn.beta", {1, cout, 1, 1}});
  out.push_back({name + ".bn.running_mean", {1, cout, 1, 1}, false});
  out.push_back({name + ".bn.running_var", {1, cout, 1, 1}, false});
}

template <typename T>
ad::Var<T> conv_bn_relu(Binder<T>& p, const GeneratorConfig& cfg, const std::string& name,
                        const ad::Var<T>& x, int stride) {
  const ConvSpec spec{stride, PaddingMode::partial(1)};
  ad::Var<T> y = ad::conv2d(x, p(name + ".weight"), std::optional<ad::Var<T>>{}, spec);
  kernels::BatchNormOptions opt{p.train(), cfg.bn_momentum, cfg.bn_eps};
  y = ad::batch_norm(y, p(name + ".bn.gamma"), p(name + ".bn.beta"),
                     p.buffer(name + ".bn.running_mean"), p.buffer(name + ".bn.running_var"), opt);
  return ad::relu(y);
}

template <typename T>
void check_finite(const ad::Var<T>& v) {
  for (T x : v.value().data())
    if (!std::isfinite(static_cast<double>(x)))
      throw NumericError("generator produced a non-finite activation");
}

template <typename T>
ad::Var<T> decode(Binder<T>& p, const GeneratorConfig& cfg, const std::array<ad::Var<T>, 5>& feats,
                  const std::array<ad::Var<T>, 3>& maps) {
  // maps: 1/4, 1/8, 1/16
  ad::Var<T> b3 = transconv_block_forward(p, "block3", feats[2], maps[0]);
  ad::Var<T> b4 = transconv_block_forward(p, "block4", feats[3], maps[1]);
  ad::Var<T> b5 = transconv_block_forward(p, "block5", feats[4], maps[2]);

  ad::Var<T> x = conv_bn_relu(p, cfg, "dec.conv6", ad::upsample2x(b5), 1);
  x = ad::add(x, b4);
  x = conv_bn_relu(p, cfg, "dec.conv7", ad::upsample2x(x), 1);
  x = ad::add(x, b3);
  x = conv_bn_relu(p, cfg, "dec.conv8", ad::upsample2x(x), 1);
  x = conv_bn_relu(p, cfg, "dec.conv9", ad::upsample2x(x), 1);
  x = ad::conv2d(x, p("dec.conv10.weight"), std::optional(p("dec.conv10.bias")),
                 ConvSpec{1, PaddingMode::partial(1)});
  check_finite(x);
  return x;
}

}  // namespace

std::array<int, 5> GeneratorConfig::widths() const {
  std::array<int, 5> w{};
  for (int i = 0; i < 5; ++i)
    w[i] = std::max(1, static_cast<int>(std::lround(base_width * width_multiplier * (1 << i))));
  return w;
}

void check_input_dims(const GeneratorConfig& cfg, int h, int w) {
  const int d = cfg.input_dims_divisor;
  if (h < d || w < d || h % d != 0 || w % d != 0)
    throw ShapeError("input " + std::to_string(h) + "x" + std::to_string(w) +
                     " must be a positive multiple of " + std::to_string(d) + " per axis");
}

std::vector<ParamSpec> generator_layout(const GeneratorConfig& cfg) {
  std::vector<ParamSpec> out;
  const auto enc = encoder_layers(cfg);
  for (std::size_t i = 0; i < enc.size(); ++i) add_conv_bn(out, kEncoder[i], enc[i].cin, enc[i].cout);
  const auto w = cfg.widths();
  for (const auto& [prefix, c] : {std::pair{"block3", w[2]}, {"block4", w[3]}, {"block5", w[4]}}) {
    auto block = transconv_block_layout(prefix, c);
    out.insert(out.end(), block.begin(), block.end());
  }
  for (const auto& d : decoder_bn_layers(cfg)) add_conv_bn(out, d.name, d.cin, d.cout);
  out.push_back({"dec.conv10.weight", {3, w[0], 3, 3}});
  out.push_back({"dec.conv10.bias", {1, 3, 1, 1}});
  return out;
}

template <typename T>
ParamSet<T> init_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamSet<T> params;
  for (const auto& spec : generator_layout(cfg)) {
    const std::string& n = spec.name;
    auto ends_with = [&](const char* suffix) {
      const std::string s(suffix);
      return n.size() >= s.size() && n.compare(n.size() - s.size(), s.size(), s) == 0;
    };
    Tensor<T> t(spec.shape);
    if (ends_with(".weight")) {
      // He-normal over fan-in.
      const double fan_in = static_cast<double>(spec.shape.c) * spec.shape.h * spec.shape.w;
      t = Tensor<T>::randn(spec.shape, rng, static_cast<T>(std::sqrt(2.0 / fan_in)));
    } else if (ends_with(".gamma") || ends_with(".running_var")) {
      t = Tensor<T>(spec.shape, T(1));
    }
    params.add(n, std::move(t), spec.trainable);
  }
  return params;
}

template <typename T>
std::array<ad::Var<T>, 5> encoder_forward(Binder<T>& p, const GeneratorConfig& cfg,
                                          const ad::Var<T>& img) {
  const Shape s = img.shape();
  require(s.c == 3, "encoder expects 3-channel images, got " + s.str());
  check_input_dims(cfg, s.h, s.w);
  const auto enc = encoder_layers(cfg);
  std::array<ad::Var<T>, 5> feats;
  ad::Var<T> x = img;
  for (std::size_t i = 0; i < enc.size(); ++i) {
    x = conv_bn_relu(p, cfg, kEncoder[i], x, enc[i].stride);
    if (i % 2 == 0) feats[i / 2] = x;
  }
  return feats;
}

template <typename T>
ad::Var<T> generator_forward(Binder<T>& p, const GeneratorConfig& cfg, const ad::Var<T>& img) {
  const auto feats = encoder_forward(p, cfg, img);
  std::array<ad::Var<T>, 3> maps{selfsim(feats[2]), selfsim(feats[3]), selfsim(feats[4])};
  return decode(p, cfg, feats, maps);
}

template <typename T>
ad::Var<T> generator_forward_noise(Binder<T>& p, const GeneratorConfig& cfg,
                                   const ad::Var<T>& img, const std::array<Tensor<T>, 3>& noise) {
  const auto feats = encoder_forward(p, cfg, img);
  for (const auto& m : noise)
    require(m.n() == img.shape().n && m.c() == 1,
            "noise map " + m.shape().str() + " does not match batch of " + img.shape().str());
  std::array<ad::Var<T>, 3> maps{ad::constant(noise[2]), ad::constant(noise[1]),
                                 ad::constant(noise[0])};
  return decode(p, cfg, feats, maps);
}

template <typename T>
ad::Var<T> synthesize_4x(Binder<T>& p, const GeneratorConfig& cfg, const ad::Var<T>& img) {
  return generator_forward(p, cfg, generator_forward(p, cfg, img));
}

template <typename T>
Tensor<T> synthesize(ParamSet<T>& weights, const GeneratorConfig& cfg, const Tensor<T>& img,
                     int factor) {
  require(factor == 2 || factor == 4, "self-similarity synthesis supports factors 2 and 4 only");
  Binder<T> p(weights, nullptr, false);
  ad::Var<T> x = ad::constant(img);
  return (factor == 2 ? generator_forward(p, cfg, x) : synthesize_4x(p, cfg, x)).value();
}

template <typename T>
Tensor<T> synthesize_noise(ParamSet<T>& weights, const GeneratorConfig& cfg, const Tensor<T>& img,
                           const std::array<Tensor<T>, 3>& noise) {
  Binder<T> p(weights, nullptr, false);
  return generator_forward_noise(p, cfg, ad::constant(img), noise).value();
}

#define TXSP_INSTANTIATE(T)                                                                      \
  template ParamSet<T> init_generator(const GeneratorConfig&, std::uint64_t);                   \
  template std::array<ad::Var<T>, 5> encoder_forward(Binder<T>&, const GeneratorConfig&,        \
                                                     const ad::Var<T>&);                        \
  template ad::Var<T> generator_forward(Binder<T>&, const GeneratorConfig&, const ad::Var<T>&); \
  template ad::Var<T> generator_forward_noise(Binder<T>&, const GeneratorConfig&,               \
                                              const ad::Var<T>&, const std::array<Tensor<T>, 3>&); \
  template ad::Var<T> synthesize_4x(Binder<T>&, const GeneratorConfig&, const ad::Var<T>&);     \
  template Tensor<T> synthesize(ParamSet<T>&, const GeneratorConfig&, const Tensor<T>&, int);   \
  template Tensor<T> synthesize_noise(ParamSet<T>&, const GeneratorConfig&, const Tensor<T>&,   \
                                     const std::array<Tensor<T>, 3>&);

TXSP_INSTANTIATE(float)
TXSP_INSTANTIATE(double)
#undef TXSP_INSTANTIATE

}  // namespace txsp
