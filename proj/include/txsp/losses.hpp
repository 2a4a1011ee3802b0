#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "txsp/params.hpp"
#include "txsp/ops.hpp"

namespace txsp {

/// Fixed feature pyramid used by the perceptual and style losses. Gradients
/// flow to the input image; the extractor weights never change.
template <typename T>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<ad::Var<T>> features(const ad::Var<T>& img) const = 0;
  virtual std::string id() const = 0;
};

/// Levels of stride-2 3x3 conv (zero pad 1) + ReLU with frozen weights drawn
/// from N(0, 1/fan_in). Named "ext.level{i}.weight".
template <typename T>
class RandomPyramidExtractor final : public FeatureExtractor<T> {
 public:
  static std::vector<int> default_channels() { return {8, 16, 32, 64, 64}; }

  explicit RandomPyramidExtractor(std::uint64_t seed,
                                  std::vector<int> channels = default_channels(),
                                  int in_channels = 3);
  /// External weights with the same naming (e.g. loaded from an archive).
  RandomPyramidExtractor(ParamSet<T> weights, std::vector<int> channels, std::uint64_t seed = 0);

  std::vector<ad::Var<T>> features(const ad::Var<T>& img) const override;
  std::string id() const override;

  static std::vector<ParamSpec> layout(const std::vector<int>& channels, int in_channels = 3);
  const ParamSet<T>& weights() const noexcept { return weights_; }
  const std::vector<int>& channels() const noexcept { return channels_; }

 private:
  std::vector<int> channels_;
  std::uint64_t seed_ = 0;
  ParamSet<T> weights_;
};

/// sum_p mean |psi_p(out) - psi_p(target)|
template <typename T>
ad::Var<T> perceptual_loss(const ad::Var<T>& out, const ad::Var<T>& target,
                           const FeatureExtractor<T>& ext);

/// Per item psi^T psi over the (H W) x C feature matrix, shaped [N,1,C,C].
template <typename T>
ad::Var<T> gram_matrix(const ad::Var<T>& psi) {
  return ad::gram(psi);
}

/// sum_p (1/C_p^2) || (Gram_p(out) - Gram_p(target)) / (C_p H_p W_p) ||_1,
/// averaged over the batch.
template <typename T>
ad::Var<T> style_loss(const ad::Var<T>& out, const ad::Var<T>& target,
                      const FeatureExtractor<T>& ext);

// ------------------------------------------------------------ discriminator

struct DiscriminatorConfig {
  int ndf = 16;
  int in_channels = 6;
  /// Stride-2 4x4 layers before the final stride-1 4x4 projection.
  int layers = 4;
  /// Copies at successively halved input resolution; logits from every scale
  /// enter the loss.
  int num_scales = 1;
  double slope = 0.2;
};

/// "disc{s}.conv{i}.weight/.bias" for s < num_scales, i = 1..layers+1.
std::vector<ParamSpec> discriminator_layout(const DiscriminatorConfig& cfg);

template <typename T>
ParamSet<T> init_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed);

/// pair[N,in_channels,H,W] -> one patch-logit map per scale. Zero padding 2,
/// no normalisation, leaky ReLU after every stride-2 layer.
template <typename T>
std::vector<ad::Var<T>> discriminator_forward(Binder<T>& params, const DiscriminatorConfig& cfg,
                                              const ad::Var<T>& pair);

/// Anchors for one step: `count` crops of the generator output, then `count`
/// crops of the target, drawn in that order from the step generator. Each
/// anchor is shared across the batch.
struct GanCrops {
  std::vector<kernels::CropAnchor> fake;
  std::vector<kernels::CropAnchor> real;
};

GanCrops sample_gan_crops(int h, int w, int crop_h, int crop_w, int count, std::mt19937_64& rng);

/// Least-squares discriminator objective on detached fakes:
/// mean over crops and patches of 0.5 [(D(real) - 1)^2 + D(fake)^2].
template <typename T>
ad::Var<T> gan_d_loss(Binder<T>& disc, const DiscriminatorConfig& cfg, const Tensor<T>& out,
                      const Tensor<T>& target, const Tensor<T>& input, const GanCrops& crops);

/// Generator objective: mean over crops and patches of (D(fake) - 1)^2.
/// Gradients reach `out`; bind `disc` without a tape to hold D fixed.
template <typename T>
ad::Var<T> gan_g_loss(Binder<T>& disc, const DiscriminatorConfig& cfg, const ad::Var<T>& out,
                      const Tensor<T>& input, const GanCrops& crops);

struct GanValues {
  double gan_g = 0;
  double gan_d = 0;
};

/// Both objectives evaluated with fixed weights, crops drawn from `rng`.
template <typename T>
GanValues gan_losses(const Tensor<T>& out, const Tensor<T>& target, const Tensor<T>& input,
                     ParamSet<T>& disc, const DiscriminatorConfig& cfg, std::mt19937_64& rng,
                     int count = 10);

// ------------------------------------------------------------ totals

struct LossWeights {
  double perceptual = 0.05;
  double style = 120.0;
  double gan = 0.2;
};

struct LossReport {
  double perceptual = 0;
  double style = 0;
  double gan_g = 0;
  double gan_d = 0;
  double total = 0;
};

/// Generator-side weighted sum.
inline double total_loss(double perceptual, double style, double gan_g, const LossWeights& w) {
  return w.perceptual * perceptual + w.style * style + w.gan * gan_g;
}

template <typename T>
ad::Var<T> total_loss(const ad::Var<T>& perceptual, const ad::Var<T>& style,
                      const ad::Var<T>& gan_g, const LossWeights& w) {
  return ad::add(ad::add(ad::scale(perceptual, w.perceptual), ad::scale(style, w.style)),
                 ad::scale(gan_g, w.gan));
}

}  // namespace txsp
