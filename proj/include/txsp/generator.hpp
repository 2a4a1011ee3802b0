#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "txsp/expansion.hpp"

namespace txsp {

enum class SynthesisMode { SelfSim, Noise };

struct GeneratorConfig {
  int base_width = 64;
  /// Desk default shrinks the 64..1024 stage widths to 16..256.
  double width_multiplier = 0.25;
  int input_dims_divisor = 32;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  /// Channel widths of the five encoder stages (scales 1, 1/2, ..., 1/16).
  std::array<int, 5> widths() const;
};

/// Every tensor of the generator in archive order: encoder Conv1..Conv5_2 with
/// batch-norm parameters and running statistics, expansion blocks 3..5,
/// decoder Conv6..Conv10.
std::vector<ParamSpec> generator_layout(const GeneratorConfig& cfg);

template <typename T>
ParamSet<T> init_generator(const GeneratorConfig& cfg, std::uint64_t seed);

/// Encoder features at scales 1, 1/2, 1/4, 1/8, 1/16.
template <typename T>
std::array<ad::Var<T>, 5> encoder_forward(Binder<T>& params, const GeneratorConfig& cfg,
                                          const ad::Var<T>& img);

/// img[N,3,H,W] -> [N,3,2H,2W] guided by self-similarity maps. H and W must be
/// divisible by cfg.input_dims_divisor.
template <typename T>
ad::Var<T> generator_forward(Binder<T>& params, const GeneratorConfig& cfg,
                             const ad::Var<T>& img);

/// Same network with the score maps replaced by noise maps ordered as
/// make_noise_maps returns them (1/16, 1/8, 1/4). Output extent per axis is
/// 16 * n5 + H - 16.
template <typename T>
ad::Var<T> generator_forward_noise(Binder<T>& params, const GeneratorConfig& cfg,
                                   const ad::Var<T>& img, const std::array<Tensor<T>, 3>& noise);

/// Two chained 2x passes. The intermediate image must itself satisfy the
/// divisibility requirement.
template <typename T>
ad::Var<T> synthesize_4x(Binder<T>& params, const GeneratorConfig& cfg, const ad::Var<T>& img);

/// Inference helpers over constant weights (eval-mode batch norm).
template <typename T>
Tensor<T> synthesize(ParamSet<T>& weights, const GeneratorConfig& cfg, const Tensor<T>& img,
                     int factor = 2);

template <typename T>
Tensor<T> synthesize_noise(ParamSet<T>& weights, const GeneratorConfig& cfg, const Tensor<T>& img,
                           const std::array<Tensor<T>, 3>& noise);

void check_input_dims(const GeneratorConfig& cfg, int h, int w);

}  // namespace txsp
