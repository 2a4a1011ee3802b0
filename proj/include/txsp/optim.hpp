#pragma once

#include <map>
#include <string>

#include "txsp/params.hpp"

namespace txsp {

enum class OptimizerKind { Adam, Sgd };

struct AdamConfig {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First-order optimizer over the trainable tensors of a ParamSet. Moment
/// buffers are created lazily per name and are part of the saved state.
template <typename T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerKind kind = OptimizerKind::Adam, AdamConfig cfg = {})
      : kind_(kind), cfg_(cfg) {}

  /// Applies one update with learning rate `lr`. Names missing from `grads`
  /// or holding an empty gradient are left untouched.
  void step(ParamSet<T>& params, const std::map<std::string, Tensor<T>>& grads, double lr);

  OptimizerKind kind() const noexcept { return kind_; }
  const AdamConfig& config() const noexcept { return cfg_; }
  long long steps() const noexcept { return t_; }

  /// Moment buffers as "m.<name>" / "v.<name>" for serialization.
  ParamSet<T> state() const;
  void load_state(const ParamSet<T>& state, long long steps);

 private:
  OptimizerKind kind_;
  AdamConfig cfg_;
  long long t_ = 0;
  std::map<std::string, Tensor<T>> m_, v_;
};

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

}  // namespace txsp
