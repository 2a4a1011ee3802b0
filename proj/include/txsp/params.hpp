#pragma once

#include <map>
#include <string>
#include <vector>

#include "txsp/autodiff.hpp"

namespace txsp {

/// Ordered collection of named tensors. Buffers (batch-norm running
/// statistics) are stored alongside parameters but never receive gradients.
template <typename T>
class ParamSet {
 public:
  void add(const std::string& name, Tensor<T> value, bool trainable = true);

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  Tensor<T>& at(const std::string& name);
  const Tensor<T>& at(const std::string& name) const;
  bool trainable(const std::string& name) const;

  /// Names in insertion order.
  const std::vector<std::string>& names() const noexcept { return order_; }
  std::size_t size() const noexcept { return order_.size(); }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& n : order_) out.add(n, tensors_.at(n).template cast<U>(), trainable(n));
    return out;
  }

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<std::string> order_;
  std::map<std::string, Tensor<T>> tensors_;
  std::map<std::string, bool> trainable_;
};

/// Name, extents and role of one tensor in a model layout.
struct ParamSpec {
  std::string name;
  Shape shape;
  bool trainable = true;
};

/// Checks that `params` holds exactly the names of `layout` with matching
/// extents; throws ArchiveError naming the first offending tensor.
template <typename T>
void validate_layout(const ParamSet<T>& params, const std::vector<ParamSpec>& layout);

/// Binds parameters into a forward pass. With a tape, trainable parameters
/// become leaves whose gradients can be read after backward; without one
/// everything is a constant.
template <typename T>
class Binder {
 public:
  Binder(ParamSet<T>& params, ad::Tape<T>* tape, bool train)
      : params_(params), tape_(tape), train_(train) {}

  ad::Var<T> operator()(const std::string& name);
  /// Binds `name` to an existing value instead of the stored tensor.
  void set(const std::string& name, ad::Var<T> value) { bound_[name] = std::move(value); }
  Tensor<T>& buffer(const std::string& name) { return params_.at(name); }
  bool train() const noexcept { return train_; }

  /// Gradients of every bound leaf, keyed by name. Leaves that received no
  /// gradient map to an empty tensor.
  std::map<std::string, Tensor<T>> gradients() const;
  const std::map<std::string, ad::Var<T>>& bound() const noexcept { return bound_; }

 private:
  ParamSet<T>& params_;
  ad::Tape<T>* tape_;
  bool train_;
  std::map<std::string, ad::Var<T>> bound_;
};

}  // namespace txsp
