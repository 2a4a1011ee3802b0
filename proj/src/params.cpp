#include "txsp/params.hpp"

#include <set>

namespace txsp {

template <typename T>
void ParamSet<T>::add(const std::string& name, Tensor<T> value, bool trainable) {
  if (tensors_.count(name)) throw ArchiveError("duplicate tensor name '" + name + "'");
  order_.push_back(name);
  tensors_.emplace(name, std::move(value));
  trainable_[name] = trainable;
}

template <typename T>
Tensor<T>& ParamSet<T>::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ArchiveError("missing tensor '" + name + "'");
  return it->second;
}

template <typename T>
const Tensor<T>& ParamSet<T>::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ArchiveError("missing tensor '" + name + "'");
  return it->second;
}

template <typename T>
bool ParamSet<T>::trainable(const std::string& name) const {
  auto it = trainable_.find(name);
  if (it == trainable_.end()) throw ArchiveError("missing tensor '" + name + "'");
  return it->second;
}

template <typename T>
void validate_layout(const ParamSet<T>& params, const std::vector<ParamSpec>& layout) {
  std::set<std::string> expected;
  for (const auto& spec : layout) {
    expected.insert(spec.name);
    if (!params.contains(spec.name)) throw ArchiveError("missing tensor '" + spec.name + "'");
    const Shape got = params.at(spec.name).shape();
    if (got != spec.shape)
      throw ArchiveError("tensor '" + spec.name + "' has dims " + got.str() + ", expected " +
                         spec.shape.str());
  }
  for (const auto& name : params.names())
    if (!expected.count(name)) throw ArchiveError("unexpected tensor '" + name + "'");
}

template <typename T>
ad::Var<T> Binder<T>::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const Tensor<T>& value = params_.at(name);
  ad::Var<T> v = (tape_ && params_.trainable(name)) ? tape_->leaf(value) : ad::constant(value);
  bound_.emplace(name, v);
  return v;
}

template <typename T>
std::map<std::string, Tensor<T>> Binder<T>::gradients() const {
  std::map<std::string, Tensor<T>> out;
  for (const auto& [name, v] : bound_)
    if (v.requires_grad()) out.emplace(name, v.grad());
  return out;
}

template class ParamSet<float>;
template class ParamSet<double>;
template class Binder<float>;
template class Binder<double>;
template void validate_layout(const ParamSet<float>&, const std::vector<ParamSpec>&);
template void validate_layout(const ParamSet<double>&, const std::vector<ParamSpec>&);

}  // namespace txsp
