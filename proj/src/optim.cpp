#include "txsp/optim.hpp"

#include <cmath>

namespace txsp {

template <typename T>
void Optimizer<T>::step(ParamSet<T>& params, const std::map<std::string, Tensor<T>>& grads,
                        double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& name : params.names()) {
    if (!params.trainable(name)) continue;
    auto it = grads.find(name);
    if (it == grads.end() || it->second.empty()) continue;
    Tensor<T>& p = params.at(name);
    const Tensor<T>& g = it->second;
    require(g.shape() == p.shape(), "optimizer: gradient of '" + name + "' has dims " +
                                        g.shape().str() + ", expected " + p.shape().str());
    if (kind_ == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= static_cast<T>(lr * g[i]);
      continue;
    }
    auto [mi, fresh_m] = m_.try_emplace(name, p.shape());
    auto [vi, fresh_v] = v_.try_emplace(name, p.shape());
    Tensor<T>& m = mi->second;
    Tensor<T>& v = vi->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mn = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      const double vn = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      m[i] = static_cast<T>(mn);
      v[i] = static_cast<T>(vn);
      p[i] -= static_cast<T>(lr * (mn / bc1) / (std::sqrt(vn / bc2) + cfg_.eps));
    }
  }
}

template <typename T>
ParamSet<T> Optimizer<T>::state() const {
  ParamSet<T> s;
  for (const auto& [name, t] : m_) s.add("m." + name, t, false);
  for (const auto& [name, t] : v_) s.add("v." + name, t, false);
  return s;
}

template <typename T>
void Optimizer<T>::load_state(const ParamSet<T>& state, long long steps) {
  m_.clear();
  v_.clear();
  for (const auto& name : state.names()) {
    if (name.rfind("m.", 0) == 0)
      m_.emplace(name.substr(2), state.at(name));
    else if (name.rfind("v.", 0) == 0)
      v_.emplace(name.substr(2), state.at(name));
    else
      throw ArchiveError("unexpected optimizer tensor '" + name + "'");
  }
  t_ = steps;
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd") return OptimizerKind::Sgd;
  throw ConfigError("train.optimizer", "expected 'adam' or 'sgd', got '" + s + "'");
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace txsp
