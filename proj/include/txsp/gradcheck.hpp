#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "txsp/autodiff.hpp"

namespace txsp::ad {

struct ParamCheck {
  std::string name;
  double max_rel_error = 0;
  std::size_t coords_checked = 0;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double step = 0;
  double tol = 0;
  bool pass = false;

  double max_rel_error() const {
    double m = 0;
    for (const auto& p : params) m = std::max(m, p.max_rel_error);
    return m;
  }
};

struct GradCheckOptions {
  double step = 1e-3;
  double tol = 1e-4;
  /// Tensors larger than this are checked on a random subset of this many
  /// coordinates.
  std::size_t max_coords = 64;
  std::uint64_t seed = 0;
};

using NamedParams = std::vector<std::pair<std::string, Tensord>>;

/// Coordinates of a tensor of `n` entries visited by grad_check: all of
/// them, or a random subset of `max_coords`. Consumes `rng`.
inline std::vector<std::size_t> sample_coords(std::size_t n, std::size_t max_coords,
                                              std::mt19937_64& rng) {
  std::vector<std::size_t> coords(n);
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (coords.size() > max_coords) {
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coords);
  }
  return coords;
}
using ScalarFn = std::function<Var<double>(const std::vector<Var<double>>&)>;

/// Compares reverse-mode gradients of the scalar `f` against central
/// differences (f(p+h) - f(p-h)) / 2h, with relative error
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
inline GradCheckReport grad_check(const ScalarFn& f, NamedParams params,
                                  const GradCheckOptions& opt = {}) {
  auto check_finite = [](double v, const char* what) {
    if (!std::isfinite(v)) throw NumericError(std::string("grad_check: non-finite ") + what);
  };

  std::vector<Tensord> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    for (auto& [name, t] : params) leaves.push_back(tape.leaf(t));
    Var<double> out = f(leaves);
    if (out.value().size() != 1) throw ShapeError("grad_check: f must return a scalar");
    check_finite(out.value()[0], "function value");
    tape.backward(out);
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      const Tensord& g = leaves[i].grad();
      analytic.push_back(g.empty() ? Tensord(params[i].second.shape()) : g);
    }
  }

  auto eval = [&]() {
    std::vector<Var<double>> consts;
    consts.reserve(params.size());
    for (auto& [name, t] : params) consts.push_back(constant(t));
    const double v = f(consts).value()[0];
    check_finite(v, "function value");
    return v;
  };

  GradCheckReport report;
  report.step = opt.step;
  report.tol = opt.tol;
  std::mt19937_64 rng(opt.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensord& p = params[pi].second;
    const std::vector<std::size_t> coords = sample_coords(p.size(), opt.max_coords, rng);
    ParamCheck pc{params[pi].first, 0.0, coords.size()};
    for (std::size_t idx : coords) {
      const double orig = p[idx];
      p[idx] = orig + opt.step;
      const double fp = eval();
      p[idx] = orig - opt.step;
      const double fm = eval();
      p[idx] = orig;
      const double numeric = (fp - fm) / (2 * opt.step);
      const double a = analytic[pi][idx];
      check_finite(a, "analytic gradient");
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      pc.max_rel_error = std::max(pc.max_rel_error, rel);
    }
    report.params.push_back(pc);
  }
  report.pass = report.max_rel_error() <= opt.tol;
  return report;
}

}  // namespace txsp::ad
