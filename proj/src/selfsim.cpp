#include "txsp/selfsim.hpp"

#include <algorithm>

namespace txsp {
namespace {

void check_features(const Shape& s) {
  require_nonempty(s, "selfsim");
  require(s.h % 2 == 0 && s.w % 2 == 0,
          "selfsim: feature extents must be even, got " + s.str());
}

// Overlap energy A and squared-difference energy N = A - 2B + D for every
// shift, per batch item, in double.
struct Energies {
  Tensord a;    // [N,1,H+1,W+1]
  Tensord num;  // [N,1,H+1,W+1], clamped at 0
};

template <typename T>
Energies energies(const Tensor<T>& f) {
  const int H = f.h(), W = f.w(), C = f.c();
  const int hh = H / 2, hw = W / 2;
  const Shape map_shape{f.n(), 1, H + 1, W + 1};
  Energies e{Tensord(map_shape), Tensord(map_shape)};
  const ConvSpec padded{1, PaddingMode::zero(hh, hh, hw, hw)};

  for (int n = 0; n < f.n(); ++n) {
    const Tensord item = f.item(n).template cast<double>();
    // N only involves differences of shifted copies, so it is computed from
    // per-channel centred features. Post-ReLU maps carry a large common offset
    // and A - 2B + D would otherwise cancel most of its digits.
    Tensord centred = item;
    for (int c = 0; c < C; ++c) {
      double mean = 0;
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) mean += item(0, c, i, j);
      mean /= static_cast<double>(H) * W;
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) centred(0, c, i, j) -= mean;
    }

    // Summed-area tables of the squared channel norm, so the energy of any
    // overlap rectangle costs four lookups.
    auto table = [&](const Tensord& x) {
      std::vector<double> sat(static_cast<std::size_t>(H + 1) * (W + 1), 0.0);
      auto at = [&](int i, int j) -> double& { return sat[static_cast<std::size_t>(i) * (W + 1) + j]; };
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          double v = 0;
          for (int c = 0; c < C; ++c) v += x(0, c, i, j) * x(0, c, i, j);
          at(i + 1, j + 1) = v + at(i, j + 1) + at(i + 1, j) - at(i, j);
        }
      return sat;
    };
    const std::vector<double> raw = table(item), cen = table(centred);
    auto box = [&](const std::vector<double>& sat, int r0, int r1, int c0, int c1) {
      r0 = std::max(r0, 0), c0 = std::max(c0, 0), r1 = std::min(r1, H), c1 = std::min(c1, W);
      if (r0 >= r1 || c0 >= c1) return 0.0;
      auto at = [&](int i, int j) { return sat[static_cast<std::size_t>(i) * (W + 1) + j]; };
      return at(r1, c1) - at(r0, c1) - at(r1, c0) + at(r0, c0);
    };

    // F as a [1,C,H,W] filter: cross-correlation is symmetric in the shift.
    const Tensord B = kernels::conv2d(centred, centred, nullptr, padded);
    for (int a = 0; a <= H; ++a)
      for (int b = 0; b <= W; ++b) {
        // A covers F(m) over the overlap, D covers the shifted copy.
        const int r0 = a - hh, c0 = b - hw;
        const double av = box(raw, r0, r0 + H, c0, c0 + W);
        const double nv = (a == hh && b == hw)
                              ? 0.0
                              : std::max(0.0, box(cen, r0, r0 + H, c0, c0 + W) - 2.0 * B(0, 0, a, b) +
                                                  box(cen, -r0, H - r0, -c0, W - c0));
        e.a(n, 0, a, b) = av;
        e.num(n, 0, a, b) = nv;
      }
  }
  return e;
}

double score(double a, double num) { return a == 0.0 ? 0.0 : -num / (a + kSelfSimEpsilon); }

}  // namespace

template <typename T>
SelfSimMap<T> selfsim_fast(const Tensor<T>& f) {
  check_features(f.shape());
  const Energies e = energies(f);
  Tensor<T> s(e.a.shape());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<T>(score(e.a[i], e.num[i]));
  return {std::move(s), f.h(), f.w()};
}

template <typename T>
ad::Var<T> selfsim(const ad::Var<T>& features) {
  const Tensor<T>& f = features.value();
  check_features(f.shape());
  Energies e = energies(f);
  Tensor<T> s(e.a.shape());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<T>(score(e.a[i], e.num[i]));

  return ad::detail::record<T>(
      "selfsim", std::move(s), {features}, [e = std::move(e)](ad::detail::Node<T>& self) {
        ad::detail::Node<T>& fn = *self.inputs[0];
        const Tensor<T>& F = fn.value;
        const int N = F.n(), C = F.c(), H = F.h(), W = F.w();
        const int hh = H / 2, hw = W / 2;
        Tensor<T> dF(F.shape());
        const int planes = N * C;
#pragma omp parallel
        {
          std::vector<double> acc(static_cast<std::size_t>(H) * W);
#pragma omp for schedule(static)
          for (int pl = 0; pl < planes; ++pl) {
            const int n = pl / C, c = pl % C;
            std::fill(acc.begin(), acc.end(), 0.0);
            const T* x = F.plane(n, c);
            for (int a = 0; a <= H; ++a)
              for (int b = 0; b <= W; ++b) {
                const double A = e.a(n, 0, a, b);
                if (A == 0.0 || (a == hh && b == hw)) continue;
                const double g = self.grad(n, 0, a, b);
                if (g == 0.0) continue;
                const double den = A + kSelfSimEpsilon;
                const double num = e.num(n, 0, a, b);
                const double k_diff = -2.0 * g / den;         // on (F(m) - F(m - shift))
                const double k_self = 2.0 * g * num / (den * den);  // on F(m) via A
                const int p = a - hh, q = b - hw;
                for (int m = std::max(0, p); m < std::min(p + H, H); ++m)
                  for (int k = std::max(0, q); k < std::min(q + W, W); ++k) {
                    const double v = x[m * W + k];
                    const double u = x[(m - p) * W + (k - q)];
                    const double d = v - u;
                    acc[m * W + k] += k_diff * d + k_self * v;
                    acc[(m - p) * W + (k - q)] -= k_diff * d;
                  }
              }
            T* dst = dF.plane(n, c);
            for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<T>(acc[i]);
          }
        }
        ad::detail::accumulate(fn, std::move(dF));
      });
}

template <typename T>
std::vector<SelfSimMap<T>> selfsim_multiscale(const std::vector<Tensor<T>>& features) {
  std::vector<SelfSimMap<T>> maps;
  maps.reserve(features.size());
  for (const auto& f : features) maps.push_back(selfsim_fast(f));
  return maps;
}

template <typename T>
ad::Var<T> selfsim_transform(const ad::Var<T>& map, const ad::Var<T>& conv1_w,
                             const ad::Var<T>& conv1_b, const ad::Var<T>& conv2_w,
                             const ad::Var<T>& conv2_b) {
  const ConvSpec same{1, PaddingMode::partial(1)};
  ad::Var<T> h = ad::relu(ad::conv2d(map, conv1_w, std::optional(conv1_b), same));
  return ad::conv2d(h, conv2_w, std::optional(conv2_b), same);
}

template <typename T>
Tensor<T> selfsim_transform(const Tensor<T>& map, const SimTransformParams<T>& params) {
  return selfsim_transform(ad::constant(map), ad::constant(params.conv1_w),
                           ad::constant(params.conv1_b), ad::constant(params.conv2_w),
                           ad::constant(params.conv2_b))
      .value();
}

#define TXSP_INSTANTIATE(T)                                                                  \
  template SelfSimMap<T> selfsim_fast(const Tensor<T>&);                                    \
  template ad::Var<T> selfsim(const ad::Var<T>&);                                           \
  template std::vector<SelfSimMap<T>> selfsim_multiscale(const std::vector<Tensor<T>>&);    \
  template ad::Var<T> selfsim_transform(const ad::Var<T>&, const ad::Var<T>&,               \
                                        const ad::Var<T>&, const ad::Var<T>&,               \
                                        const ad::Var<T>&);                                 \
  template Tensor<T> selfsim_transform(const Tensor<T>&, const SimTransformParams<T>&);

TXSP_INSTANTIATE(float)
TXSP_INSTANTIATE(double)
#undef TXSP_INSTANTIATE

}  // namespace txsp
