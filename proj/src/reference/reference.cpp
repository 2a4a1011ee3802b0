#include "txsp/reference.hpp"

#include <algorithm>
#include <vector>

#include "txsp/selfsim.hpp"

namespace txsp::reference {

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::type_identity_t<const Tensor<T>*> bias,
                 const ConvSpec& spec) {
  require_nonempty(x.shape(), "reference::conv2d");
  require_nonempty(w.shape(), "reference::conv2d");
  require(w.c() == x.c(), "reference::conv2d: channel mismatch");
  const auto& p = spec.padding;
  const int oh = (x.h() + p.top + p.bottom - w.h()) / spec.stride + 1;
  const int ow = (x.w() + p.left + p.right - w.w()) / spec.stride + 1;
  require(x.h() + p.top + p.bottom >= w.h() && x.w() + p.left + p.right >= w.w(),
          "reference::conv2d: kernel does not fit");
  Tensor<T> y(Shape{x.n(), w.n(), oh, ow});
  for (int n = 0; n < x.n(); ++n)
    for (int co = 0; co < w.n(); ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = 0;
          int valid = 0;
          for (int ky = 0; ky < w.h(); ++ky)
            for (int kx = 0; kx < w.w(); ++kx) {
              const int iy = oy * spec.stride - p.top + ky;
              const int ix = ox * spec.stride - p.left + kx;
              if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
              ++valid;
              for (int ci = 0; ci < x.c(); ++ci)
                acc += double(x(n, ci, iy, ix)) * double(w(co, ci, ky, kx));
            }
          if (p.kind == PaddingMode::Kind::PartialZero)
            acc = valid == 0 ? 0.0 : acc * (double(w.h() * w.w()) / valid);
          if (bias) acc += double((*bias)[co]);
          y(n, co, oy, ox) = static_cast<T>(acc);
        }
  return y;
}

template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& x, const Tensor<T>& w, std::type_identity_t<const Tensor<T>*> bias) {
  require_nonempty(x.shape(), "reference::transposed_conv2d");
  require(w.n() == x.c(), "reference::transposed_conv2d: channel mismatch");
  const Shape os{x.n(), w.c(), x.h() + w.h() - 1, x.w() + w.w() - 1};
  std::vector<double> acc(os.count(), 0.0);
  auto at = [&](int n, int c, int i, int j) -> double& {
    return acc[((static_cast<std::size_t>(n) * os.c + c) * os.h + i) * os.w + j];
  };
  for (int n = 0; n < x.n(); ++n)
    for (int ci = 0; ci < x.c(); ++ci)
      for (int i = 0; i < x.h(); ++i)
        for (int j = 0; j < x.w(); ++j)
          for (int co = 0; co < w.c(); ++co)
            for (int di = 0; di < w.h(); ++di)
              for (int dj = 0; dj < w.w(); ++dj)
                at(n, co, i + di, j + dj) += double(x(n, ci, i, j)) * double(w(ci, co, di, dj));
  Tensor<T> y(os);
  for (int n = 0; n < os.n; ++n)
    for (int co = 0; co < os.c; ++co)
      for (int i = 0; i < os.h; ++i)
        for (int j = 0; j < os.w; ++j)
          y(n, co, i, j) = static_cast<T>(at(n, co, i, j) + (bias ? double((*bias)[co]) : 0.0));
  return y;
}

template <typename T>
Tensor<T> selfsim_naive(const Tensor<T>& f) {
  require_nonempty(f.shape(), "selfsim_naive");
  const int H = f.h(), W = f.w();
  require(H % 2 == 0 && W % 2 == 0, "selfsim_naive: feature extents must be even, got " +
                                        f.shape().str());
  Tensor<T> s(Shape{f.n(), 1, H + 1, W + 1});
  for (int n = 0; n < f.n(); ++n)
    for (int p = -H / 2; p <= H / 2; ++p)
      for (int q = -W / 2; q <= W / 2; ++q) {
        double num = 0, den = 0;
        for (int m = std::max(0, p); m < std::min(p + H, H); ++m)
          for (int k = std::max(0, q); k < std::min(q + W, W); ++k)
            for (int c = 0; c < f.c(); ++c) {
              const double a = f(n, c, m, k);
              const double b = f(n, c, m - p, k - q);
              num += (a - b) * (a - b);
              den += a * a;
            }
        const double score = den == 0.0 ? 0.0 : -num / (den + kSelfSimEpsilon);
        s(n, 0, p + H / 2, q + W / 2) = static_cast<T>(score);
      }
  return s;
}

template <typename T>
Tensor<T> paste_accumulate(const Tensor<T>& f, const Tensor<T>& s) {
  require_nonempty(f.shape(), "paste_accumulate");
  const int H = f.h(), W = f.w();
  require(H % 2 == 0 && W % 2 == 0, "paste_accumulate: feature extents must be even");
  require(s.n() == f.n() && s.c() == 1 && s.h() == H + 1 && s.w() == W + 1,
          "paste_accumulate: score map " + s.shape().str() + " does not match features " +
              f.shape().str());
  const Shape os{f.n(), f.c(), 2 * H, 2 * W};
  std::vector<double> g(os.count(), 0.0);
  for (int n = 0; n < f.n(); ++n)
    for (int p = -H / 2; p <= H / 2; ++p)
      for (int q = -W / 2; q <= W / 2; ++q) {
        const double score = s(n, 0, p + H / 2, q + W / 2);
        for (int c = 0; c < f.c(); ++c)
          for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
              const int gi = i + p + H / 2, gj = j + q + W / 2;
              g[((static_cast<std::size_t>(n) * os.c + c) * os.h + gi) * os.w + gj] +=
                  score * double(f(n, c, i, j));
            }
      }
  Tensor<T> out(os);
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = static_cast<T>(g[i]);
  return out;
}

#define TXSP_INSTANTIATE(T)                                                                      \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,                \
                            const ConvSpec&);                                                    \
  template Tensor<T> transposed_conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);   \
  template Tensor<T> selfsim_naive(const Tensor<T>&);                                           \
  template Tensor<T> paste_accumulate(const Tensor<T>&, const Tensor<T>&);

TXSP_INSTANTIATE(float)
TXSP_INSTANTIATE(double)
#undef TXSP_INSTANTIATE

}  // namespace txsp::reference
